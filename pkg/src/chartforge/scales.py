"""Axis tick arithmetic and the number formats the audit recognises.

The sampler and the renderer both call into this module, so the tick
values a chart prints and the tick values the sampler steers clear of are
always the same floats.
"""

from __future__ import annotations

import math

# Tick interval mantissas, scaled by a power of ten. The easy set gives
# conventional round scales; the hard set forces interpolation between
# gridlines instead of tick reading.
EASY_TICK_MANTISSAS = (1.0, 2.0, 2.5, 5.0)
HARD_TICK_MANTISSAS = (3.0, 4.0, 6.0, 7.0, 15.0, 25.0)


def tick_values(axis_min: float, axis_max: float, tick_interval: float) -> list[float]:
    """All tick positions from min to max inclusive, with float noise snapped off."""
    n = int(round((axis_max - axis_min) / tick_interval))
    return [round(axis_min + i * tick_interval, 9) for i in range(n + 1)]


def format_tick(value: float) -> str:
    """Tick label: integers without a decimal point, otherwise shortest repr."""
    snapped = round(value, 9)
    if snapped == int(snapped):
        return str(int(snapped))
    return repr(snapped)


def format_number(value: float) -> str:
    """Decimal rendering used in question text and reports."""
    return format_tick(float(value))


def value_format_variants(value: float) -> set[str]:
    """Every exact textual rendering of ``value`` the audit treats as a leak.

    Only lossless renderings count: a text node reading "20" leaks the
    value 20.0 but not the value 20.3.
    """
    v = float(value)
    out = {repr(v)}
    if v == int(v):
        i = int(v)
        out.add(str(i))
        out.add(f"{i:,}")
        out.add(f"{i}.0")
    for nd in (1, 2, 3, 4):
        s = f"{v:.{nd}f}"
        if float(s) == v:
            out.add(s)
            out.add(f"{v:,.{nd}f}")
    out.add(f"{v:,}")
    out.update({f"{s}%" for s in list(out)})
    return out


def nice_ceil(x: float) -> float:
    """Smallest 1/2/2.5/5 x 10^k mantissa value >= x (x > 0)."""
    if x <= 0:
        raise ValueError("nice_ceil needs a positive input")
    exp = math.floor(math.log10(x))
    base = 10.0 ** exp
    for mant in (1.0, 2.0, 2.5, 5.0, 10.0):
        if mant * base >= x * (1 - 1e-12):
            return round(mant * base, 12)
    return round(10.0 * base, 12)


def scatter_x_scale(x_values: list[float]) -> tuple[float, float, list[float]]:
    """Deterministic x-axis scale for scatter charts: (min, max, ticks).

    The scale starts at 0 when all x are nonnegative (the common case for
    our sampler) and spans a nice interval grid that covers the data.
    """
    if not x_values:
        raise ValueError("scatter chart with no points")
    hi = max(x_values)
    lo = min(0.0, min(x_values))
    span = hi - lo
    if span <= 0:
        span = abs(hi) if hi else 1.0
    interval = nice_ceil(span / 8.0)
    x_min = math.floor(lo / interval) * interval
    n = 1
    while x_min + n * interval < hi - 1e-12:
        n += 1
    n = max(n, 2)
    x_max = round(x_min + n * interval, 9)
    return round(x_min, 9), x_max, tick_values(x_min, x_max, interval)
