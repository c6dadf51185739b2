"""Deterministic SVG rendering of chart specs.

The output is a small SVG 1.1 subset assembled from strings with fixed
number formatting, so the same spec always produces identical bytes. The
only text nodes a chart may contain are the title, axis labels, tick
labels, category labels, and legend entries; data marks never carry text.

Geometry contract: a value v on an axis maps linearly onto the plot
region, pixel = bottom - (v - min) / (max - min) * height, and for radar
charts onto ring radius. Marks carry data-series / data-point / data-axis
attributes so the mapping can be inverted from the document alone.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .chart_model import AxisSpec, ChartSpec, ChartType, box_stats, validate_spec
from .errors import ConfigError, InvalidSpecError
from .scales import format_tick, scatter_x_scale, tick_values, value_format_variants

WIDTH = 800
HEIGHT = 600
MARGIN_LEFT = 80
MARGIN_RIGHT = 40
MARGIN_RIGHT_SECONDARY = 80
MARGIN_TOP = 70
MARGIN_BOTTOM = 70

PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a45f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)


@dataclass(frozen=True)
class RenderedChart:
    svg_text: str
    width_px: int
    height_px: int
    spec_id: str


def _px(v: float) -> str:
    return f"{v:.3f}"


def palette_for(spec: ChartSpec) -> list[str]:
    start = spec.style_seed % len(PALETTE)
    return [PALETTE[(start + i) % len(PALETTE)] for i in range(len(spec.series))]


class _Frame:
    """Plot-region geometry shared by all cartesian chart types."""

    def __init__(self, spec: ChartSpec):
        right = MARGIN_RIGHT_SECONDARY if spec.y_axis_secondary else MARGIN_RIGHT
        self.x0 = float(MARGIN_LEFT)
        self.x1 = float(WIDTH - right)
        self.y0 = float(MARGIN_TOP)
        self.y1 = float(HEIGHT - MARGIN_BOTTOM)
        self.w = self.x1 - self.x0
        self.h = self.y1 - self.y0

    def y_px(self, value: float, axis: AxisSpec) -> float:
        frac = (value - axis.min) / (axis.max - axis.min)
        return self.y1 - frac * self.h

    def x_px(self, value: float, x_min: float, x_max: float) -> float:
        frac = (value - x_min) / (x_max - x_min)
        return self.x0 + frac * self.w

    def slot_center(self, i: int, n: int) -> float:
        return self.x0 + (i + 0.5) * self.w / n


def render(spec: ChartSpec) -> RenderedChart:
    """Render a validated spec to SVG text; invalid specs are rejected."""
    violations = validate_spec(spec)
    if violations:
        raise InvalidSpecError(violations)

    body: list[str] = []
    body.append(f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
    if spec.title:
        body.append(
            f'<text class="title" x="{WIDTH // 2}" y="32" text-anchor="middle" '
            f'font-size="18">{escape(spec.title)}</text>'
        )

    if spec.chart_type is ChartType.RADAR:
        body.extend(_render_radar(spec))
    else:
        body.extend(_render_cartesian(spec))

    body.extend(_legend(spec))

    svg = "\n".join(
        [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" data-spec-id={quoteattr(spec.id)}>',
            *body,
            "</svg>",
        ]
    ) + "\n"
    return RenderedChart(svg_text=svg, width_px=WIDTH, height_px=HEIGHT, spec_id=spec.id)


def _axis_title(axis: AxisSpec) -> str:
    return f"{axis.label} ({axis.unit})" if axis.unit else axis.label


def _render_cartesian(spec: ChartSpec) -> list[str]:
    f = _Frame(spec)
    axis = spec.y_axis
    out: list[str] = []

    # Horizontal gridlines and left tick labels at every primary tick.
    for t in tick_values(axis.min, axis.max, axis.tick_interval):
        y = f.y_px(t, axis)
        out.append(
            f'<line class="gridline" x1="{_px(f.x0)}" y1="{_px(y)}" '
            f'x2="{_px(f.x1)}" y2="{_px(y)}" stroke="#dddddd"/>'
        )
        out.append(
            f'<text class="tick-label" x="{_px(f.x0 - 8)}" y="{_px(y + 4)}" '
            f'text-anchor="end" font-size="12">{escape(format_tick(t))}</text>'
        )
    out.append(
        f'<text class="axis-label" x="{_px(f.x0)}" y="{_px(f.y0 - 12)}" '
        f'font-size="12">{escape(_axis_title(axis))}</text>'
    )

    if spec.y_axis_secondary is not None:
        sec = spec.y_axis_secondary
        for t in tick_values(sec.min, sec.max, sec.tick_interval):
            y = f.y_px(t, sec)
            out.append(
                f'<text class="tick-label" x="{_px(f.x1 + 8)}" y="{_px(y + 4)}" '
                f'text-anchor="start" font-size="12">{escape(format_tick(t))}</text>'
            )
        out.append(
            f'<text class="axis-label" x="{_px(f.x1)}" y="{_px(f.y0 - 12)}" '
            f'text-anchor="end" font-size="12">{escape(_axis_title(sec))}</text>'
        )

    if spec.chart_type is ChartType.SCATTER:
        out.extend(_scatter_x_axis(spec, f))

    out.append(
        f'<rect class="plot-area" x="{_px(f.x0)}" y="{_px(f.y0)}" '
        f'width="{_px(f.w)}" height="{_px(f.h)}" fill="none" stroke="#333333"/>'
    )

    if spec.chart_type in CATEGORY_LABELED_TYPES:
        for i, cat in enumerate(spec.x_categories):
            cx = f.slot_center(i, len(spec.x_categories))
            out.append(
                f'<text class="category-label" x="{_px(cx)}" y="{_px(f.y1 + 20)}" '
                f'text-anchor="middle" font-size="12">{escape(cat)}</text>'
            )
    elif spec.chart_type is ChartType.BOX:
        for i, s in enumerate(spec.series):
            cx = f.slot_center(i, len(spec.series))
            out.append(
                f'<text class="category-label" x="{_px(cx)}" y="{_px(f.y1 + 20)}" '
                f'text-anchor="middle" font-size="12">{escape(s.name)}</text>'
            )

    colors = palette_for(spec)
    draw = {
        ChartType.BAR: _draw_bars,
        ChartType.LINE: _draw_lines,
        ChartType.AREA: _draw_areas,
        ChartType.COMBO: _draw_combo,
        ChartType.SCATTER: _draw_scatter,
        ChartType.BOX: _draw_boxes,
    }[spec.chart_type]
    out.extend(draw(spec, f, colors))
    return out


CATEGORY_LABELED_TYPES = frozenset({ChartType.BAR, ChartType.LINE, ChartType.AREA, ChartType.COMBO})


def _scatter_x_axis(spec: ChartSpec, f: _Frame) -> list[str]:
    xs = [x for s in spec.series for x, _ in s.points]
    x_min, x_max, ticks = scatter_x_scale(xs)
    out = []
    for t in ticks:
        x = f.x_px(t, x_min, x_max)
        out.append(
            f'<line class="gridline" x1="{_px(x)}" y1="{_px(f.y0)}" '
            f'x2="{_px(x)}" y2="{_px(f.y1)}" stroke="#dddddd"/>'
        )
        out.append(
            f'<text class="tick-label" x="{_px(x)}" y="{_px(f.y1 + 18)}" '
            f'text-anchor="middle" font-size="12">{escape(format_tick(t))}</text>'
        )
    return out


def _mark_attrs(si: int, pi: int, axis_kind: str) -> str:
    return f'data-series="{si}" data-point="{pi}" data-axis="{axis_kind}"'


def _draw_bars(spec: ChartSpec, f: _Frame, colors, series_subset=None) -> list[str]:
    series = series_subset if series_subset is not None else list(enumerate(spec.series))
    n_cats = len(spec.x_categories)
    slot_w = f.w / n_cats
    group_w = slot_w * 0.8
    bar_w = group_w / len(series)
    out = []
    for gi, (si, s) in enumerate(series):
        for pi, (_, v) in enumerate(s.points):
            top = f.y_px(v, spec.series_axis(s))
            x = f.x0 + pi * slot_w + (slot_w - group_w) / 2 + gi * bar_w
            out.append(
                f'<rect class="mark mark-bar" {_mark_attrs(si, pi, "primary")} '
                f'x="{_px(x)}" y="{_px(top)}" width="{_px(bar_w)}" '
                f'height="{_px(f.y1 - top)}" fill="{colors[si]}"/>'
            )
    return out


def _polyline_points(spec: ChartSpec, s, f: _Frame) -> str:
    axis = spec.series_axis(s)
    n = len(spec.x_categories)
    coords = []
    for pi, (_, v) in enumerate(s.points):
        coords.append(f"{_px(f.slot_center(pi, n))},{_px(f.y_px(v, axis))}")
    return " ".join(coords)


def _draw_line_series(spec: ChartSpec, si: int, s, f: _Frame, color: str) -> list[str]:
    axis = spec.series_axis(s)
    axis_kind = "secondary" if axis is spec.y_axis_secondary else "primary"
    out = [
        f'<polyline class="mark mark-line" data-series="{si}" '
        f'points="{_polyline_points(spec, s, f)}" fill="none" stroke="{color}" stroke-width="2"/>'
    ]
    n = len(spec.x_categories)
    for pi, (_, v) in enumerate(s.points):
        out.append(
            f'<circle class="mark mark-point" {_mark_attrs(si, pi, axis_kind)} '
            f'cx="{_px(f.slot_center(pi, n))}" cy="{_px(f.y_px(v, axis))}" r="3" fill="{color}"/>'
        )
    return out


def _draw_lines(spec: ChartSpec, f: _Frame, colors) -> list[str]:
    out = []
    for si, s in enumerate(spec.series):
        out.extend(_draw_line_series(spec, si, s, f, colors[si]))
    return out


def _draw_areas(spec: ChartSpec, f: _Frame, colors) -> list[str]:
    out = []
    axis = spec.y_axis
    n = len(spec.x_categories)
    for si, s in enumerate(spec.series):
        pts = _polyline_points(spec, s, f)
        base_left = f"{_px(f.slot_center(0, n))},{_px(f.y1)}"
        base_right = f"{_px(f.slot_center(n - 1, n))},{_px(f.y1)}"
        out.append(
            f'<polygon class="mark mark-area" data-series="{si}" '
            f'points="{base_left} {pts} {base_right}" fill="{colors[si]}" fill-opacity="0.55"/>'
        )
        for pi, (_, v) in enumerate(s.points):
            out.append(
                f'<circle class="mark mark-point" {_mark_attrs(si, pi, "primary")} '
                f'cx="{_px(f.slot_center(pi, n))}" cy="{_px(f.y_px(v, axis))}" r="2.5" fill="{colors[si]}"/>'
            )
    return out


def _draw_combo(spec: ChartSpec, f: _Frame, colors) -> list[str]:
    bars = [(si, s) for si, s in enumerate(spec.series) if s.mark == "bar"]
    out = _draw_bars(spec, f, colors, series_subset=bars)
    for si, s in enumerate(spec.series):
        if s.mark == "line":
            out.extend(_draw_line_series(spec, si, s, f, colors[si]))
    return out


def _draw_scatter(spec: ChartSpec, f: _Frame, colors) -> list[str]:
    xs = [x for s in spec.series for x, _ in s.points]
    x_min, x_max, _ = scatter_x_scale(xs)
    out = []
    for si, s in enumerate(spec.series):
        for pi, (x, v) in enumerate(s.points):
            out.append(
                f'<circle class="mark mark-point" {_mark_attrs(si, pi, "primary")} '
                f'cx="{_px(f.x_px(x, x_min, x_max))}" cy="{_px(f.y_px(v, spec.y_axis))}" '
                f'r="4" fill="{colors[si]}"/>'
            )
    return out


def _draw_boxes(spec: ChartSpec, f: _Frame, colors) -> list[str]:
    axis = spec.y_axis
    n = len(spec.series)
    slot_w = f.w / n
    box_w = slot_w * 0.5
    out = []
    for si, s in enumerate(spec.series):
        stats = box_stats([v for _, v in s.points])
        cx = f.slot_center(si, n)
        x_left = cx - box_w / 2
        y_q1 = f.y_px(stats["lower quartile"], axis)
        y_q3 = f.y_px(stats["upper quartile"], axis)
        y_med = f.y_px(stats["median"], axis)
        y_lo = f.y_px(stats["lower whisker"], axis)
        y_hi = f.y_px(stats["upper whisker"], axis)
        color = colors[si]
        out.append(
            f'<line class="mark mark-box-whisker" data-series="{si}" x1="{_px(cx)}" '
            f'y1="{_px(y_lo)}" x2="{_px(cx)}" y2="{_px(y_q1)}" stroke="{color}"/>'
        )
        out.append(
            f'<line class="mark mark-box-whisker" data-series="{si}" x1="{_px(cx)}" '
            f'y1="{_px(y_q3)}" x2="{_px(cx)}" y2="{_px(y_hi)}" stroke="{color}"/>'
        )
        for y_cap in (y_lo, y_hi):
            out.append(
                f'<line class="mark mark-box-cap" data-series="{si}" x1="{_px(cx - box_w / 4)}" '
                f'y1="{_px(y_cap)}" x2="{_px(cx + box_w / 4)}" y2="{_px(y_cap)}" stroke="{color}"/>'
            )
        out.append(
            f'<rect class="mark mark-box" data-series="{si}" x="{_px(x_left)}" y="{_px(y_q3)}" '
            f'width="{_px(box_w)}" height="{_px(y_q1 - y_q3)}" fill="{color}" '
            f'fill-opacity="0.45" stroke="{color}"/>'
        )
        out.append(
            f'<line class="mark mark-box-median" data-series="{si}" x1="{_px(x_left)}" '
            f'y1="{_px(y_med)}" x2="{_px(x_left + box_w)}" y2="{_px(y_med)}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
    return out


def _render_radar(spec: ChartSpec) -> list[str]:
    axis = spec.y_axis
    cx, cy = WIDTH / 2.0, (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0
    radius = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / 2.0 - 20
    n = len(spec.x_categories)
    ticks = tick_values(axis.min, axis.max, axis.tick_interval)

    import math

    def spoke_point(k: int, r: float) -> tuple[float, float]:
        ang = -math.pi / 2 + 2 * math.pi * k / n
        return cx + r * math.cos(ang), cy + r * math.sin(ang)

    def r_of(value: float) -> float:
        return (value - axis.min) / (axis.max - axis.min) * radius

    out = []
    for t in ticks:
        ring = " ".join(
            f"{_px(px)},{_px(py)}" for px, py in (spoke_point(k, r_of(t)) for k in range(n))
        )
        out.append(f'<polygon class="gridline" points="{ring}" fill="none" stroke="#dddddd"/>')
        out.append(
            f'<text class="tick-label" x="{_px(cx + 6)}" y="{_px(cy - r_of(t) + 4)}" '
            f'font-size="11">{escape(format_tick(t))}</text>'
        )
    for k, cat in enumerate(spec.x_categories):
        ex, ey = spoke_point(k, radius)
        out.append(
            f'<line class="spoke" x1="{_px(cx)}" y1="{_px(cy)}" x2="{_px(ex)}" y2="{_px(ey)}" '
            f'stroke="#bbbbbb"/>'
        )
        lx, ly = spoke_point(k, radius + 16)
        out.append(
            f'<text class="category-label" x="{_px(lx)}" y="{_px(ly + 4)}" '
            f'text-anchor="middle" font-size="12">{escape(cat)}</text>'
        )
    out.append(
        f'<text class="axis-label" x="{_px(cx)}" y="{_px(MARGIN_TOP - 12)}" '
        f'text-anchor="middle" font-size="12">{escape(_axis_title(axis))}</text>'
    )

    colors = palette_for(spec)
    for si, s in enumerate(spec.series):
        pts = []
        for pi, (_, v) in enumerate(s.points):
            px_, py_ = spoke_point(pi, r_of(v))
            pts.append(f"{_px(px_)},{_px(py_)}")
        out.append(
            f'<polygon class="mark mark-radar" data-series="{si}" points="{" ".join(pts)}" '
            f'fill="{colors[si]}" fill-opacity="0.30" stroke="{colors[si]}" stroke-width="2"/>'
        )
    return out


def _legend(spec: ChartSpec) -> list[str]:
    f = _Frame(spec)
    out = ['<g class="legend">']
    for i, s in enumerate(spec.series):
        y = f.y0 + 10 + i * 18
        color = palette_for(spec)[i]
        out.append(
            f'<rect class="legend-swatch" x="{_px(f.x1 - 150)}" y="{_px(y)}" '
            f'width="12" height="12" fill="{color}"/>'
        )
        out.append(
            f'<text class="legend-label" x="{_px(f.x1 - 132)}" y="{_px(y + 10)}" '
            f'font-size="12">{escape(s.name)}</text>'
        )
    out.append("</g>")
    return out


def extract_text_nodes(svg_text: str) -> list[str]:
    """Every human-readable text run in document order.

    Raises xml.etree.ElementTree.ParseError on malformed documents.
    """
    root = ET.fromstring(svg_text)
    nodes = []
    for elem in root.iter():
        tag = elem.tag.rsplit("}", 1)[-1]
        if tag == "text" and elem.text and elem.text.strip():
            nodes.append(elem.text.strip())
    return nodes


def annotation_leaks(spec: ChartSpec, rendered: RenderedChart) -> list[str]:
    """Text nodes that spell out a data value in any supported format."""
    texts = set(extract_text_nodes(rendered.svg_text))
    leaks = []
    for s in spec.series:
        for _, v in s.points:
            hits = value_format_variants(v) & texts
            leaks.extend(sorted(hits))
    return leaks


def render_meta(spec: ChartSpec, rendered: RenderedChart) -> dict:
    """Sidecar metadata written next to each SVG."""
    return {
        "spec_id": spec.id,
        "width_px": rendered.width_px,
        "height_px": rendered.height_px,
        "palette": palette_for(spec),
        "style_seed": spec.style_seed,
        "schema_version": "1",
    }


def export_raster(rendered: RenderedChart, out_path, converter=None) -> None:
    """Raster export hook; outside the determinism guarantees.

    ``converter`` is any callable(svg_text, out_path), e.g. a cairosvg
    wrapper. No default backend ships with the package.
    """
    if converter is None:
        raise ConfigError("no raster converter configured; pass converter=callable(svg_text, path)")
    converter(rendered.svg_text, Path(out_path))
