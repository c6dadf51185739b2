"""Declarative chart specifications and seeded sampling.

A ChartSpec is the single source of truth for a synthetic chart: the
renderer draws it and the Q&A generator reads answers straight out of it.
Specs deliberately have no field for per-point value labels, so rendered
charts cannot print their own answers.

Sampling is a pure function of (seed, chart_type, topic, difficulty); the
same arguments always produce the same spec, byte for byte after
canonical serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .errors import ConfigError
from .rng import SeededRng, derive_seed
from .scales import (
    EASY_TICK_MANTISSAS,
    HARD_TICK_MANTISSAS,
    format_tick,
    scatter_x_scale,
    tick_values,
    value_format_variants,
)
from .serialize import canonical_dumps

SCHEMA_VERSION = "1"


class ChartType(str, Enum):
    BOX = "box"
    AREA = "area"
    RADAR = "radar"
    SCATTER = "scatter"
    BAR = "bar"
    LINE = "line"
    COMBO = "combo"


# Chart types whose x axis is a list of category labels rather than a
# numeric scale. Box charts position one box per series; scatter uses
# numeric x values.
CATEGORICAL_TYPES = frozenset(
    {ChartType.BAR, ChartType.LINE, ChartType.AREA, ChartType.RADAR, ChartType.COMBO}
)

VALID_MARKS = ("bar", "line", "point", "area-fill")

# Drawing primitive each chart type expects from its series.
_TYPE_MARKS = {
    ChartType.BAR: ("bar",),
    ChartType.LINE: ("line",),
    ChartType.AREA: ("area-fill",),
    ChartType.SCATTER: ("point",),
    ChartType.RADAR: ("line",),
    ChartType.BOX: ("bar",),
    ChartType.COMBO: ("bar", "line"),
}

PointKey = Union[str, float]


@dataclass(frozen=True)
class SeriesSpec:
    """One named series: ordered (category-or-x, y) points plus a mark."""

    name: str
    points: tuple[tuple[PointKey, float], ...]
    mark: str


@dataclass(frozen=True)
class AxisSpec:
    label: str
    min: float
    max: float
    tick_interval: float
    unit: Optional[str] = None


@dataclass(frozen=True)
class ChartSpec:
    id: str
    chart_type: ChartType
    topic: str
    title: str
    x_categories: tuple[str, ...]
    series: tuple[SeriesSpec, ...]
    y_axis: AxisSpec
    y_axis_secondary: Optional[AxisSpec] = None
    style_seed: int = 0

    def series_axis(self, s: SeriesSpec) -> AxisSpec:
        """Axis a series binds to: combo line series use the secondary axis."""
        if (
            self.chart_type is ChartType.COMBO
            and s.mark == "line"
            and self.y_axis_secondary is not None
        ):
            return self.y_axis_secondary
        return self.y_axis


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str


# ---------------------------------------------------------------------------
# Serialization (canonical JSON; see serialize.canonical_dumps)
# ---------------------------------------------------------------------------


def _axis_to_dict(axis: AxisSpec) -> dict:
    return {
        "label": axis.label,
        "min": float(axis.min),
        "max": float(axis.max),
        "tick_interval": float(axis.tick_interval),
        "unit": axis.unit,
    }


def _axis_from_dict(d: dict) -> AxisSpec:
    return AxisSpec(
        label=str(d["label"]),
        min=float(d["min"]),
        max=float(d["max"]),
        tick_interval=float(d["tick_interval"]),
        unit=d.get("unit"),
    )


def spec_to_dict(spec: ChartSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": spec.id,
        "chart_type": spec.chart_type.value,
        "topic": spec.topic,
        "title": spec.title,
        "x_categories": list(spec.x_categories),
        "series": [
            {
                "name": s.name,
                "mark": s.mark,
                "points": [[k, float(y)] for k, y in s.points],
            }
            for s in spec.series
        ],
        "y_axis": _axis_to_dict(spec.y_axis),
        "y_axis_secondary": (
            _axis_to_dict(spec.y_axis_secondary) if spec.y_axis_secondary else None
        ),
        "style_seed": int(spec.style_seed),
    }


def spec_from_dict(d: dict) -> ChartSpec:
    chart_type = ChartType(d["chart_type"])  # raises ValueError on unknown variants
    series = []
    for s in d["series"]:
        points = tuple(
            (k if isinstance(k, str) else float(k), float(y)) for k, y in s["points"]
        )
        series.append(SeriesSpec(name=str(s["name"]), points=points, mark=str(s["mark"])))
    secondary = d.get("y_axis_secondary")
    return ChartSpec(
        id=str(d["id"]),
        chart_type=chart_type,
        topic=str(d["topic"]),
        title=str(d["title"]),
        x_categories=tuple(str(c) for c in d["x_categories"]),
        series=tuple(series),
        y_axis=_axis_from_dict(d["y_axis"]),
        y_axis_secondary=_axis_from_dict(secondary) if secondary else None,
        style_seed=int(d.get("style_seed", 0)),
    )


def spec_dumps(spec: ChartSpec) -> str:
    return canonical_dumps(spec_to_dict(spec))


# ---------------------------------------------------------------------------
# Box statistics
# ---------------------------------------------------------------------------

BOX_STATISTICS = (
    "median",
    "lower quartile",
    "upper quartile",
    "lower whisker",
    "upper whisker",
)


def box_stats(values: list[float]) -> dict[str, float]:
    """Five-number summary as drawn by the renderer.

    Quartiles interpolate linearly between order statistics at position
    (n - 1) * p; whiskers sit on the most extreme data point within
    1.5 * IQR of the nearest quartile.
    """
    if len(values) < 5:
        raise ValueError("box statistics need at least 5 raw values")
    s = sorted(float(v) for v in values)
    n = len(s)

    def quantile(p: float) -> float:
        pos = (n - 1) * p
        lo = math.floor(pos)
        hi = math.ceil(pos)
        return s[lo] + (s[hi] - s[lo]) * (pos - lo)

    q1 = quantile(0.25)
    q3 = quantile(0.75)
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    return {
        "median": quantile(0.5),
        "lower quartile": q1,
        "upper quartile": q3,
        "lower whisker": min(v for v in s if v >= low_fence),
        "upper whisker": max(v for v in s if v <= high_fence),
    }


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_RANGE_EPS = 1e-9


def validate_spec(spec: ChartSpec) -> list[Violation]:
    """Check every structural invariant; an empty report means valid."""
    out: list[Violation] = []
    ct = spec.chart_type

    if not spec.series:
        out.append(Violation("series", "chart requires at least one series"))
    names = [s.name for s in spec.series]
    if len(set(names)) != len(names):
        out.append(Violation("series", "series names must be unique"))

    for i, s in enumerate(spec.series):
        loc = f"series[{i}]"
        if not s.name:
            out.append(Violation(f"{loc}.name", "series name must be non-empty"))
        if not s.points:
            out.append(Violation(f"{loc}.points", "series requires at least one point"))
            continue
        if s.mark not in VALID_MARKS:
            out.append(Violation(f"{loc}.mark", f"unknown mark '{s.mark}'"))
        elif s.mark not in _TYPE_MARKS[ct]:
            out.append(
                Violation(
                    f"{loc}.mark",
                    f"{ct.value} charts draw {'/'.join(_TYPE_MARKS[ct])} marks, not '{s.mark}'",
                )
            )
        for k, y in s.points:
            if not isinstance(y, (int, float)) or not math.isfinite(y):
                out.append(Violation(f"{loc}.points", "y values must be finite reals"))
                break
        keys = [k for k, _ in s.points]
        if len(set(keys)) != len(keys):
            out.append(
                Violation(f"{loc}.points", "category labels must be unique within a series")
            )

    if ct in CATEGORICAL_TYPES:
        if not spec.x_categories:
            out.append(Violation("x_categories", f"{ct.value} charts require categories"))
        if len(set(spec.x_categories)) != len(spec.x_categories):
            out.append(Violation("x_categories", "category labels must be unique"))
        for i, s in enumerate(spec.series):
            keys = tuple(k for k, _ in s.points)
            if keys != spec.x_categories:
                out.append(
                    Violation(
                        f"series[{i}].points",
                        "point labels must match x_categories in order",
                    )
                )
    else:
        if spec.x_categories:
            out.append(
                Violation("x_categories", f"{ct.value} charts use numeric x, not categories")
            )
        for i, s in enumerate(spec.series):
            if any(isinstance(k, str) for k, _ in s.points):
                out.append(
                    Violation(f"series[{i}].points", "point x values must be numeric")
                )

    if ct is ChartType.RADAR and len(spec.x_categories) < 3:
        out.append(Violation("x_categories", "radar requires >=3 categories"))
    if ct is ChartType.BOX:
        for i, s in enumerate(spec.series):
            if len(s.points) < 5:
                out.append(
                    Violation(f"series[{i}].points", "box series requires >=5 raw values")
                )
    if ct is ChartType.COMBO:
        marks = {s.mark for s in spec.series}
        if not {"bar", "line"} <= marks:
            out.append(
                Violation("series", "combo requires at least one bar-mark and one line-mark series")
            )
    if spec.y_axis_secondary is not None and ct is not ChartType.COMBO:
        out.append(
            Violation("y_axis_secondary", "secondary axis is only allowed on combo charts")
        )

    out.extend(_validate_axis(spec.y_axis, "y_axis"))
    if spec.y_axis_secondary is not None:
        out.extend(_validate_axis(spec.y_axis_secondary, "y_axis_secondary"))

    # Axis-range containment for every series against the axis it binds to.
    for i, s in enumerate(spec.series):
        axis = spec.series_axis(s)
        axis_name = "y_axis_secondary" if axis is spec.y_axis_secondary else "y_axis"
        if axis.min < axis.max:
            for _, y in s.points:
                if not isinstance(y, (int, float)) or not math.isfinite(y):
                    continue
                if y < axis.min - _RANGE_EPS or y > axis.max + _RANGE_EPS:
                    out.append(
                        Violation(
                            axis_name,
                            f"series '{s.name}' value {y} outside axis range "
                            f"[{axis.min}, {axis.max}]",
                        )
                    )
                    break

    if not isinstance(spec.style_seed, int) or spec.style_seed < 0:
        out.append(Violation("style_seed", "style_seed must be a nonnegative integer"))

    return out


def _validate_axis(axis: AxisSpec, name: str) -> list[Violation]:
    out = []
    if not (math.isfinite(axis.min) and math.isfinite(axis.max)) or axis.min >= axis.max:
        out.append(Violation(f"{name}.min", "axis requires min < max"))
        return out
    if axis.tick_interval <= 0:
        out.append(Violation(f"{name}.tick_interval", "tick_interval must be positive"))
        return out
    ratio = (axis.max - axis.min) / axis.tick_interval
    if ratio < 2 - _RANGE_EPS or ratio > 20 + _RANGE_EPS:
        out.append(
            Violation(
                f"{name}.tick_interval",
                f"(max - min) / tick_interval must lie in [2, 20], got {ratio:.3f}",
            )
        )
    return out


# ---------------------------------------------------------------------------
# Topic and vocabulary pools
# ---------------------------------------------------------------------------

DEFAULT_TOPICS = (
    "finance", "healthcare", "technology", "education", "energy",
    "transportation", "agriculture", "retail", "manufacturing",
    "telecommunications", "tourism", "real estate", "entertainment",
    "sports", "environment", "demographics", "employment", "social media",
    "e-commerce", "logistics", "insurance", "banking", "automotive",
    "aviation", "construction", "food industry", "pharmaceuticals",
    "mining", "public health", "climate", "urban development",
    "cybersecurity", "media", "hospitality", "textiles", "chemicals",
    "shipping", "renewable energy",
)

_TOPIC_SERIES = {
    "finance": ("Revenue", "Operating Costs", "Net Profit", "Cash Flow", "Gross Margin", "Equity"),
    "healthcare": ("Admissions", "Discharges", "Outpatient Visits", "Vaccinations", "Screenings", "Referrals"),
    "technology": ("Cloud Services", "Hardware", "Software Licenses", "Support Plans", "Subscriptions", "Consulting"),
    "energy": ("Solar", "Wind", "Hydro", "Natural Gas", "Coal", "Nuclear"),
    "education": ("Enrollment", "Graduates", "Faculty Hires", "Scholarships", "Online Courses", "Research Grants"),
    "retail": ("In-Store Sales", "Online Sales", "Returns", "Footfall", "Memberships", "Promotions"),
    "transportation": ("Rail Freight", "Road Freight", "Air Cargo", "Passenger Trips", "Fleet Size", "Transit Rides"),
    "agriculture": ("Wheat", "Corn", "Soybeans", "Dairy", "Livestock", "Orchards"),
    "sports": ("Ticket Sales", "Merchandise", "Broadcast Rights", "Sponsorships", "Concessions", "Memberships"),
    "tourism": ("Hotel Stays", "Flight Bookings", "Cruise Trips", "Tour Packages", "Car Rentals", "Excursions"),
}

_GENERIC_SERIES_POOLS = (
    ("North Region", "South Region", "East Region", "West Region", "Central Region", "Coastal Region"),
    ("Segment Alpha", "Segment Beta", "Segment Gamma", "Segment Delta", "Segment Epsilon", "Segment Zeta"),
    ("Group A", "Group B", "Group C", "Group D", "Group E", "Group F"),
    ("Tier One", "Tier Two", "Tier Three", "Tier Four", "Tier Five", "Tier Six"),
    ("Division North", "Division South", "Division East", "Division West", "Division Metro", "Division Rural"),
)

_TOPIC_METRICS = {
    "finance": ("Quarterly Revenue", "Operating Margin", "Net Income", "Capital Expenditure"),
    "healthcare": ("Patient Volume", "Treatment Capacity", "Care Utilization", "Staffing Levels"),
    "technology": ("Platform Usage", "Service Adoption", "Deployment Volume", "License Activity"),
    "energy": ("Generation Output", "Grid Load", "Capacity Factor", "Consumption"),
}

_GENERIC_METRICS = (
    "Output Volume", "Growth Rate", "Activity Index", "Utilization",
    "Throughput", "Coverage", "Market Share", "Performance Score",
)

_TITLE_PATTERNS = (
    "{metric} in {topic}",
    "{topic}: {metric}",
    "{metric} across {topic}",
    "{metric} Overview for {topic}",
)

_CATEGORY_POOLS = (
    ("Q1", "Q2", "Q3", "Q4"),
    ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"),
    ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"),
    ("North", "South", "East", "West", "Central", "Northeast", "Southeast", "Northwest"),
    ("Alpha Site", "Beta Site", "Gamma Site", "Delta Site", "Epsilon Site", "Zeta Site", "Eta Site", "Theta Site"),
    ("Phase One", "Phase Two", "Phase Three", "Phase Four", "Phase Five", "Phase Six"),
    ("Product A", "Product B", "Product C", "Product D", "Product E", "Product F", "Product G", "Product H"),
)

_RADAR_AXIS_POOLS = (
    ("Speed", "Quality", "Cost", "Reliability", "Safety", "Flexibility", "Innovation", "Service"),
    ("Range", "Comfort", "Design", "Efficiency", "Durability", "Value", "Support", "Style"),
    ("Accuracy", "Latency", "Uptime", "Security", "Scalability", "Usability", "Coverage", "Capacity"),
)

_UNITS = (None, None, None, "%", "USD millions", "index points", "thousand units", "GWh", "thousand tons")


def _series_pool(rng: SeededRng, topic: str) -> tuple[str, ...]:
    if topic in _TOPIC_SERIES:
        return _TOPIC_SERIES[topic]
    return rng.choice(_GENERIC_SERIES_POOLS)


def _metric_for(rng: SeededRng, topic: str) -> str:
    pool = _TOPIC_METRICS.get(topic, _GENERIC_METRICS)
    return rng.choice(pool)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_spec(
    rng_seed: int,
    chart_type: ChartType | str,
    topic: str,
    difficulty: str = "easy",
    topics: tuple[str, ...] = DEFAULT_TOPICS,
) -> ChartSpec:
    """Sample a valid chart spec, deterministically from the arguments.

    Hard difficulty uses more series, more categories, and tick intervals
    that force interpolation between gridlines. Sampled values never land
    exactly on a printed tick value, so no permitted text node can ever
    spell out a data value.
    """
    ct = ChartType(chart_type)
    if topic not in topics:
        raise ConfigError(f"unknown topic '{topic}'; not in configured topic list")
    if difficulty not in ("easy", "hard"):
        raise ConfigError(f"difficulty must be 'easy' or 'hard', got '{difficulty}'")

    rng = SeededRng(derive_seed(int(rng_seed), f"spec/{ct.value}/{topic}/{difficulty}"))
    hard = difficulty == "hard"

    unit = rng.choice(_UNITS)
    metric = _metric_for(rng, topic)
    title = rng.choice(_TITLE_PATTERNS).format(metric=metric, topic=topic.title())
    y_axis = _sample_axis(rng, hard, unit, metric)

    spec_id = f"{ct.value}-{int(rng_seed) & ((1 << 64) - 1):016x}"
    builder = {
        ChartType.BAR: _build_categorical,
        ChartType.LINE: _build_categorical,
        ChartType.AREA: _build_categorical,
        ChartType.RADAR: _build_categorical,
        ChartType.COMBO: _build_combo,
        ChartType.SCATTER: _build_scatter,
        ChartType.BOX: _build_box,
    }[ct]
    x_categories, series, secondary = builder(rng, ct, topic, hard, y_axis)

    return ChartSpec(
        id=spec_id,
        chart_type=ct,
        topic=topic,
        title=title,
        x_categories=x_categories,
        series=series,
        y_axis=y_axis,
        y_axis_secondary=secondary,
        style_seed=rng.randint(0, 2**32 - 1),
    )


def _sample_axis(rng: SeededRng, hard: bool, unit: Optional[str], label: str) -> AxisSpec:
    if unit == "%":
        interval = rng.choice((4.0, 6.0, 7.0) if hard else (5.0, 10.0, 20.0))
        n_ticks = rng.randint(4, min(10, int(100 // interval)))
        lo = 0.0
    else:
        mantissa = rng.choice(HARD_TICK_MANTISSAS if hard else EASY_TICK_MANTISSAS)
        scale = 10.0 ** rng.randint(0 if hard else -1, 2)
        interval = round(mantissa * scale, 9)
        n_ticks = rng.randint(4, 10)
        r = rng.random()
        if r < 0.7:
            lo = 0.0
        elif r < 0.9:
            lo = round(interval * rng.randint(1, 8), 9)
        else:
            lo = round(-interval * rng.randint(1, 4), 9)
    hi = round(lo + n_ticks * interval, 9)
    return AxisSpec(label=label, min=lo, max=hi, tick_interval=interval, unit=unit)


def _forbidden_tick_strings(*axes: Optional[AxisSpec]) -> set[str]:
    out: set[str] = set()
    for axis in axes:
        if axis is not None:
            out.update(format_tick(t) for t in tick_values(axis.min, axis.max, axis.tick_interval))
    return out


def _sample_values(
    rng: SeededRng, axis: AxisSpec, count: int, forbidden: set[str]
) -> list[float]:
    """Values on a fine grid, nudged off ticks and off any printed label."""
    grid = axis.tick_interval / 100.0
    steps = int(round((axis.max - axis.min) / grid))
    lo_idx = math.ceil(steps * 0.02)
    hi_idx = math.floor(steps * 0.98)
    values = []
    for _ in range(count):
        idx = rng.randint(lo_idx, hi_idx)
        for _ in range(200):
            if idx > hi_idx:
                idx = lo_idx
            if idx % 100 == 0:  # exactly on a tick line
                idx += 1
                continue
            v = round(axis.min + idx * grid, 9)
            if value_format_variants(v) & forbidden:
                idx += 1
                continue
            break
        values.append(v)
    return values


def _pick_categories(rng: SeededRng, ct: ChartType, hard: bool) -> tuple[str, ...]:
    pools = _RADAR_AXIS_POOLS if ct is ChartType.RADAR else _CATEGORY_POOLS
    n = rng.randint(6, 8) if hard else rng.randint(4, 6)
    eligible = [p for p in pools if len(p) >= n]
    return tuple(rng.choice(eligible)[:n])


def _pick_series_names(rng: SeededRng, topic: str, count: int) -> list[str]:
    pool = list(_series_pool(rng, topic))
    return rng.sample(pool, count)


def _build_categorical(rng, ct, topic, hard, y_axis):
    categories = _pick_categories(rng, ct, hard)
    n_series = rng.randint(3, 5) if hard else rng.randint(1, 2)
    names = _pick_series_names(rng, topic, n_series)
    forbidden = _forbidden_tick_strings(y_axis)
    mark = _TYPE_MARKS[ct][0]
    series = []
    for name in names:
        vals = _sample_values(rng, y_axis, len(categories), forbidden)
        series.append(
            SeriesSpec(name=name, points=tuple(zip(categories, vals)), mark=mark)
        )
    return categories, tuple(series), None


def _build_combo(rng, ct, topic, hard, y_axis):
    categories = _pick_categories(rng, ct, hard)
    n_series = rng.randint(3, 5) if hard else 2
    names = _pick_series_names(rng, topic, n_series)
    marks = ["bar", "line"] + [rng.choice(("bar", "line")) for _ in range(n_series - 2)]

    secondary = None
    if rng.random() < (0.75 if hard else 0.5):
        sec_unit = rng.choice(tuple(u for u in _UNITS if u != "%"))
        secondary = _sample_axis(rng, hard, sec_unit, _metric_for(rng, topic))
    forbidden = _forbidden_tick_strings(y_axis, secondary)

    series = []
    for name, mark in zip(names, marks):
        axis = secondary if (mark == "line" and secondary is not None) else y_axis
        vals = _sample_values(rng, axis, len(categories), forbidden)
        series.append(SeriesSpec(name=name, points=tuple(zip(categories, vals)), mark=mark))
    return categories, tuple(series), secondary


def _build_scatter(rng, ct, topic, hard, y_axis):
    n_series = rng.randint(3, 5) if hard else rng.randint(1, 2)
    names = _pick_series_names(rng, topic, n_series)
    x_span = rng.choice((10.0, 20.0, 50.0, 100.0))
    x_grid = x_span / 100.0

    all_xs: list[list[float]] = []
    for _ in names:
        n_points = rng.randint(9, 12) if hard else rng.randint(6, 9)
        idxs = sorted(rng.sample(range(5, 101), n_points))
        all_xs.append([round(i * x_grid, 9) for i in idxs])

    _, _, x_ticks = scatter_x_scale([x for xs in all_xs for x in xs])
    forbidden = _forbidden_tick_strings(y_axis)
    forbidden.update(format_tick(t) for t in x_ticks)

    series = []
    for name, xs in zip(names, all_xs):
        vals = _sample_values(rng, y_axis, len(xs), forbidden)
        series.append(SeriesSpec(name=name, points=tuple(zip(xs, vals)), mark="point"))
    return (), tuple(series), None


def _build_box(rng, ct, topic, hard, y_axis):
    n_series = rng.randint(3, 5) if hard else rng.randint(2, 3)
    names = _pick_series_names(rng, topic, n_series)
    forbidden = _forbidden_tick_strings(y_axis)
    series = []
    for name in names:
        n_raw = rng.randint(12, 17) if hard else rng.randint(9, 12)
        vals = _sample_values(rng, y_axis, n_raw, forbidden)
        points = tuple((float(i + 1), v) for i, v in enumerate(vals))
        series.append(SeriesSpec(name=name, points=points, mark="bar"))
    return (), tuple(series), None
