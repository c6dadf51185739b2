from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from chartforge.chart_model import (
    DEFAULT_TOPICS,
    AxisSpec,
    ChartSpec,
    ChartType,
    SeriesSpec,
    box_stats,
    sample_spec,
    spec_dumps,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)
from chartforge.errors import ConfigError
from chartforge.scales import tick_values

from conftest import make_bar_spec


# ---------------------------------------------------------------------------
# Box statistics: oracle is numpy's linear order-statistic interpolation
# ---------------------------------------------------------------------------


def test_upper_quartile_linear_interpolation_oracle():
    values = [1, 2, 3, 4, 5, 6, 7, 8]
    # position (n-1)*p = 5.25 -> 6 + 0.25 * (7 - 6) = 6.25
    assert box_stats(values)["upper quartile"] == 6.25
    assert box_stats(values)["upper quartile"] == np.percentile(values, 75)
    assert box_stats(values)["lower quartile"] == np.percentile(values, 25)


def test_median_odd_count():
    assert box_stats(list(range(1, 10)))["median"] == 5.0


@pytest.mark.parametrize("seed", range(30))
def test_box_stats_match_numpy_and_fence_rule(seed):
    rng = np.random.default_rng(seed)
    values = sorted(rng.uniform(-50, 150, size=int(rng.integers(5, 25))).tolist())
    stats = box_stats(values)
    q1, q3 = np.percentile(values, 25), np.percentile(values, 75)
    assert stats["lower quartile"] == pytest.approx(q1, abs=1e-12)
    assert stats["upper quartile"] == pytest.approx(q3, abs=1e-12)
    assert stats["median"] == pytest.approx(np.percentile(values, 50), abs=1e-12)
    iqr = q3 - q1
    in_fence = [v for v in values if q1 - 1.5 * iqr <= v <= q3 + 1.5 * iqr]
    assert stats["lower whisker"] == min(in_fence)
    assert stats["upper whisker"] == max(in_fence)


def test_box_stats_rejects_tiny_samples():
    with pytest.raises(ValueError):
        box_stats([1, 2, 3, 4])


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def test_well_formed_bar_spec_validates_clean(bar_spec):
    assert validate_spec(bar_spec) == []


def test_well_formed_three_series_bar_validates_clean():
    cats = ("Q1", "Q2", "Q3", "Q4")
    series = tuple(
        SeriesSpec(name=name, points=tuple((c, 10.0 * (i + 1) + j) for j, c in enumerate(cats)),
                   mark="bar")
        for i, name in enumerate(("Revenue", "Costs", "Profit"))
    )
    spec = ChartSpec(
        id="bar-three",
        chart_type=ChartType.BAR,
        topic="finance",
        title="Finance: Output Volume",
        x_categories=cats,
        series=series,
        y_axis=AxisSpec(label="USD", min=0.0, max=50.0, tick_interval=5.0),
    )
    assert validate_spec(spec) == []


def _radar_spec(categories):
    return ChartSpec(
        id="radar-t1",
        chart_type=ChartType.RADAR,
        topic="technology",
        title="Tech Attributes",
        x_categories=tuple(categories),
        series=(
            SeriesSpec(
                name="Cloud Services",
                points=tuple((c, 5.5 + i) for i, c in enumerate(categories)),
                mark="line",
            ),
        ),
        y_axis=AxisSpec(label="Score", min=0.0, max=10.0, tick_interval=2.0),
    )


def test_radar_with_two_categories_is_flagged():
    report = validate_spec(_radar_spec(["Speed", "Cost"]))
    assert any("radar requires >=3 categories" in v.rule for v in report)
    assert validate_spec(_radar_spec(["Speed", "Cost", "Safety"])) == []


def test_value_outside_axis_range_is_flagged():
    spec = make_bar_spec(values=(30.0, 55.0, 120.0, 41.0), axis_max=100.0)
    report = validate_spec(spec)
    assert any(v.field == "y_axis" and "outside axis range" in v.rule for v in report)


def test_axis_tick_ratio_bounds():
    bad = dataclasses.replace(
        make_bar_spec(), y_axis=AxisSpec(label="x", min=0.0, max=100.0, tick_interval=1.0)
    )
    report = validate_spec(bad)
    assert any("must lie in [2, 20]" in v.rule for v in report)


def test_duplicate_series_names_flagged(bar_spec):
    dup = dataclasses.replace(bar_spec, series=bar_spec.series + bar_spec.series)
    assert any("unique" in v.rule for v in validate_spec(dup))


def test_box_needs_five_raw_values():
    spec = ChartSpec(
        id="box-t2",
        chart_type=ChartType.BOX,
        topic="finance",
        title="t",
        x_categories=(),
        series=(SeriesSpec(name="A", points=((1.0, 2.0), (2.0, 3.0)), mark="bar"),),
        y_axis=AxisSpec(label="v", min=0.0, max=10.0, tick_interval=1.0),
    )
    assert any("box series requires >=5 raw values" in v.rule for v in validate_spec(spec))


def test_combo_requires_bar_and_line_marks():
    spec = ChartSpec(
        id="combo-t1",
        chart_type=ChartType.COMBO,
        topic="finance",
        title="t",
        x_categories=("Q1", "Q2", "Q3", "Q4"),
        series=(
            SeriesSpec(name="A", points=tuple((c, 1.5) for c in ("Q1", "Q2", "Q3", "Q4")), mark="bar"),
        ),
        y_axis=AxisSpec(label="v", min=0.0, max=10.0, tick_interval=1.0),
    )
    assert any("combo requires" in v.rule for v in validate_spec(spec))


def test_secondary_axis_rejected_outside_combo(bar_spec):
    spec = dataclasses.replace(
        bar_spec, y_axis_secondary=AxisSpec(label="s", min=0.0, max=10.0, tick_interval=1.0)
    )
    assert any(v.field == "y_axis_secondary" for v in validate_spec(spec))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_chart_type_parses_exactly_seven_variants():
    assert {t.value for t in ChartType} == {"box", "area", "radar", "scatter", "bar", "line", "combo"}
    with pytest.raises(ValueError):
        ChartType("pie")


def test_spec_round_trips_through_canonical_json(bar_spec):
    again = spec_from_dict(spec_to_dict(bar_spec))
    assert again == bar_spec
    assert spec_dumps(again) == spec_dumps(bar_spec)


# ---------------------------------------------------------------------------
# Sampling: determinism, closure, headroom
# ---------------------------------------------------------------------------


def test_same_arguments_give_byte_identical_specs():
    a = sample_spec(42, "bar", "finance", "easy")
    b = sample_spec(42, "bar", "finance", "easy")
    assert spec_dumps(a) == spec_dumps(b)


def test_different_seeds_give_different_specs():
    a = sample_spec(42, "bar", "finance", "easy")
    b = sample_spec(43, "bar", "finance", "easy")
    assert spec_dumps(a) != spec_dumps(b)


def test_unknown_topic_is_a_configuration_error():
    with pytest.raises(ConfigError):
        sample_spec(42, "bar", "no-such-topic", "easy")


def test_combo_hard_has_bar_and_line_series():
    spec = sample_spec(7, "combo", "healthcare", "hard")
    marks = {s.mark for s in spec.series}
    assert {"bar", "line"} <= marks


def test_hard_difficulty_yields_more_series():
    easy_counts = [len(sample_spec(s, "bar", "finance", "easy").series) for s in range(20)]
    hard_counts = [len(sample_spec(s, "bar", "finance", "hard").series) for s in range(20)]
    assert max(easy_counts) <= 2
    assert min(hard_counts) >= 3


def test_sampling_closure_every_spec_validates():
    """Every sampled spec passes validation: 1000 seeds x all 7 types."""
    for ct in ChartType:
        for seed in range(1000):
            topic = DEFAULT_TOPICS[seed % len(DEFAULT_TOPICS)]
            difficulty = "hard" if seed % 2 else "easy"
            spec = sample_spec(seed, ct, topic, difficulty)
            assert validate_spec(spec) == [], (ct, seed, difficulty)


def test_value_headroom_values_rarely_sit_on_ticks():
    on_tick = 0
    total = 0
    for seed in range(150):
        ct = list(ChartType)[seed % 7]
        spec = sample_spec(seed, ct, DEFAULT_TOPICS[seed % 38], "easy")
        for s in spec.series:
            axis = spec.series_axis(s)
            ticks = set(tick_values(axis.min, axis.max, axis.tick_interval))
            for _, v in s.points:
                total += 1
                if v in ticks:
                    on_tick += 1
        if total >= 1000:
            break
    assert total >= 1000
    assert on_tick / total < 0.5
    # the sampler actively nudges values off ticks, so expect zero
    assert on_tick == 0
