from __future__ import annotations

import pytest

from chartforge.chart_model import AxisSpec, ChartSpec, ChartType, SeriesSpec


def make_bar_spec(
    values=(30.5, 55.2, 74.0, 41.1),
    categories=("Q1", "Q2", "Q3", "Q4"),
    series_name="Revenue",
    axis_max=100.0,
    title="Finance: Quarterly Revenue",
    unit=None,
    spec_id="bar-test0001",
):
    return ChartSpec(
        id=spec_id,
        chart_type=ChartType.BAR,
        topic="finance",
        title=title,
        x_categories=tuple(categories),
        series=(
            SeriesSpec(name=series_name, points=tuple(zip(categories, values)), mark="bar"),
        ),
        y_axis=AxisSpec(label="Revenue", min=0.0, max=axis_max, tick_interval=axis_max / 10, unit=unit),
    )


def make_box_spec(values=(3.1, 7.4, 5.5, 9.2, 1.8, 6.6, 4.4, 8.1, 2.9),
                  series_name="Admissions", spec_id="box-test0001"):
    points = tuple((float(i + 1), float(v)) for i, v in enumerate(values))
    return ChartSpec(
        id=spec_id,
        chart_type=ChartType.BOX,
        topic="healthcare",
        title="Healthcare: Patient Volume",
        x_categories=(),
        series=(SeriesSpec(name=series_name, points=points, mark="bar"),),
        y_axis=AxisSpec(label="Patients", min=0.0, max=10.0, tick_interval=1.0),
    )


@pytest.fixture
def bar_spec():
    return make_bar_spec()


@pytest.fixture
def box_spec():
    return make_box_spec()
