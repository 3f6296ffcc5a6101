# pyright: reportMissingParameterType=false
# pyright: reportUnknownParameterType=false
from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from proprio_fusion import exceptions
from proprio_fusion.evaluation import (
    ComparisonTable,
    MethodResult,
    compare_methods,
    drift_summary,
    drift_trace,
    evaluate_method,
    frame_error,
    generalization_ratio,
    join_frames,
    summarize,
)
from proprio_fusion.kinematics import total_length
from proprio_fusion.types import GroundTruthFrame, Method, RobotShapeEstimate


def test_summarize_known_errors():
    errors = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    result = summarize(errors, 100.0, method=Method.BEND, scenario="I")
    assert result.rmse == pytest.approx(math.sqrt(11.0))
    assert result.rmse_pct == pytest.approx(math.sqrt(11.0))
    assert (result.q1, result.median, result.q3) == (2.0, 3.0, 4.0)
    assert result.mean == 3.0
    assert result.max == 5.0
    assert result.frames == 5
    assert result.ok
    assert math.isnan(result.orientation_rmse_deg)


def test_summarize_per_point_errors():
    errors = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0], [6.0, 7.0], [8.0, 9.0]])
    angles = np.full((5, 2), math.radians(2.0))
    result = summarize(errors, 50.0, orientation_errors=angles)
    # the last column is the end effector
    np.testing.assert_allclose(result.errors, [1.0, 3.0, 5.0, 7.0, 9.0])
    np.testing.assert_allclose(result.p75_per_point, [6.0, 7.0])
    assert result.orientation_rmse_deg == pytest.approx(2.0)


def test_summarize_rejects_empty():
    with pytest.raises(exceptions.InvalidInputError):
        summarize([], 100.0)
    with pytest.raises(exceptions.InvalidInputError):
        summarize([1.0], 0.0)


def test_frame_error():
    truth = GroundTruthFrame(
        t=0.0,
        thetas=np.zeros(2),
        world_points=np.array([[0.0, 10.0], [0.0, 20.0]]),
        pcc_violation=np.zeros(2, dtype=bool),
    )
    estimate = RobotShapeEstimate(
        t=0.0,
        method=Method.BEND,
        thetas=np.zeros(2),
        local_points=np.zeros((2, 2)),
        world_points=np.array([[3.0, 14.0], [0.0, 20.0]]),
    )
    np.testing.assert_allclose(frame_error(estimate, truth), [5.0, 0.0])

    wrong = RobotShapeEstimate(
        t=0.0,
        method=Method.BEND,
        thetas=np.zeros(1),
        local_points=np.zeros((1, 2)),
        world_points=np.zeros((1, 2)),
    )
    with pytest.raises(exceptions.DimensionError):
        frame_error(wrong, truth)


def test_join_frames():
    truth_t = np.arange(10) * 0.1
    estimate_t = np.array([0.0, 0.31, 0.5, 2.0])
    join = join_frames(estimate_t, truth_t)
    np.testing.assert_array_equal(join.estimate_index, [0, 1, 2])
    np.testing.assert_array_equal(join.truth_index, [0, 3, 5])
    assert join.skipped == 1

    empty = join_frames(estimate_t, [])
    assert empty.skipped == 4
    assert empty.estimate_index.size == 0


def test_evaluate_method(geoms, sweep_measurements):
    result = evaluate_method(Method.BEND, sweep_measurements, geoms, scenario="I")
    assert result.ok
    assert result.frames == len(sweep_measurements)
    assert result.skipped == 0
    assert result.p75_per_point.shape == (len(geoms),)
    assert result.rmse_pct == pytest.approx(result.rmse / total_length(geoms) * 100.0)


def test_failing_method_is_reported(geoms, sweep_measurements):
    result = evaluate_method(Method.FUSION, sweep_measurements, geoms, None, scenario="I")
    assert not result.ok
    assert "filter configs" in (result.error or "")
    assert math.isnan(result.rmse)


@pytest.fixture(scope="module")
def table(geoms, sweep_measurements, noiseless_measurements, filter_configs):
    runs = {"I": sweep_measurements, "quiet": noiseless_measurements}
    return compare_methods(runs, geoms, filter_configs, jobs=2)


def test_compare_methods(table):
    assert table.scenarios == ["I", "quiet", "union"]
    assert len(table.results) == 3 * len(Method)
    assert all(result.ok for result in table.results)

    union = table.get(Method.BEND, "union")
    parts = [table.get(Method.BEND, scenario) for scenario in ("I", "quiet")]
    assert union.frames == sum(part.frames for part in parts)
    expected = math.sqrt(
        sum(part.rmse**2 * part.frames for part in parts) / union.frames
    )
    assert union.rmse == pytest.approx(expected)

    with pytest.raises(KeyError):
        table.get(Method.BEND, "II")


def test_comparison_frames(table):
    rmse = table.rmse_table()
    assert list(rmse.index) == [method.value for method in Method]
    assert list(rmse.columns) == ["I", "quiet", "union"]

    boxplot = table.boxplot_frame()
    assert list(boxplot.columns) == ["scenario", "method", "frame", "error_mm"]
    assert len(boxplot) == sum(result.frames for result in table.results)

    p75 = table.p75_frame()
    assert len(p75) == len(table.results) * table.results[0].p75_per_point.size


def test_comparison_save(table, tmp_path):
    paths = table.save(tmp_path, prefix="x_")
    assert sorted(path.name for path in paths) == [
        "x_boxplot.csv",
        "x_p75.csv",
        "x_results.csv",
        "x_results.json",
        "x_rmse_table.csv",
    ]
    frame = pd.read_csv(tmp_path / "x_results.csv")
    assert len(frame) == len(table.results)


def test_failures_do_not_hide_other_results(geoms, sweep_measurements):
    table = compare_methods(
        {"I": sweep_measurements, "I'": sweep_measurements}, geoms, None
    )
    assert not table.get(Method.FUSION, "I").ok
    assert not table.get(Method.FUSION, "union").ok
    assert table.get(Method.BEND, "union").ok
    assert table.get(Method.IMU_O, "I").ok
    assert len(table.boxplot_frame()) == 3 * 4 * len(sweep_measurements)


def test_single_run_has_no_union(geoms, sweep_measurements):
    table = compare_methods({"I": sweep_measurements}, geoms, None, methods=[Method.BEND])
    assert table.scenarios == ["I"]
    assert isinstance(table, ComparisonTable)
    assert isinstance(table.results[0], MethodResult)


def test_drift_trace(sweep_measurements):
    trace = drift_trace(sweep_measurements, segment=2)
    assert list(trace.columns) == [
        "t",
        "truth_deg",
        "bend_deg",
        "imu_raw_deg",
        "imu_corrected_deg",
        "offset_deg",
        "raw_error_deg",
        "corrected_error_deg",
    ]
    np.testing.assert_allclose(
        trace["raw_error_deg"], trace["imu_raw_deg"] - trace["truth_deg"], atol=1e-9
    )
    with pytest.raises(exceptions.InvalidInputError):
        drift_trace(sweep_measurements, segment=0)


def test_drift_summary():
    trace = pd.DataFrame({
        "t": np.arange(6) * 0.1,
        "raw_error_deg": [0.0, 0.0, 0.0, 4.0, 6.0, 5.0],
        "corrected_error_deg": [3.0, 3.0, 3.0, 0.5, -0.5, 1.5],
    })
    summary = drift_summary(trace, window=3)
    assert summary["raw_error_deg"] == pytest.approx(5.0)
    assert summary["corrected_error_deg"] == pytest.approx(0.5)
    assert summary["ratio"] == pytest.approx(10.0)
    assert summary["max_abs_corrected_error_deg"] == pytest.approx(1.5)
    assert summary["t_end"] == pytest.approx(0.5)

    with pytest.raises(exceptions.InvalidInputError):
        drift_summary(trace.iloc[:0])


def test_generalization_ratio():
    assert generalization_ratio(2.0, 3.0) == pytest.approx(1.5)
    assert generalization_ratio(0.0, 0.0) == 1.0
    assert generalization_ratio(0.0, 1.0) == math.inf
