"""Error metrics and the method comparison.

Position errors are Euclidean distances in the xy plane (mm); percentiles use
linear interpolation between closest ranks. The union row of a comparison is
computed over the concatenated per-frame errors of all scenarios, so every
scenario weighs by its frame count.
"""

from __future__ import annotations

import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np
import pandas as pd

from proprio_fusion import const, exceptions
from proprio_fusion.estimator import run_method
from proprio_fusion.kinematics import total_length
from proprio_fusion.log import submit_in_stage
from proprio_fusion.types import Method
from proprio_fusion.utils import canonical_json

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence
    from os import PathLike

    from numpy.typing import ArrayLike, NDArray

    from proprio_fusion.estimator import MeasurementSet, ShapeEstimates
    from proprio_fusion.kalman import FilterConfigs
    from proprio_fusion.types import (
        GroundTruthFrame,
        GroundTruthLog,
        RobotShapeEstimate,
        SegmentGeometry,
    )

__all__ = [
    "MethodResult",
    "ComparisonTable",
    "FrameJoin",
    "frame_error",
    "join_frames",
    "point_errors",
    "summarize",
    "evaluate_method",
    "compare_methods",
    "drift_trace",
    "drift_summary",
    "generalization_ratio",
]

logger = logging.getLogger(__name__)

_array_options: dict[str, Any] = {"frozen": True, "eq": False}
if sys.version_info >= (3, 10):
    _array_options["kw_only"] = True
    _array_options["slots"] = False

UNION = "union"
_METHOD_ORDER = tuple(Method)
_TIME_TOLERANCE = 1e-9


def frame_error(estimate: RobotShapeEstimate, gt: GroundTruthFrame) -> NDArray[np.float64]:
    """Distance of every estimated sensing point from the truth (mm).

    The last entry is the end-effector error.
    """
    if estimate.world_points.shape != gt.world_points.shape:
        error_msg = (
            f"estimate {estimate.world_points.shape} and ground truth "
            f"{gt.world_points.shape} disagree"
        )
        raise exceptions.DimensionError(error_msg)
    return np.linalg.norm(estimate.world_points - gt.world_points, axis=-1)


class FrameJoin(NamedTuple):
    estimate_index: NDArray[np.intp]
    truth_index: NDArray[np.intp]
    skipped: int
    """estimate frames without ground truth within half a sample period"""


def join_frames(
    estimate_t: ArrayLike, truth_t: ArrayLike, sample_period: float | None = None
) -> FrameJoin:
    """Pair every estimate with the nearest ground-truth frame in time."""
    est = np.asarray(estimate_t, dtype=np.float64)
    truth = np.asarray(truth_t, dtype=np.float64)
    if truth.size == 0:
        empty = np.zeros(0, dtype=np.intp)
        return FrameJoin(estimate_index=empty, truth_index=empty, skipped=int(est.size))
    if sample_period is None:
        sample_period = float(np.median(np.diff(truth))) if truth.size > 1 else math.inf

    right = np.clip(np.searchsorted(truth, est), 0, truth.size - 1)
    left = np.clip(right - 1, 0, truth.size - 1)
    nearest = np.where(np.abs(truth[left] - est) <= np.abs(truth[right] - est), left, right)
    matched = np.abs(truth[nearest] - est) <= 0.5 * sample_period + _TIME_TOLERANCE
    skipped = int(np.count_nonzero(~matched))
    if skipped:
        logger.warning("%d estimate frame(s) have no ground truth in reach", skipped)
    return FrameJoin(
        estimate_index=np.flatnonzero(matched),
        truth_index=nearest[matched],
        skipped=skipped,
    )


def point_errors(
    estimates: ShapeEstimates, truth: GroundTruthLog
) -> tuple[NDArray[np.float64], NDArray[np.float64], int]:
    """Position and orientation errors of every joined frame.

    Returns:
        `(K, N)` position errors (mm), `(K, N)` absolute angle errors (rad)
        and the number of skipped frames.
    """
    join = join_frames(estimates.t, truth.t, truth.sample_period or None)
    position = np.linalg.norm(
        estimates.world_points[join.estimate_index] - truth.world_points[join.truth_index],
        axis=-1,
    )
    orientation = np.abs(
        estimates.thetas[join.estimate_index] - truth.thetas[join.truth_index]
    )
    return position, orientation, join.skipped


@dataclass(**_array_options)
class MethodResult:
    method: Method
    scenario: str
    errors: NDArray[np.float64] = field(repr=False)
    """(K,) end-effector error of every frame (mm)"""
    rmse: float
    rmse_pct: float
    """rmse as a share of the total arm length (%)"""
    q1: float
    median: float
    q3: float
    mean: float
    max: float
    p75_per_point: NDArray[np.float64] = field(repr=False)
    """(N,) 75th percentile error radius of every sensing point (mm)"""
    orientation_rmse_deg: float = math.nan
    frames: int = 0
    skipped: int = 0
    error: str | None = None
    """why the method failed on this scenario; metrics are NaN then"""

    @property
    def ok(self) -> bool:
        return self.error is None

    @classmethod
    def failed(cls, method: Method, scenario: str, error: str) -> MethodResult:
        nan = math.nan
        return cls(
            method=method,
            scenario=scenario,
            errors=np.zeros(0),
            rmse=nan,
            rmse_pct=nan,
            q1=nan,
            median=nan,
            q3=nan,
            mean=nan,
            max=nan,
            p75_per_point=np.zeros(0),
            error=error,
        )

    def to_dict(self) -> dict[str, Any]:
        def number(value: float) -> float | None:
            return None if math.isnan(value) else round(float(value), 9)

        return {
            "method": self.method.value,
            "scenario": self.scenario,
            "rmse_mm": number(self.rmse),
            "rmse_pct": number(self.rmse_pct),
            "q1_mm": number(self.q1),
            "median_mm": number(self.median),
            "q3_mm": number(self.q3),
            "mean_mm": number(self.mean),
            "max_mm": number(self.max),
            "orientation_rmse_deg": number(self.orientation_rmse_deg),
            "p75_per_point_mm": [number(value) for value in self.p75_per_point],
            "frames": self.frames,
            "skipped": self.skipped,
            "error": self.error,
        }


def summarize(  # noqa: PLR0913
    errors: ArrayLike,
    total_length: float,
    *,
    method: Method | str = Method.FUSION,
    scenario: str = "",
    orientation_errors: ArrayLike | None = None,
    skipped: int = 0,
) -> MethodResult:
    """Statistics of per-frame errors.

    Args:
        errors: `(K,)` end-effector errors or `(K, N)` errors of every
            sensing point, the last column being the end effector (mm).
        total_length: arm length the RMSE percentage refers to (mm).
        method: method the errors belong to.
        scenario: scenario label the errors belong to.
        orientation_errors: optional `(K, N)` angle errors (rad).
        skipped: frames dropped by the timestamp join.
    """
    values = np.asarray(errors, dtype=np.float64)
    if values.size == 0:
        error_msg = "cannot summarise an empty error list"
        raise exceptions.InvalidInputError(error_msg)
    if not total_length > 0:
        error_msg = f"total length must be > 0, got {total_length}"
        raise exceptions.InvalidInputError(error_msg)
    points = values if values.ndim == 2 else values.reshape(-1, 1)  # noqa: PLR2004
    end_effector = points[:, -1]

    rmse = float(np.sqrt(np.mean(end_effector**2)))
    q1, median, q3 = np.percentile(end_effector, [25.0, 50.0, 75.0], method="linear")
    orientation_rmse = math.nan
    if orientation_errors is not None:
        angles = np.asarray(orientation_errors, dtype=np.float64)
        orientation_rmse = float(np.degrees(np.sqrt(np.mean(angles**2))))
    return MethodResult(
        method=Method(method),
        scenario=scenario,
        errors=end_effector,
        rmse=rmse,
        rmse_pct=rmse / total_length * 100.0,
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        mean=float(np.mean(end_effector)),
        max=float(np.max(end_effector)),
        p75_per_point=np.percentile(points, 75.0, axis=0, method="linear"),
        orientation_rmse_deg=orientation_rmse,
        frames=int(end_effector.size),
        skipped=skipped,
    )


class _Evaluation(NamedTuple):
    result: MethodResult
    position: NDArray[np.float64]
    orientation: NDArray[np.float64]


def _evaluate(
    method: Method,
    scenario: str,
    measurements: MeasurementSet,
    geoms: Sequence[SegmentGeometry],
    configs: FilterConfigs | None,
) -> _Evaluation:
    empty = np.zeros((0, len(geoms)))
    try:
        if measurements.truth is None:
            error_msg = f"scenario {scenario} has no ground truth"
            raise exceptions.InvalidInputError(error_msg)  # noqa: TRY301
        estimates = run_method(method, measurements, geoms, configs)
        position, orientation, skipped = point_errors(estimates, measurements.truth)
        result = summarize(
            position,
            total_length(geoms),
            method=method,
            scenario=scenario,
            orientation_errors=orientation,
            skipped=skipped,
        )
    except exceptions.Error as exc:
        logger.warning("%s failed on scenario %s: %s", method, scenario, exc)
        return _Evaluation(MethodResult.failed(method, scenario, str(exc)), empty, empty)
    return _Evaluation(result, position, orientation)


def evaluate_method(
    method: Method | str,
    measurements: MeasurementSet,
    geoms: Sequence[SegmentGeometry],
    configs: FilterConfigs | None = None,
    *,
    scenario: str = "",
) -> MethodResult:
    """Run one method on a log with ground truth and summarise its errors.

    A failing method yields a result whose `error` holds the reason.
    """
    return _evaluate(Method(method), scenario, measurements, geoms, configs).result


@dataclass(**_array_options)
class ComparisonTable:
    results: tuple[MethodResult, ...]
    total_length: float

    def get(self, method: Method | str, scenario: str) -> MethodResult:
        method = Method(method)
        for result in self.results:
            if result.method is method and result.scenario == scenario:
                return result
        error_msg = f"no result for {method} on scenario {scenario}"
        raise KeyError(error_msg)

    @property
    def scenarios(self) -> list[str]:
        return list(dict.fromkeys(result.scenario for result in self.results))

    def to_frame(self) -> pd.DataFrame:
        """One row per method and scenario."""
        frame = pd.DataFrame([result.to_dict() for result in self.results])
        return frame.drop(columns=["p75_per_point_mm"])

    def rmse_table(self) -> pd.DataFrame:
        """RMSE (mm) with methods as rows and scenarios as columns."""
        frame = self.to_frame().pivot(index="method", columns="scenario", values="rmse_mm")
        methods = [m.value for m in _METHOD_ORDER if m.value in frame.index]
        return frame.reindex(index=methods, columns=self.scenarios)

    def boxplot_frame(self) -> pd.DataFrame:
        """Long format end-effector errors, one row per frame."""
        parts = [
            pd.DataFrame({
                "scenario": result.scenario,
                "method": result.method.value,
                "frame": np.arange(result.errors.size),
                "error_mm": result.errors,
            })
            for result in self.results
            if result.ok
        ]
        if not parts:
            return pd.DataFrame(columns=["scenario", "method", "frame", "error_mm"])
        return pd.concat(parts, ignore_index=True)

    def p75_frame(self) -> pd.DataFrame:
        """75th percentile error radius of every sensing point."""
        rows = [
            {
                "scenario": result.scenario,
                "method": result.method.value,
                "point": index + 1,
                "p75_mm": float(value),
            }
            for result in self.results
            if result.ok
            for index, value in enumerate(result.p75_per_point)
        ]
        return pd.DataFrame(rows, columns=["scenario", "method", "point", "p75_mm"])

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_length_mm": self.total_length,
            "results": [result.to_dict() for result in self.results],
        }

    def save(self, directory: str | PathLike[str], prefix: str = "") -> list[Path]:
        target = Path(directory)
        target.mkdir(parents=True, exist_ok=True)
        paths = {
            "results.csv": self.to_frame(),
            "rmse_table.csv": self.rmse_table(),
            "boxplot.csv": self.boxplot_frame(),
            "p75.csv": self.p75_frame(),
        }
        written: list[Path] = []
        for name, frame in paths.items():
            path = target / f"{prefix}{name}"
            frame.to_csv(
                path,
                index=name == "rmse_table.csv",
                float_format="%.9g",
                lineterminator="\n",
            )
            written.append(path)
        path = target / f"{prefix}results.json"
        path.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        written.append(path)
        return written


def compare_methods(
    runs: Mapping[str, MeasurementSet],
    geoms: Sequence[SegmentGeometry],
    configs: FilterConfigs | None,
    *,
    methods: Sequence[Method | str] = _METHOD_ORDER,
    union: bool = True,
    jobs: int = 1,
) -> ComparisonTable:
    """Every method on every scenario, plus the union of all scenarios.

    A method that fails on one scenario is reported with its error; the
    other results are unaffected.
    """
    selected = [Method(method) for method in methods]
    pairs = [(scenario, method) for scenario in runs for method in selected]
    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        futures = {
            pair: submit_in_stage(
                pool, _evaluate, pair[1], pair[0], runs[pair[0]], geoms, configs
            )
            for pair in pairs
        }
        wait(futures.values())
    evaluations = {pair: future.result() for pair, future in futures.items()}

    results = [evaluations[pair].result for pair in pairs]
    if union and len(runs) > 1:
        results.extend(
            _union(method, [evaluations[(scenario, method)] for scenario in runs], geoms)
            for method in selected
        )
    return ComparisonTable(results=tuple(results), total_length=total_length(geoms))


def _union(
    method: Method, parts: Sequence[_Evaluation], geoms: Sequence[SegmentGeometry]
) -> MethodResult:
    failures = [part.result.error for part in parts if not part.result.ok]
    if failures:
        return MethodResult.failed(method, UNION, "; ".join(str(f) for f in failures))
    return summarize(
        np.concatenate([part.position for part in parts]),
        total_length(geoms),
        method=method,
        scenario=UNION,
        orientation_errors=np.concatenate([part.orientation for part in parts]),
        skipped=sum(part.result.skipped for part in parts),
    )


def drift_trace(measurements: MeasurementSet, segment: int = 1) -> pd.DataFrame:
    """Angles of one segment over time, in degrees.

    Columns: t, truth, bend, imu_raw, imu_corrected, offset and the signed
    errors of the raw and the corrected IMU angle.
    """
    if measurements.truth is None:
        error_msg = "a drift trace needs ground truth"
        raise exceptions.InvalidInputError(error_msg)
    if not 1 <= segment <= measurements.n_segments:
        error_msg = f"segment {segment} is outside 1..{measurements.n_segments}"
        raise exceptions.InvalidInputError(error_msg)

    column = segment - 1
    truth = measurements.truth.thetas[:, column]
    raw = measurements.theta_imu_raw[:, column]
    corrected = measurements.theta_imu_corrected[:, column]
    return pd.DataFrame({
        "t": measurements.t,
        "truth_deg": np.degrees(truth),
        "bend_deg": np.degrees(measurements.theta_bend[:, column]),
        "imu_raw_deg": np.degrees(raw),
        "imu_corrected_deg": np.degrees(corrected),
        "offset_deg": np.degrees(measurements.drift_offsets[:, column]),
        "raw_error_deg": np.degrees(raw - truth),
        "corrected_error_deg": np.degrees(corrected - truth),
    })


def drift_summary(
    trace: pd.DataFrame, window: int = const.DEFAULT_WINDOW_SIZE
) -> dict[str, float]:
    """Drift errors at the end of a trace.

    The error at the end is the magnitude of the mean signed error over the
    last `window` samples, which removes the white noise but keeps the bias.
    """
    if trace.empty:
        error_msg = "cannot summarise an empty drift trace"
        raise exceptions.InvalidInputError(error_msg)
    tail = trace.tail(window)
    raw = abs(float(tail["raw_error_deg"].mean()))
    corrected = abs(float(tail["corrected_error_deg"].mean()))
    return {
        "t_end": float(trace["t"].iloc[-1]),
        "raw_error_deg": raw,
        "corrected_error_deg": corrected,
        "ratio": raw / corrected if corrected > 0 else math.inf,
        "max_abs_corrected_error_deg": float(tail["corrected_error_deg"].abs().max()),
    }


def generalization_ratio(train_loss: float, held_out_loss: float) -> float:
    """Held-out over training loss; above `GENERALIZATION_BOUND` means overfitting."""
    if not train_loss > 0:
        return math.inf if held_out_loss > 0 else 1.0
    ratio = held_out_loss / train_loss
    if ratio > const.GENERALIZATION_BOUND:
        logger.warning(
            "tuned filters generalise poorly: held-out loss %.3f is %.2fx the training loss",
            held_out_loss, ratio,
        )
    return ratio
