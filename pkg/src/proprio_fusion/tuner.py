"""Offline tuning of the filter noise and measurement matrices.

The parameters are log-multipliers of the initial Q and R diagonals (one per
sensor block, or one per entry) and, optionally, gains of the bend and IMU
rows of H. Scaling keeps every covariance PSD and never pushes a diagonal
entry below `TUNER_EPSILON`; row gains keep the sparsity of H.

Descent follows `p <- p - alpha * dloss/dp` with central finite differences
and a backtracking line search: a step that does not lower the loss halves
`alpha` and is retried, so the accepted losses never increase. A step
accepted at the first try doubles `alpha` for the next iteration.
"""

from __future__ import annotations

import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal, NamedTuple

import numpy as np

from proprio_fusion import const, exceptions
from proprio_fusion.config import TunerSpec
from proprio_fusion.estimator import run_method
from proprio_fusion.evaluation import point_errors
from proprio_fusion.kalman import FilterConfigs, KalmanConfig
from proprio_fusion.log import submit_in_stage
from proprio_fusion.types import Method
from proprio_fusion.utils import canonical_json, tag_stage

if TYPE_CHECKING:
    from collections.abc import Sequence
    from os import PathLike

    from numpy.typing import NDArray

    from proprio_fusion.estimator import MeasurementSet
    from proprio_fusion.types import SegmentGeometry

__all__ = [
    "Parameter",
    "ObjectiveResult",
    "IterationRecord",
    "TunerReport",
    "parameter_layout",
    "apply_parameters",
    "objective",
    "tune",
]

logger = logging.getLogger(__name__)

_dataclass_options: dict[str, Any] = {"frozen": True}
if sys.version_info >= (3, 10):
    _dataclass_options["kw_only"] = True
    _dataclass_options["slots"] = False

_LOG_LIMIT = 50.0
_Block = Literal["q", "r_bend", "r_imu", "h_bend", "h_imu"]


class Parameter(NamedTuple):
    filter_name: str
    block: _Block
    index: int | None
    """entry of the block, `None` when the whole block shares it"""

    @property
    def name(self) -> str:
        suffix = "" if self.index is None else f"[{self.index}]"
        return f"{self.filter_name}.{self.block}{suffix}"

    @property
    def initial(self) -> float:
        return 1.0 if self.block.startswith("h_") else 0.0


def parameter_layout(spec: TunerSpec, configs: FilterConfigs) -> tuple[Parameter, ...]:
    blocks: list[_Block] = []
    if spec.tune_q:
        blocks.append("q")
    if spec.tune_r:
        blocks.extend(("r_bend", "r_imu"))
    if spec.tune_h:
        blocks.extend(("h_bend", "h_imu"))

    layout: list[Parameter] = []
    for name in spec.filters:
        n = getattr(configs, name).n
        for block in blocks:
            if spec.tie_blocks:
                layout.append(Parameter(filter_name=name, block=block, index=None))
            else:
                layout.extend(Parameter(filter_name=name, block=block, index=i) for i in range(n))
    return tuple(layout)


def _scaled(matrix: NDArray[np.float64], log_scale: NDArray[np.float64]) -> NDArray[np.float64]:
    diagonal = np.diag(matrix)
    base = np.where(diagonal > 0, diagonal, const.TUNER_EPSILON)
    exponent = np.clip(log_scale, -_LOG_LIMIT, _LOG_LIMIT)
    target = np.maximum(base * np.exp(exponent), np.minimum(base, const.TUNER_EPSILON))
    scale = np.sqrt(target / base)
    result = matrix * np.outer(scale, scale)
    np.fill_diagonal(result, target)
    return result


def apply_parameters(
    configs: FilterConfigs, layout: Sequence[Parameter], values: Sequence[float]
) -> FilterConfigs:
    """Configs with the parameter vector `values` applied to `configs`."""
    if len(layout) != len(values):
        error_msg = f"got {len(values)} value(s) for {len(layout)} parameter(s)"
        raise exceptions.TuningError(error_msg)

    blocks: dict[tuple[str, str], NDArray[np.float64]] = {}
    for parameter, value in zip(layout, values):
        n = getattr(configs, parameter.filter_name).n
        block = blocks.setdefault(
            (parameter.filter_name, parameter.block), np.full(n, parameter.initial)
        )
        if parameter.index is None:
            block[:] = value
        else:
            block[parameter.index] = value

    def tuned(name: str, config: KalmanConfig) -> KalmanConfig:
        n = config.n
        zeros, ones = np.zeros(n), np.ones(n)
        q = blocks.get((name, "q"), zeros)
        r_bend = blocks.get((name, "r_bend"), zeros)
        r_imu = blocks.get((name, "r_imu"), zeros)
        gains = np.concatenate(
            [blocks.get((name, "h_bend"), ones), blocks.get((name, "h_imu"), ones)]
        )
        return KalmanConfig(
            A=config.A,
            B=config.B,
            H=config.H * gains[:, np.newaxis],
            Q=_scaled(config.Q, q),
            R=_scaled(config.R, np.concatenate([r_bend, r_imu])),
            P0=_scaled(config.P0, r_bend),
        )

    return FilterConfigs(
        orientation=tuned("orientation", configs.orientation),
        coordinate=tuned("coordinate", configs.coordinate),
        meta={**configs.meta, "source": "tuner"},
    )


class ObjectiveResult(NamedTuple):
    loss: float
    position_rmse_mm: float
    orientation_rmse_deg: float

    @property
    def diverged(self) -> bool:
        return not math.isfinite(self.loss)


_DIVERGED = ObjectiveResult(
    loss=const.DIVERGED, position_rmse_mm=math.nan, orientation_rmse_deg=math.nan
)


def objective(
    configs: FilterConfigs,
    measurements: MeasurementSet,
    geoms: Sequence[SegmentGeometry],
    spec: TunerSpec | None = None,
) -> ObjectiveResult:
    """Fusion loss on a log with ground truth.

    loss = position_weight * end-effector RMSE (mm)
         + orientation_weight * mean orientation RMSE (deg).
    A filter that diverges or produces an unusable shape scores +inf.
    """
    spec = spec or TunerSpec()
    if measurements.truth is None:
        error_msg = "tuning needs a log with ground truth"
        raise exceptions.TuningError(error_msg)

    try:
        estimates = run_method(Method.FUSION, measurements, geoms, configs)
    except (exceptions.NumericalError, exceptions.InvalidInputError) as exc:
        logger.debug("candidate configs diverged: %s", exc)
        return _DIVERGED
    position, orientation, _ = point_errors(estimates, measurements.truth)
    if position.size == 0:
        return _DIVERGED

    position_rmse = float(np.sqrt(np.mean(position[:, -1] ** 2)))
    orientation_rmse = float(np.degrees(np.sqrt(np.mean(orientation**2))))
    loss = spec.position_weight * position_rmse + spec.orientation_weight * orientation_rmse
    if not math.isfinite(loss):
        return _DIVERGED
    return ObjectiveResult(
        loss=loss, position_rmse_mm=position_rmse, orientation_rmse_deg=orientation_rmse
    )


class IterationRecord(NamedTuple):
    iteration: int
    loss: float
    position_rmse_mm: float
    orientation_rmse_deg: float
    step_size: float
    backtracks: int
    params: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "loss": self.loss,
            "position_rmse_mm": self.position_rmse_mm,
            "orientation_rmse_deg": self.orientation_rmse_deg,
            "step_size": self.step_size,
            "backtracks": self.backtracks,
            "params": list(self.params),
        }


@dataclass(**_dataclass_options)
class TunerReport:
    spec: TunerSpec
    parameters: tuple[str, ...]
    trace: tuple[IterationRecord, ...]
    """iteration 0 holds the initial configs; every later entry an accepted step"""
    configs: FilterConfigs
    converged: bool
    stop_reason: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def initial_loss(self) -> float:
        return self.trace[0].loss

    @property
    def final_loss(self) -> float:
        return self.trace[-1].loss

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "parameters": list(self.parameters),
            "trace": [record.to_dict() for record in self.trace],
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "configs": self.configs.to_dict(),
            "meta": dict(self.meta),
        }

    def save(self, path: str | PathLike[str]) -> Path:
        target = Path(path)
        target.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return target

    @classmethod
    def load_configs(cls, path: str | PathLike[str]) -> FilterConfigs:
        """Tuned configs of a saved report."""
        try:
            with Path(path).open(encoding="utf-8") as file:
                data = json.load(file)
        except (OSError, json.JSONDecodeError) as exc:
            error_msg = f"cannot read tuner report {path}: {exc}"
            raise exceptions.ConfigError(error_msg) from exc
        return FilterConfigs.from_dict(data["configs"] if "configs" in data else data)


class _Problem:
    def __init__(
        self,
        spec: TunerSpec,
        initial: FilterConfigs,
        measurements: MeasurementSet,
        geoms: Sequence[SegmentGeometry],
    ) -> None:
        self.spec = spec
        self.initial = initial
        self.measurements = measurements
        self.geoms = tuple(geoms)
        self.layout = parameter_layout(spec, initial)

    def configs(self, values: NDArray[np.float64]) -> FilterConfigs:
        return apply_parameters(self.initial, self.layout, values.tolist())

    def evaluate(self, values: NDArray[np.float64]) -> ObjectiveResult:
        try:
            configs = self.configs(values)
        except exceptions.InvalidInputError:
            return _DIVERGED
        return objective(configs, self.measurements, self.geoms, self.spec)

    def gradient(self, values: NDArray[np.float64], pool: ThreadPoolExecutor) -> NDArray[np.float64]:
        steps = self.spec.fd_step * (1.0 + np.abs(values))
        futures = []
        for i, step in enumerate(steps):
            for sign in (1.0, -1.0):
                shifted = values.copy()
                shifted[i] += sign * step
                futures.append(submit_in_stage(pool, self.evaluate, shifted))
        wait(futures)

        losses = np.array([future.result().loss for future in futures]).reshape(-1, 2)
        with np.errstate(invalid="ignore"):
            gradient = (losses[:, 0] - losses[:, 1]) / (2.0 * steps)
        unusable = ~np.isfinite(gradient)
        if np.any(unusable):
            names = [self.layout[i].name for i in np.flatnonzero(unusable)]
            logger.warning("zeroing unusable gradient component(s): %s", ", ".join(names))
            gradient[unusable] = 0.0
        return gradient


@tag_stage("tuning")
def tune(
    spec: TunerSpec,
    initial: FilterConfigs,
    measurements: MeasurementSet,
    geoms: Sequence[SegmentGeometry],
) -> TunerReport:
    """Gradient descent on the fusion loss of a training log.

    Stops when an accepted step improves the loss by less than
    `convergence_tol` (converged), when every backtracked step fails to
    improve it (stalled, not converged), or after `max_iters` iterations.

    Raises:
        TuningError: the log has no ground truth or the initial configs diverge.
    """
    problem = _Problem(spec, initial, measurements, geoms)
    values = np.array([parameter.initial for parameter in problem.layout])
    current = problem.evaluate(values)
    if current.diverged:
        error_msg = "the initial filter configs diverge on the training log"
        raise exceptions.TuningError(error_msg)

    alpha = spec.learning_rate
    trace = [
        IterationRecord(
            0, *current, step_size=alpha, backtracks=0, params=tuple(values.tolist())
        )
    ]
    converged = False
    reason = "max_iters"
    logger.info(
        "tuning %d parameter(s), initial loss %.4f", len(problem.layout), current.loss
    )

    with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
        for iteration in range(1, spec.max_iters + 1):
            gradient = problem.gradient(values, pool)
            if not np.any(gradient):
                converged, reason = True, "zero_gradient"
                break

            candidate, result, backtracks = values, current, 0
            while True:
                candidate = values - alpha * gradient
                result = problem.evaluate(candidate)
                if result.loss < current.loss:
                    break
                if backtracks >= spec.max_backtracks:
                    break
                alpha *= 0.5
                backtracks += 1
                logger.debug("iteration %d: backtracking, step size %.3g", iteration, alpha)

            if not result.loss < current.loss:
                reason = "stalled"
                logger.warning(
                    "tuning stalled at iteration %d with loss %.4f", iteration, current.loss
                )
                break

            improvement = current.loss - result.loss
            values, current = candidate, result
            trace.append(
                IterationRecord(
                    iteration, *current, step_size=alpha, backtracks=backtracks,
                    params=tuple(values.tolist()),
                )
            )
            logger.debug("iteration %d: loss %.6f", iteration, current.loss)
            if backtracks == 0:
                alpha *= 2.0
            if improvement < spec.convergence_tol:
                converged, reason = True, "tolerance"
                break

    logger.info(
        "tuning finished after %d accepted step(s): loss %.4f -> %.4f (%s)",
        len(trace) - 1, trace[0].loss, current.loss, reason,
    )
    return TunerReport(
        spec=spec,
        parameters=tuple(parameter.name for parameter in problem.layout),
        trace=tuple(trace),
        configs=problem.configs(values),
        converged=converged,
        stop_reason=reason,
    )
