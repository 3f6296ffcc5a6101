"""Linear Kalman filters that fuse bend and IMU derived measurements.

Two filters run side by side and share no state: one over the N segment
angles, one over the 2N local endpoint coordinates. Both stack the bend
measurement block on top of the IMU block, so `m = 2 n`.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np
from scipy import linalg, signal
from typing_extensions import Self

from proprio_fusion import const, exceptions
from proprio_fusion.kinematics import segment_endpoints
from proprio_fusion.utils import as_finite_array, canonical_json, tag_stage

if TYPE_CHECKING:
    from collections.abc import Sequence
    from os import PathLike

    from numpy.typing import ArrayLike, NDArray

    from proprio_fusion.calibration import CalibrationMap, CalibrationSet
    from proprio_fusion.config import BendNoiseModel, CorrectorSettings, ImuNoiseModel
    from proprio_fusion.types import SegmentGeometry

__all__ = [
    "KalmanConfig",
    "KalmanState",
    "KalmanFilter",
    "FilterConfigs",
    "SteadyState",
    "predict",
    "update",
    "fuse_orientation",
    "fuse_coordinates",
    "initial_state",
    "steady_state",
    "run_filter",
    "structural_config",
    "default_configs",
]

logger = logging.getLogger(__name__)

_array_options: dict[str, Any] = {"frozen": True, "eq": False}
if sys.version_info >= (3, 10):
    _array_options["kw_only"] = True
    _array_options["slots"] = False

_MATRICES = ("A", "B", "H", "Q", "R", "P0")
_JACOBIAN_GRID = 51


def _symmetrize(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (matrix + matrix.T)


def _frozen(values: ArrayLike, name: str) -> NDArray[np.float64]:
    array = as_finite_array(values, name, ndim=2).copy()
    array.setflags(write=False)
    return array


def _check_psd(matrix: NDArray[np.float64], name: str) -> None:
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=const.PSD_TOLERANCE * scale):
        error_msg = f"{name} must be symmetric"
        raise exceptions.InvalidInputError(error_msg)
    smallest = float(np.min(linalg.eigvalsh(matrix), initial=0.0))
    if smallest < -const.PSD_TOLERANCE * scale:
        error_msg = f"{name} must be positive semi-definite, smallest eigenvalue {smallest:g}"
        raise exceptions.InvalidInputError(error_msg)


@dataclass(**_array_options)
class KalmanConfig:
    """Model matrices of one filter.

    `A` is the state transition, `B` the control matrix (the control input is
    always zero), `H` maps the `n` states onto the stacked `[bend; imu]`
    measurement of size `2 n`.
    """

    A: NDArray[np.float64]  # noqa: N815
    B: NDArray[np.float64]  # noqa: N815
    H: NDArray[np.float64]  # noqa: N815
    Q: NDArray[np.float64]  # noqa: N815
    R: NDArray[np.float64]  # noqa: N815
    P0: NDArray[np.float64]  # noqa: N815

    def __post_init__(self) -> None:
        for name in _MATRICES:
            object.__setattr__(self, name, _frozen(getattr(self, name), name))

        n = self.A.shape[0]
        expected = {
            "A": (n, n),
            "H": (2 * n, n),
            "Q": (n, n),
            "R": (2 * n, 2 * n),
            "P0": (n, n),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                error_msg = f"{name} must be {shape} for {n} state(s), got {getattr(self, name).shape}"
                raise exceptions.DimensionError(error_msg)
        if self.B.shape[0] != n:
            error_msg = f"B must have {n} row(s), got {self.B.shape}"
            raise exceptions.DimensionError(error_msg)

        for name in ("Q", "R", "P0"):
            _check_psd(getattr(self, name), name)
        try:
            linalg.cholesky(self.R, lower=True)
        except linalg.LinAlgError as exc:
            error_msg = "R must be positive definite"
            raise exceptions.InvalidInputError(error_msg) from exc

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def m(self) -> int:
        return int(self.H.shape[0])

    def to_dict(self) -> dict[str, Any]:
        """Row-major matrices with their declared shapes."""
        return {
            "n": self.n,
            "m": self.m,
            **{
                name: {
                    "shape": list(getattr(self, name).shape),
                    "data": getattr(self, name).ravel().tolist(),
                }
                for name in _MATRICES
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            matrices = {
                name: np.asarray(data[name]["data"], dtype=np.float64).reshape(
                    data[name]["shape"]
                )
                for name in _MATRICES
            }
        except (KeyError, TypeError, ValueError) as exc:
            error_msg = f"invalid filter config: {exc!r}"
            raise exceptions.ConfigError(error_msg) from exc

        config = cls(**matrices)
        if (config.n, config.m) != (data.get("n", config.n), data.get("m", config.m)):
            error_msg = (
                f"declared dimensions n={data.get('n')}, m={data.get('m')} "
                f"disagree with the matrices ({config.n}, {config.m})"
            )
            raise exceptions.ConfigError(error_msg)
        return config


@dataclass(**_array_options)
class KalmanState:
    x_hat: NDArray[np.float64]
    P: NDArray[np.float64]  # noqa: N815
    k: int = 0
    """number of predict steps taken"""


class SteadyState(NamedTuple):
    gain: NDArray[np.float64]
    """(n, m) converged Kalman gain"""
    covariance: NDArray[np.float64]
    """(n, n) converged posterior covariance"""
    iterations: int


def _check_state(state: KalmanState, config: KalmanConfig) -> None:
    if state.x_hat.shape != (config.n,) or state.P.shape != (config.n, config.n):
        error_msg = (
            f"state ({state.x_hat.shape}, {state.P.shape}) does not match "
            f"a filter of {config.n} state(s)"
        )
        raise exceptions.DimensionError(error_msg)


def initial_state(
    config: KalmanConfig, x0: ArrayLike | None = None
) -> KalmanState:
    x_hat = (
        np.zeros(config.n)
        if x0 is None
        else as_finite_array(x0, "initial state", ndim=1).copy()
    )
    state = KalmanState(x_hat=x_hat, P=np.array(config.P0), k=0)
    _check_state(state, config)
    return state


def predict(
    state: KalmanState, config: KalmanConfig, u: ArrayLike | None = None
) -> KalmanState:
    """Time update: `x = A x + B u`, `P = A P A' + Q`."""
    _check_state(state, config)
    x_hat = config.A @ state.x_hat
    if u is not None:
        control = np.asarray(u, dtype=np.float64)
        if control.shape != (config.B.shape[1],):
            error_msg = f"control input must be ({config.B.shape[1]},), got {control.shape}"
            raise exceptions.DimensionError(error_msg)
        x_hat = x_hat + config.B @ control
    P = _symmetrize(config.A @ state.P @ config.A.T + config.Q)  # noqa: N806
    return KalmanState(x_hat=x_hat, P=P, k=state.k + 1)


def _gain(
    P: NDArray[np.float64], config: KalmanConfig  # noqa: N803
) -> NDArray[np.float64]:
    S = _symmetrize(config.H @ P @ config.H.T + config.R)  # noqa: N806
    if not np.all(np.isfinite(S)):
        error_msg = "innovation covariance is not finite"
        raise exceptions.NumericalError(error_msg, diagnostics={"diag": np.diag(S).tolist()})
    try:
        factor = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        error_msg = "innovation covariance is singular"
        raise exceptions.NumericalError(
            error_msg,
            diagnostics={"cond": float(np.linalg.cond(S)), "diag": np.diag(S).tolist()},
        ) from exc
    return linalg.cho_solve(factor, config.H @ P).T


def _joseph(
    P: NDArray[np.float64], K: NDArray[np.float64], config: KalmanConfig  # noqa: N803
) -> NDArray[np.float64]:
    residual = np.eye(config.n) - K @ config.H
    return _symmetrize(residual @ P @ residual.T + K @ config.R @ K.T)


def update(state: KalmanState, config: KalmanConfig, z: ArrayLike) -> KalmanState:
    """Measurement update with the Joseph-form covariance.

    Raises:
        NumericalError: the innovation covariance cannot be factorised.
    """
    _check_state(state, config)
    measurement = as_finite_array(z, "measurement", ndim=1)
    if measurement.shape != (config.m,):
        error_msg = f"measurement must be ({config.m},), got {measurement.shape}"
        raise exceptions.DimensionError(error_msg)

    K = _gain(state.P, config)  # noqa: N806
    x_hat = state.x_hat + K @ (measurement - config.H @ state.x_hat)
    return KalmanState(x_hat=x_hat, P=_joseph(state.P, K, config), k=state.k)


def _stack(
    bend: NDArray[np.float64], imu: NDArray[np.float64], config: KalmanConfig
) -> NDArray[np.float64]:
    if bend.shape != imu.shape or bend.size != config.n:
        error_msg = (
            f"expected {config.n} bend and {config.n} imu values, "
            f"got {bend.shape} and {imu.shape}"
        )
        raise exceptions.DimensionError(error_msg)
    return np.concatenate([bend.ravel(), imu.ravel()])


@tag_stage("kf_orient")
def fuse_orientation(
    bend_thetas: ArrayLike,
    imu_thetas: ArrayLike,
    state: KalmanState,
    config: KalmanConfig,
) -> tuple[NDArray[np.float64], KalmanState]:
    """One predict and update cycle of the orientation filter.

    Returns:
        fused angles `(N,)` and the new state.
    """
    z = _stack(
        as_finite_array(bend_thetas, "bend angles", ndim=1),
        as_finite_array(imu_thetas, "imu angles", ndim=1),
        config,
    )
    state = update(predict(state, config), config, z)
    return state.x_hat.copy(), state


@tag_stage("kf_coord")
def fuse_coordinates(
    bend_points: ArrayLike,
    imu_points: ArrayLike,
    state: KalmanState,
    config: KalmanConfig,
) -> tuple[NDArray[np.float64], KalmanState]:
    """One predict and update cycle of the coordinate filter.

    Points are `(N, 2)` local endpoints; the state orders them
    `x1, y1, x2, y2, ...`.

    Returns:
        fused endpoints `(N, 2)` and the new state.
    """
    bend = as_finite_array(bend_points, "bend endpoints", ndim=2)
    imu = as_finite_array(imu_points, "imu endpoints", ndim=2)
    state = update(predict(state, config), config, _stack(bend, imu, config))
    return state.x_hat.reshape(-1, 2), state


class KalmanFilter:
    """A config and the state it evolves.

    Without an explicit initial state the first call to `step` starts from
    the bend block of its measurement.
    """

    def __init__(self, config: KalmanConfig, x0: ArrayLike | None = None) -> None:
        self.config = config
        self._x0 = None if x0 is None else np.asarray(x0, dtype=np.float64)
        self.state: KalmanState | None = None
        self.reset()

    def reset(self) -> Self:
        self.state = None if self._x0 is None else initial_state(self.config, self._x0)
        return self

    def step(self, z: ArrayLike) -> NDArray[np.float64]:
        measurement = as_finite_array(z, "measurement", ndim=1)
        if self.state is None:
            self.state = initial_state(self.config, measurement[: self.config.n])
        self.state = update(predict(self.state, self.config), self.config, measurement)
        return self.state.x_hat.copy()


def _gain_sequence(
    config: KalmanConfig, steps: int
) -> tuple[list[NDArray[np.float64]], NDArray[np.float64] | None]:
    """Gains of the first steps until the recursion settles, and the settled gain."""
    gains: list[NDArray[np.float64]] = []
    P = np.array(config.P0)  # noqa: N806
    previous: NDArray[np.float64] | None = None
    for _ in range(steps):
        P_prior = _symmetrize(config.A @ P @ config.A.T + config.Q)  # noqa: N806
        K = _gain(P_prior, config)  # noqa: N806
        if previous is not None and np.max(np.abs(K - previous)) <= const.GAIN_TOLERANCE:
            return gains, K
        gains.append(K)
        P = _joseph(P_prior, K, config)  # noqa: N806
        previous = K
    return gains, None


def steady_state(config: KalmanConfig, max_iters: int = 100_000) -> SteadyState:
    """Iterate the Riccati recursion until the gain stops changing.

    Raises:
        NumericalError: no convergence within `max_iters` steps.
    """
    P = np.array(config.P0)  # noqa: N806
    previous: NDArray[np.float64] | None = None
    for iteration in range(1, max_iters + 1):
        P_prior = _symmetrize(config.A @ P @ config.A.T + config.Q)  # noqa: N806
        K = _gain(P_prior, config)  # noqa: N806
        P = _joseph(P_prior, K, config)  # noqa: N806
        if previous is not None and np.max(np.abs(K - previous)) <= const.GAIN_TOLERANCE:
            return SteadyState(gain=K, covariance=P, iterations=iteration)
        previous = K

    error_msg = f"Riccati recursion did not converge in {max_iters} steps"
    raise exceptions.NumericalError(error_msg, diagnostics={"max_iters": max_iters})


def run_filter(
    config: KalmanConfig, measurements: ArrayLike, x0: ArrayLike | None = None
) -> NDArray[np.float64]:
    """Filter a whole `(T, m)` measurement array.

    Gains do not depend on the data, so once the Riccati recursion settles
    the constant-gain recurrence `x = (I - K H) A x + K z` takes over; with a
    diagonal recurrence matrix every state is a first-order IIR filter.
    The result matches stepping a `KalmanFilter` through the same data.

    Returns:
        `(T, n)` posterior state estimates.
    """
    Z = as_finite_array(measurements, "measurements", ndim=2)  # noqa: N806
    if Z.shape[1] != config.m:
        error_msg = f"measurements must have {config.m} column(s), got {Z.shape[1]}"
        raise exceptions.DimensionError(error_msg)
    steps = Z.shape[0]
    estimates = np.empty((steps, config.n))
    if steps == 0:
        return estimates

    x_hat = (
        Z[0, : config.n].copy()
        if x0 is None
        else as_finite_array(x0, "initial state", ndim=1).copy()
    )
    gains, settled = _gain_sequence(config, steps)
    for k, K in enumerate(gains):  # noqa: N806
        prior = config.A @ x_hat
        x_hat = prior + K @ (Z[k] - config.H @ prior)
        estimates[k] = x_hat

    start = len(gains)
    if settled is not None and start < steps:
        transition = (np.eye(config.n) - settled @ config.H) @ config.A
        drive = Z[start:] @ settled.T
        diagonal = np.diag(transition)
        if np.array_equal(transition, np.diag(diagonal)):
            for i, pole in enumerate(diagonal):
                estimates[start:, i], _ = signal.lfilter(
                    [1.0], [1.0, -pole], drive[:, i], zi=[pole * x_hat[i]]
                )
        else:
            for k in range(start, steps):
                x_hat = transition @ x_hat + drive[k - start]
                estimates[k] = x_hat
        logger.debug("filter gain settled after %d step(s)", start)

    if not np.all(np.isfinite(estimates)):
        bad = int(np.argmax(~np.all(np.isfinite(estimates), axis=1)))
        error_msg = f"filter diverged at step {bad}"
        raise exceptions.NumericalError(error_msg, diagnostics={"step": bad})
    return estimates


def _diagonal(values: ArrayLike, n: int, name: str) -> NDArray[np.float64]:
    array = np.broadcast_to(np.asarray(values, dtype=np.float64), (n,))
    if np.any(array < 0) or not np.all(np.isfinite(array)):
        error_msg = f"{name} variances must be finite and >= 0"
        raise exceptions.InvalidInputError(error_msg)
    return array


def structural_config(
    n: int, q: ArrayLike, r_bend: ArrayLike, r_imu: ArrayLike
) -> KalmanConfig:
    """`A = I`, `B = 0`, `H = [I; I]`, diagonal noise and `P0 = R_bend`."""
    if n < 1:
        error_msg = f"a filter needs at least one state, got {n}"
        raise exceptions.DimensionError(error_msg)
    q_diag = _diagonal(q, n, "process")
    bend = _diagonal(r_bend, n, "bend")
    imu = _diagonal(r_imu, n, "imu")
    identity = np.eye(n)
    return KalmanConfig(
        A=identity,
        B=np.zeros((n, n)),
        H=np.vstack([identity, identity]),
        Q=np.diag(q_diag),
        R=np.diag(np.concatenate([bend, imu])),
        P0=np.diag(bend),
    )


@dataclass(**_array_options)
class FilterConfigs:
    """The orientation and the coordinate filter of one robot."""

    orientation: KalmanConfig
    coordinate: KalmanConfig
    meta: dict[str, Any] = field(default_factory=dict)
    """provenance written alongside the matrices"""

    def __post_init__(self) -> None:
        if self.coordinate.n != 2 * self.orientation.n:
            error_msg = (
                f"coordinate filter has {self.coordinate.n} state(s), "
                f"expected {2 * self.orientation.n}"
            )
            raise exceptions.DimensionError(error_msg)

    @property
    def n_segments(self) -> int:
        return self.orientation.n

    def to_dict(self) -> dict[str, Any]:
        return {
            "orientation": self.orientation.to_dict(),
            "coordinate": self.coordinate.to_dict(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            return cls(
                orientation=KalmanConfig.from_dict(data["orientation"]),
                coordinate=KalmanConfig.from_dict(data["coordinate"]),
                meta=dict(data.get("meta", {})),
            )
        except (KeyError, TypeError) as exc:
            error_msg = f"invalid filter configs: {exc!r}"
            raise exceptions.ConfigError(error_msg) from exc

    def save(self, path: str | PathLike[str]) -> Path:
        target = Path(path)
        target.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return target

    @classmethod
    def load(cls, path: str | PathLike[str]) -> Self:
        try:
            with Path(path).open(encoding="utf-8") as file:
                data = json.load(file)
        except (OSError, json.JSONDecodeError) as exc:
            error_msg = f"cannot read filter configs {path}: {exc}"
            raise exceptions.ConfigError(error_msg) from exc
        return cls.from_dict(data)


def _mean_slope(maps: Sequence[CalibrationMap]) -> NDArray[np.float64]:
    slopes = []
    for cal_map in maps:
        grid = np.linspace(cal_map.v_min, cal_map.v_max, 33)
        slopes.append(float(np.sqrt(np.mean(cal_map.derivative(grid) ** 2))))
    return np.asarray(slopes)


def _endpoint_gains(geoms: Sequence[SegmentGeometry]) -> NDArray[np.float64]:
    """RMS sensitivity of every local coordinate to its bend angle, `(N, 2)`."""
    bound = const.RANDOM_CURVATURE_RANGE_RAD
    grid = np.linspace(-bound, bound, _JACOBIAN_GRID)
    thetas = np.repeat(grid[:, np.newaxis], len(geoms), axis=1)
    jacobian = np.gradient(segment_endpoints(geoms, thetas), grid, axis=0)
    return np.mean(jacobian**2, axis=0)


def default_configs(  # noqa: PLR0913
    geoms: Sequence[SegmentGeometry],
    imu_model: ImuNoiseModel,
    bend_model: BendNoiseModel,
    calibration: CalibrationSet | Sequence[CalibrationMap] | None = None,
    corrector: CorrectorSettings | None = None,
    *,
    sample_rate: float = const.DEFAULT_SAMPLE_RATE_HZ,
) -> FilterConfigs:
    """Initial configs derived from the sensor noise models.

    Bend angle variance combines the pair-mean voltage noise seen through the
    calibration slope, quantisation and half the hysteresis width. IMU angle
    variance is the white noise of the yaw difference plus the residual
    offset the drift corrector tolerates. Coordinate variances follow from
    the RMS sensitivity of each endpoint coordinate to its bend angle.
    """
    n = len(geoms)
    maps = getattr(calibration, "maps", calibration)
    slope = np.ones(n) if maps is None else _mean_slope(maps)
    if slope.size != n:
        error_msg = f"got {slope.size} calibration map(s) for {n} segment(s)"
        raise exceptions.InvalidInputError(error_msg)

    voltage_var = bend_model.voltage_noise_std**2 + bend_model.quantization_step**2 / 12.0
    r_bend = slope**2 * voltage_var / 2.0 + (0.5 * bend_model.hysteresis_width) ** 2

    yaw_var = np.full(n, 2.0 * imu_model.yaw_white_noise_std**2)
    yaw_var[0] = imu_model.yaw_white_noise_std**2
    threshold = corrector.threshold if corrector is not None else const.DEFAULT_THRESHOLD_RAD
    r_imu = yaw_var + threshold**2 / 3.0

    q = np.full(n, (const.DEFAULT_MOTION_RATE_RAD_S / sample_rate) ** 2)
    floor = const.VARIANCE_FLOOR
    orientation = structural_config(
        n, np.maximum(q, floor), np.maximum(r_bend, floor), np.maximum(r_imu, floor)
    )

    gains = _endpoint_gains(geoms).ravel()
    coordinate = structural_config(
        2 * n,
        np.maximum(np.repeat(q, 2) * gains, floor),
        np.maximum(np.repeat(r_bend, 2) * gains, floor),
        np.maximum(np.repeat(r_imu, 2) * gains, floor),
    )
    logger.debug(
        "default filter noise: r_bend %s, r_imu %s (deg)",
        np.round(np.degrees(np.sqrt(r_bend)), 3).tolist(),
        np.round(np.degrees(np.sqrt(r_imu)), 3).tolist(),
    )
    return FilterConfigs(
        orientation=orientation, coordinate=coordinate, meta={"source": "noise_model"}
    )
