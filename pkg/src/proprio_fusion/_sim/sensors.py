from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from proprio_fusion import exceptions
from proprio_fusion.calibration import CalibrationMap, inverse
from proprio_fusion.config import BendNoiseModel, ImuNoiseModel
from proprio_fusion.utils import derive_seed, wrap_angle

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from proprio_fusion.types import GroundTruthLog

__all__ = [
    "gyro_bias_rates",
    "synthesize_imu",
    "synthesize_bend",
    "sensor_characteristics",
]

logger = logging.getLogger(__name__)

_SLOPE_RANGE = (0.7, 0.85)
"""rad per volt around the neutral voltage"""
_CURVATURE_RANGE = (-0.08, 0.08)
"""rad per volt squared"""
_NEUTRAL_VOLTAGE_RANGE = (1.5, 1.8)
_RATE_EPSILON = 1e-12
_GYRO_STREAM = 1


def _generator(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sensor_characteristics(
    n: int, seed: int | np.random.Generator, *, v_ref: float = 3.3
) -> tuple[CalibrationMap, ...]:
    """Physical voltage to orientation curves, one per sensor pair.

    Both sensors of a pair share the curve. Each curve is
    `theta = s (v - v0) + k (v - v0)**2` and is monotonic on `[0, v_ref]`.
    """
    rng = _generator(seed)
    slope = rng.uniform(*_SLOPE_RANGE, size=n)
    curvature = rng.uniform(*_CURVATURE_RANGE, size=n)
    neutral = rng.uniform(*_NEUTRAL_VOLTAGE_RANGE, size=n)
    return tuple(
        CalibrationMap(
            a=float(k),
            b=float(s - 2.0 * k * v0),
            c=float(k * v0**2 - s * v0),
            v_min=0.0,
            v_max=v_ref,
        )
        for s, k, v0 in zip(slope, curvature, neutral)
    )


def gyro_bias_rates(
    n: int, model: ImuNoiseModel | None = None, robot_seed: int = 0
) -> NDArray[np.float64]:
    """Constant gyro bias of every IMU of one robot (rad / s).

    All IMUs share the magnitude `bias_rate` and one random sign, and each
    deviates from it by `bias_rate_spread`. The rates belong to the robot, so
    they are drawn from the robot seed and stay fixed across runs.
    """
    model = model or ImuNoiseModel()
    rng = np.random.default_rng(derive_seed(robot_seed, _GYRO_STREAM))
    sign = float(rng.choice([-1.0, 1.0]))
    return sign * model.bias_rate + rng.normal(0.0, model.bias_rate_spread, size=n)


def synthesize_imu(
    gt: GroundTruthLog,
    model: ImuNoiseModel | None = None,
    seed: int | np.random.Generator = 0,
    *,
    bias_rates: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Absolute yaw of every sensing point, `(T, N)` wrapped to (-pi, pi].

    yaw = true heading + gyro bias ramp + random-walk bias + white noise,
    plus a disturbance proportional to the lateral acceleration of the
    sensing point while a force event is active.

    The ramp uses `bias_rates` (see `gyro_bias_rates`, default robot 0); the
    random walk and the white noise are the only terms drawn from `seed`.
    """
    model = model or ImuNoiseModel()
    rng = _generator(seed)
    frames, segments = gt.thetas.shape
    heading = np.cumsum(gt.thetas, axis=1)

    if bias_rates is None:
        bias_rates = gyro_bias_rates(segments, model)
    rates = np.asarray(bias_rates, dtype=np.float64)
    if rates.shape != (segments,):
        error_msg = f"expected {segments} gyro bias rate(s), got shape {rates.shape}"
        raise exceptions.InvalidInputError(error_msg)
    elapsed = (gt.t - gt.t[0])[:, np.newaxis]
    ramp = rates * elapsed

    steps = rng.normal(0.0, 1.0, size=(frames, segments))
    steps[0] = 0.0
    dt = np.diff(gt.t, prepend=gt.t[0])[:, np.newaxis]
    walk = np.cumsum(steps * model.drift_rate_std * np.sqrt(dt), axis=0)

    white = rng.normal(0.0, 1.0, size=(frames, segments)) * model.yaw_white_noise_std

    yaw = heading + ramp + walk + white
    if model.acceleration_spike_gain > 0 and frames > 2 and np.any(gt.impulse_active):  # noqa: PLR2004
        yaw += _acceleration_spikes(gt, heading, model.acceleration_spike_gain)
    return wrap_angle(yaw)


def _acceleration_spikes(
    gt: GroundTruthLog, heading: NDArray[np.float64], gain: float
) -> NDArray[np.float64]:
    velocity = np.gradient(gt.world_points, gt.t, axis=0)
    acceleration = np.gradient(velocity, gt.t, axis=0)
    # lateral axis of the sensing point is the tangent turned by -90 degrees
    lateral = acceleration[..., 0] * np.cos(heading) - acceleration[..., 1] * np.sin(
        heading
    )
    return np.where(gt.impulse_active[:, np.newaxis], gain * lateral, 0.0)


def _direction_with_memory(rate: NDArray[np.float64]) -> NDArray[np.float64]:
    """Sign of `rate`, holding the last non-zero sign while at rest."""
    sign = np.where(np.abs(rate) > _RATE_EPSILON, np.sign(rate), 0.0)
    rows = np.arange(sign.shape[0])[:, np.newaxis]
    last = np.maximum.accumulate(np.where(sign != 0, rows, 0), axis=0)
    return np.take_along_axis(sign, last, axis=0)


def synthesize_bend(
    gt: GroundTruthLog,
    model: BendNoiseModel | None = None,
    characteristics: Sequence[CalibrationMap] | None = None,
    seed: int | np.random.Generator = 0,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Voltages of both sensors of every pair and their out-of-range flags.

    The sensed bend is the true bend plus `nonuniform_gain` times the sub-arc
    imbalance, shifted by half the hysteresis width in the direction of
    motion. It is mapped through the inverse characteristic, each sensor adds
    its own white noise, and the result is quantised and clamped to the ADC.

    Returns:
        `(T, N, 2)` voltages and `(T, N, 2)` flags set where the reading was
        clamped to `[0, v_ref]`.
    """
    model = model or BendNoiseModel()
    rng = _generator(seed)
    frames, segments = gt.thetas.shape
    if characteristics is None:
        characteristics = sensor_characteristics(segments, rng, v_ref=model.v_ref)
    if len(characteristics) != segments:
        error_msg = (
            f"got {len(characteristics)} sensor characteristic(s) "
            f"for {segments} segment(s)"
        )
        raise exceptions.InvalidInputError(error_msg)

    sensed = gt.thetas + model.nonuniform_gain * gt.sub_arc_difference
    if model.hysteresis_width > 0 and frames > 1:
        direction = _direction_with_memory(np.gradient(sensed, axis=0))
        sensed = sensed + 0.5 * model.hysteresis_width * direction

    ideal = np.column_stack(
        [inverse(curve, sensed[:, i]) for i, curve in enumerate(characteristics)]
    )
    noise = rng.normal(0.0, 1.0, size=(frames, segments, 2)) * model.voltage_noise_std
    voltages = ideal[..., np.newaxis] + noise
    if model.quantization_step > 0:
        voltages = np.round(voltages / model.quantization_step) * model.quantization_step

    out_of_range = (voltages < 0.0) | (voltages > model.v_ref)
    if np.any(out_of_range):
        logger.warning(
            "%d bend reading(s) clamped to the ADC range", int(out_of_range.sum())
        )
    return np.clip(voltages, 0.0, model.v_ref), out_of_range
