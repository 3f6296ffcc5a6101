"""Shape estimation for the four methods.

Fusion
    calibrated bend angles and drift corrected IMU angles, each mapped to
    local endpoints by the PCC model, fused by the coordinate and the
    orientation filter, then composed into the world frame.
Bend
    calibrated bend angles through the PCC model.
IMU_C
    drift corrected IMU angles through the PCC model.
IMU_O
    raw IMU angles through the PCC model.

Batch estimation (`prepare_measurements` then `run_method`) and the
streaming estimators (`create_estimator`) produce the same estimates.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, ClassVar, NamedTuple

import numpy as np
from typing_extensions import Self, override

from proprio_fusion import exceptions
from proprio_fusion.abc import ShapeEstimatorABC
from proprio_fusion.drift import DriftCorrectorBank, correct_stream
from proprio_fusion.kalman import (
    FilterConfigs,
    KalmanState,
    fuse_coordinates,
    fuse_orientation,
    initial_state,
    run_filter,
)
from proprio_fusion.kinematics import compose_world, segment_endpoints
from proprio_fusion.types import Method, RobotShapeEstimate
from proprio_fusion.utils import tag_stage, wrap_angle

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from proprio_fusion.calibration import CalibrationSet
    from proprio_fusion.config import CorrectorSettings
    from proprio_fusion.types import (
        GroundTruthLog,
        SegmentGeometry,
        SensorFrame,
        SensorLog,
    )

__all__ = [
    "MeasurementSet",
    "ShapeEstimates",
    "FusionStates",
    "imu_relative_angles",
    "prepare_measurements",
    "run_method",
    "estimate_shape",
    "create_estimator",
]

logger = logging.getLogger(__name__)

_array_options: dict[str, Any] = {"frozen": True, "eq": False}
if sys.version_info >= (3, 10):
    _array_options["kw_only"] = True
    _array_options["slots"] = False


def imu_relative_angles(yaw: ArrayLike) -> NDArray[np.float64]:
    """Per-segment bend from absolute yaws, `(..., N)`.

    Segment `i` bends by the yaw of sensing point `i` minus the yaw of the
    point before it; the base is fixed at zero yaw.
    """
    values = np.asarray(yaw, dtype=np.float64)
    return wrap_angle(np.diff(values, axis=-1, prepend=0.0))


@dataclass(**_array_options)
class MeasurementSet:
    """Per-segment angles of a whole run, ready for any method."""

    t: NDArray[np.float64]
    theta_bend: NDArray[np.float64]
    """(T, N) calibrated bend angles"""
    bend_clamped: NDArray[np.bool_]
    """(T, N) pair mean outside the calibrated voltage range"""
    theta_imu_raw: NDArray[np.float64]
    theta_imu_corrected: NDArray[np.float64]
    drift_offsets: NDArray[np.float64]
    """(T, N) offset the drift corrector had latched at every sample"""
    truth: GroundTruthLog | None = None

    def __post_init__(self) -> None:
        shape = self.theta_bend.shape
        for name in ("bend_clamped", "theta_imu_raw", "theta_imu_corrected", "drift_offsets"):
            if getattr(self, name).shape != shape:
                error_msg = f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                raise exceptions.DimensionError(error_msg)
        if self.t.shape != shape[:1]:
            error_msg = f"got {self.t.size} timestamp(s) for {shape[0]} frame(s)"
            raise exceptions.DimensionError(error_msg)
        if self.truth is not None and self.truth.thetas.shape != shape:
            error_msg = f"ground truth {self.truth.thetas.shape} does not match {shape}"
            raise exceptions.DimensionError(error_msg)

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def n_segments(self) -> int:
        return int(self.theta_bend.shape[1])

    def angles(self, method: Method) -> NDArray[np.float64]:
        """Input angles of a single-sensor method."""
        sources = {
            Method.BEND: self.theta_bend,
            Method.IMU_C: self.theta_imu_corrected,
            Method.IMU_O: self.theta_imu_raw,
        }
        if method not in sources:
            error_msg = f"{method} has no single-sensor angles"
            raise exceptions.InvalidInputError(error_msg)
        return sources[method]


def prepare_measurements(
    sensors: SensorLog,
    calibration: CalibrationSet,
    corrector: CorrectorSettings | None = None,
    *,
    truth: GroundTruthLog | None = None,
) -> MeasurementSet:
    """Calibrate the bend voltages and drift-correct the IMU angles of a log."""
    if len(calibration) != sensors.n_segments:
        error_msg = (
            f"got {len(calibration)} calibration map(s) "
            f"for {sensors.n_segments} segment(s)"
        )
        raise exceptions.InvalidInputError(error_msg)

    theta_bend, clamped = calibration.orientations(sensors.bend_voltages)
    if np.any(clamped):
        logger.debug("%d bend reading(s) clamped to the calibrated range", int(clamped.sum()))
    raw = imu_relative_angles(sensors.imu_yaw)
    corrected, offsets = correct_stream(raw, theta_bend, corrector)
    return MeasurementSet(
        t=sensors.t,
        theta_bend=theta_bend,
        bend_clamped=clamped,
        theta_imu_raw=raw,
        theta_imu_corrected=corrected,
        drift_offsets=offsets,
        truth=truth,
    )


@dataclass(**_array_options)
class ShapeEstimates:
    """Shapes estimated by one method over a whole run."""

    method: Method
    t: NDArray[np.float64]
    thetas: NDArray[np.float64]
    """(T, N)"""
    local_points: NDArray[np.float64]
    """(T, N, 2)"""
    world_points: NDArray[np.float64]
    """(T, N, 2)"""

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def end_effector(self) -> NDArray[np.float64]:
        return self.world_points[:, -1]

    def frame(self, index: int) -> RobotShapeEstimate:
        return RobotShapeEstimate(
            t=float(self.t[index]),
            method=self.method,
            thetas=self.thetas[index],
            local_points=self.local_points[index],
            world_points=self.world_points[index],
        )


def _fuse_batch(
    measurements: MeasurementSet,
    geoms: Sequence[SegmentGeometry],
    configs: FilterConfigs,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    frames, segments = measurements.theta_bend.shape
    if configs.n_segments != segments:
        error_msg = f"filter configs are for {configs.n_segments} segment(s), got {segments}"
        raise exceptions.DimensionError(error_msg)

    with tag_stage("kinematics"):
        local_bend = segment_endpoints(geoms, measurements.theta_bend)
        local_imu = segment_endpoints(geoms, measurements.theta_imu_corrected)
    with tag_stage("kf_coord"):
        stacked = np.hstack(
            [local_bend.reshape(frames, -1), local_imu.reshape(frames, -1)]
        )
        local = run_filter(configs.coordinate, stacked).reshape(frames, segments, 2)
    with tag_stage("kf_orient"):
        stacked = np.hstack(
            [measurements.theta_bend, measurements.theta_imu_corrected]
        )
        thetas = run_filter(configs.orientation, stacked)
    return thetas, local


def run_method(
    method: Method | str,
    measurements: MeasurementSet,
    geoms: Sequence[SegmentGeometry],
    configs: FilterConfigs | None = None,
) -> ShapeEstimates:
    method = Method(method)
    if len(geoms) != measurements.n_segments:
        error_msg = f"got {len(geoms)} segment(s) for {measurements.n_segments} angle column(s)"
        raise exceptions.InvalidInputError(error_msg)

    if method is Method.FUSION:
        if configs is None:
            error_msg = "fusion needs filter configs"
            raise exceptions.InvalidInputError(error_msg)
        thetas, local = _fuse_batch(measurements, geoms, configs)
    else:
        thetas = measurements.angles(method)
        with tag_stage("kinematics"):
            local = segment_endpoints(geoms, thetas)
    with tag_stage("frame_to_world"):
        world = compose_world(thetas, local)
    return ShapeEstimates(
        method=method,
        t=measurements.t,
        thetas=thetas,
        local_points=local,
        world_points=world,
    )


class FusionStates(NamedTuple):
    orientation: KalmanState | None = None
    coordinate: KalmanState | None = None


def estimate_shape(  # noqa: PLR0913
    frame: SensorFrame,
    calibration: CalibrationSet,
    corrector: DriftCorrectorBank,
    states: FusionStates,
    configs: FilterConfigs,
    geoms: Sequence[SegmentGeometry],
) -> tuple[RobotShapeEstimate, FusionStates]:
    """Fused shape of one frame.

    Bend voltages are calibrated, IMU yaws turned into relative angles and
    drift corrected against them, both angle sets mapped to local endpoints,
    the endpoints and the angles fused, and the result composed into the
    world frame. `corrector` is updated in place; filter states are
    returned, and start from the bend measurements when `None`.
    """
    theta_bend, _ = calibration.orientations(frame.bend_voltage_pairs)
    theta_imu = corrector.update(imu_relative_angles(frame.imu_yaw), theta_bend)

    with tag_stage("kinematics"):
        local_bend = segment_endpoints(geoms, theta_bend)
        local_imu = segment_endpoints(geoms, theta_imu)

    coordinate = states.coordinate or initial_state(configs.coordinate, local_bend.ravel())
    local, coordinate = fuse_coordinates(local_bend, local_imu, coordinate, configs.coordinate)
    orientation = states.orientation or initial_state(configs.orientation, theta_bend)
    thetas, orientation = fuse_orientation(theta_bend, theta_imu, orientation, configs.orientation)

    with tag_stage("frame_to_world"):
        world = compose_world(thetas, local)
    estimate = RobotShapeEstimate(
        t=frame.t,
        method=Method.FUSION,
        thetas=thetas,
        local_points=local,
        world_points=world,
    )
    return estimate, FusionStates(orientation=orientation, coordinate=coordinate)


_registry: dict[Method, type[BaseShapeEstimator]] = {}


class BaseShapeEstimator(ShapeEstimatorABC):
    _method: ClassVar[Method]

    def __init_subclass__(cls, **kwargs: Any) -> None:
        super().__init_subclass__(**kwargs)
        _registry[cls._method] = cls

    def __init__(
        self,
        geoms: Sequence[SegmentGeometry],
        calibration: CalibrationSet | None = None,
        corrector: CorrectorSettings | None = None,
        configs: FilterConfigs | None = None,
    ) -> None:
        self.geoms = tuple(geoms)
        self.calibration = calibration
        self.configs = configs
        self._bank = DriftCorrectorBank(len(self.geoms), corrector)

    @property
    @override
    def method(self) -> Method:
        return self._method

    @property
    @override
    def n_segments(self) -> int:
        return len(self.geoms)

    @override
    def reset(self) -> Self:
        self._bank.reset()
        return self

    def _bend_angles(self, frame: SensorFrame) -> NDArray[np.float64]:
        if self.calibration is None:
            error_msg = f"{self.method} needs a calibration"
            raise exceptions.InvalidInputError(error_msg)
        thetas, _ = self.calibration.orientations(frame.bend_voltage_pairs)
        return thetas

    def _angles(self, frame: SensorFrame) -> NDArray[np.float64]:
        raise NotImplementedError

    @override
    def estimate(self, frame: SensorFrame) -> RobotShapeEstimate:
        thetas = self._angles(frame)
        with tag_stage("kinematics"):
            local = segment_endpoints(self.geoms, thetas)
        with tag_stage("frame_to_world"):
            world = compose_world(thetas, local)
        return RobotShapeEstimate(
            t=frame.t,
            method=self.method,
            thetas=thetas,
            local_points=local,
            world_points=world,
        )


class BendEstimator(BaseShapeEstimator):
    _method = Method.BEND

    @override
    def _angles(self, frame: SensorFrame) -> NDArray[np.float64]:
        return self._bend_angles(frame)


class RawImuEstimator(BaseShapeEstimator):
    _method = Method.IMU_O

    @override
    def _angles(self, frame: SensorFrame) -> NDArray[np.float64]:
        return imu_relative_angles(frame.imu_yaw)


class CorrectedImuEstimator(BaseShapeEstimator):
    _method = Method.IMU_C

    @override
    def _angles(self, frame: SensorFrame) -> NDArray[np.float64]:
        return self._bank.update(imu_relative_angles(frame.imu_yaw), self._bend_angles(frame))


class FusionEstimator(BaseShapeEstimator):
    _method = Method.FUSION

    @override
    def __init__(
        self,
        geoms: Sequence[SegmentGeometry],
        calibration: CalibrationSet | None = None,
        corrector: CorrectorSettings | None = None,
        configs: FilterConfigs | None = None,
    ) -> None:
        if calibration is None or configs is None:
            error_msg = "fusion needs a calibration and filter configs"
            raise exceptions.InvalidInputError(error_msg)
        super().__init__(geoms, calibration, corrector, configs)
        self._states = FusionStates()

    @override
    def reset(self) -> Self:
        self._states = FusionStates()
        return super().reset()

    @override
    def estimate(self, frame: SensorFrame) -> RobotShapeEstimate:
        assert self.calibration is not None  # noqa: S101
        assert self.configs is not None  # noqa: S101
        estimate, self._states = estimate_shape(
            frame, self.calibration, self._bank, self._states, self.configs, self.geoms
        )
        return estimate


def create_estimator(
    method: Method | str,
    geoms: Sequence[SegmentGeometry],
    calibration: CalibrationSet | None = None,
    *,
    corrector: CorrectorSettings | None = None,
    configs: FilterConfigs | None = None,
) -> ShapeEstimatorABC:
    """Streaming estimator of `method`."""
    try:
        estimator_class = _registry[Method(method)]
    except (KeyError, ValueError) as exc:
        error_msg = f"Not found method: {method}"
        raise exceptions.InvalidInputError(error_msg) from exc
    return estimator_class(geoms, calibration, corrector, configs)
