from __future__ import annotations

import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, overload

import numpy as np
from typing_extensions import override

from proprio_fusion import exceptions

if TYPE_CHECKING:
    from numpy.typing import NDArray

__all__ = [
    "Method",
    "ScenarioKind",
    "SegmentGeometry",
    "PlanarPoint",
    "PlanarRotation",
    "RobotShapeEstimate",
    "GroundTruthFrame",
    "SensorFrame",
    "GroundTruthLog",
    "SensorLog",
]

_dataclass_options: dict[str, Any] = {"frozen": True}
if sys.version_info >= (3, 10):
    _dataclass_options["kw_only"] = True
    _dataclass_options["slots"] = False

_array_options: dict[str, Any] = {**_dataclass_options, "eq": False}


class Method(str, Enum):
    """Shape estimation method."""

    FUSION = "Fusion"
    BEND = "Bend"
    IMU_C = "IMU_C"
    IMU_O = "IMU_O"

    @override
    def __str__(self) -> str:
        return self.value


class ScenarioKind(str, Enum):
    """Trajectory kind: three validation regimes plus training and drift runs."""

    SWEEP = "I"
    FORCE = "II"
    CONTACT = "III"
    TRAINING = "T"
    DRIFT = "D"

    @override
    def __str__(self) -> str:
        return self.value


@dataclass(**_dataclass_options)
class SegmentGeometry:
    index: int
    """1-based position of the segment in the chain."""
    arc_length: float
    """length of the bending arc (mm)"""
    offset_length: float = 0.0
    """length of the rigid connector (mm)"""
    offset_follows_bend: bool | None = None
    """whether the connector sits at the end of the arc and rotates with it.
    `None` resolves from the index: odd segments follow the bend."""

    def __post_init__(self) -> None:
        if self.index < 1:
            error_msg = f"segment index must be >= 1, got {self.index}"
            raise exceptions.InvalidInputError(error_msg)
        if not math.isfinite(self.arc_length) or self.arc_length <= 0:
            error_msg = f"arc_length must be > 0, got {self.arc_length}"
            raise exceptions.InvalidInputError(error_msg)
        if not math.isfinite(self.offset_length) or self.offset_length < 0:
            error_msg = f"offset_length must be >= 0, got {self.offset_length}"
            raise exceptions.InvalidInputError(error_msg)
        if self.offset_follows_bend is None:
            object.__setattr__(self, "offset_follows_bend", self.index % 2 == 1)

    @property
    def length(self) -> float:
        return self.arc_length + self.offset_length

    def to_dict(self) -> dict[str, Any]:
        return {
            "arc_length_mm": self.arc_length,
            "offset_length_mm": self.offset_length,
            "offset_follows_bend": bool(self.offset_follows_bend),
        }


@dataclass(**_dataclass_options)
class PlanarPoint:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            error_msg = f"point must be finite, got ({self.x}, {self.y})"
            raise exceptions.InvalidInputError(error_msg)

    def __add__(self, other: PlanarPoint) -> PlanarPoint:
        return PlanarPoint(x=self.x + other.x, y=self.y + other.y)

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y], dtype=np.float64)

    @classmethod
    def from_array(cls, values: NDArray[np.float64]) -> PlanarPoint:
        return cls(x=float(values[0]), y=float(values[1]))


@dataclass(**_dataclass_options)
class PlanarRotation:
    """Frame to frame rotation contributed by one bent segment.

    The matrix maps coordinates expressed in the distal frame into the
    proximal frame; a positive angle turns the tangent toward +x.
    """

    angle: float

    @property
    def matrix(self) -> NDArray[np.float64]:
        cos, sin = math.cos(self.angle), math.sin(self.angle)
        return np.array([[cos, sin], [-sin, cos]], dtype=np.float64)

    def __matmul__(self, other: PlanarRotation) -> PlanarRotation:
        return PlanarRotation(angle=self.angle + other.angle)

    def inverse(self) -> PlanarRotation:
        return PlanarRotation(angle=-self.angle)

    def apply(self, point: PlanarPoint) -> PlanarPoint:
        return PlanarPoint.from_array(self.matrix @ point.as_array())


@dataclass(**_array_options)
class RobotShapeEstimate:
    t: float
    method: Method
    thetas: NDArray[np.float64]
    """(N,) per-segment bend angles (rad)"""
    local_points: NDArray[np.float64]
    """(N, 2) segment endpoints in their own frames (mm)"""
    world_points: NDArray[np.float64]
    """(N, 2) sensing-point positions in the world frame (mm)"""

    @property
    def end_effector(self) -> NDArray[np.float64]:
        return self.world_points[-1]


@dataclass(**_array_options)
class GroundTruthFrame:
    t: float
    thetas: NDArray[np.float64]
    world_points: NDArray[np.float64]
    pcc_violation: NDArray[np.bool_]
    """(N,) segments whose arc is not of constant curvature in this frame"""
    impulse_active: bool = False
    contact: bool = False


@dataclass(**_array_options)
class SensorFrame:
    t: float
    imu_yaw: NDArray[np.float64]
    """(N,) absolute yaw of each sensing point (rad, wrapped)"""
    bend_voltage_pairs: NDArray[np.float64]
    """(N, 2) voltages of the two parallel bend sensors (V)"""
    bend_out_of_range: NDArray[np.bool_] = field(
        default_factory=lambda: np.zeros((0, 2), dtype=bool)
    )


def _check_timestamps(t: NDArray[np.float64]) -> None:
    if t.ndim != 1:
        error_msg = f"timestamps must be 1-d, got shape {t.shape}"
        raise exceptions.DimensionError(error_msg)
    if t.size > 1 and not np.all(np.diff(t) > 0):
        error_msg = "timestamps must be strictly increasing"
        raise exceptions.InvalidInputError(error_msg)


@dataclass(**_array_options)
class GroundTruthLog(Sequence[GroundTruthFrame]):
    """Columnar ground truth of one run; iterates as `GroundTruthFrame`."""

    t: NDArray[np.float64]
    thetas: NDArray[np.float64]
    """(T, N)"""
    world_points: NDArray[np.float64]
    """(T, N, 2)"""
    pcc_violation: NDArray[np.bool_]
    """(T, N)"""
    impulse_active: NDArray[np.bool_]
    """(T,)"""
    contact: NDArray[np.bool_]
    """(T,)"""
    local_points: NDArray[np.float64]
    """(T, N, 2) true segment endpoints in their own frames"""
    sub_arc_difference: NDArray[np.float64]
    """(T, N) distal minus proximal sub-arc bend; zero under constant curvature"""

    def __post_init__(self) -> None:
        _check_timestamps(self.t)
        frames, segments = self.thetas.shape
        if frames != self.t.size or self.world_points.shape != (frames, segments, 2):
            error_msg = (
                "ground truth arrays disagree: "
                f"t={self.t.shape}, thetas={self.thetas.shape}, "
                f"world_points={self.world_points.shape}"
            )
            raise exceptions.DimensionError(error_msg)

    @property
    def n_segments(self) -> int:
        return int(self.thetas.shape[1])

    @property
    def sample_period(self) -> float:
        if self.t.size < 2:  # noqa: PLR2004
            return 0.0
        return float(np.median(np.diff(self.t)))

    @override
    def __len__(self) -> int:
        return int(self.t.size)

    @overload
    def __getitem__(self, index: int) -> GroundTruthFrame: ...
    @overload
    def __getitem__(self, index: slice) -> Sequence[GroundTruthFrame]: ...
    @override
    def __getitem__(
        self, index: int | slice
    ) -> GroundTruthFrame | Sequence[GroundTruthFrame]:
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        return GroundTruthFrame(
            t=float(self.t[index]),
            thetas=self.thetas[index],
            world_points=self.world_points[index],
            pcc_violation=self.pcc_violation[index],
            impulse_active=bool(self.impulse_active[index]),
            contact=bool(self.contact[index]),
        )


@dataclass(**_array_options)
class SensorLog(Sequence[SensorFrame]):
    """Columnar sensor log of one run; iterates as `SensorFrame`."""

    t: NDArray[np.float64]
    imu_yaw: NDArray[np.float64]
    """(T, N)"""
    bend_voltages: NDArray[np.float64]
    """(T, N, 2)"""
    bend_out_of_range: NDArray[np.bool_]
    """(T, N, 2) the sensed angle left the physical range of the sensor"""

    def __post_init__(self) -> None:
        _check_timestamps(self.t)
        frames, segments = self.imu_yaw.shape
        if frames != self.t.size or self.bend_voltages.shape != (frames, segments, 2):
            error_msg = (
                "sensor arrays disagree: "
                f"t={self.t.shape}, imu_yaw={self.imu_yaw.shape}, "
                f"bend_voltages={self.bend_voltages.shape}"
            )
            raise exceptions.DimensionError(error_msg)

    @property
    def n_segments(self) -> int:
        return int(self.imu_yaw.shape[1])

    @override
    def __len__(self) -> int:
        return int(self.t.size)

    @overload
    def __getitem__(self, index: int) -> SensorFrame: ...
    @overload
    def __getitem__(self, index: slice) -> Sequence[SensorFrame]: ...
    @override
    def __getitem__(self, index: int | slice) -> SensorFrame | Sequence[SensorFrame]:
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        return SensorFrame(
            t=float(self.t[index]),
            imu_yaw=self.imu_yaw[index],
            bend_voltage_pairs=self.bend_voltages[index],
            bend_out_of_range=self.bend_out_of_range[index],
        )
