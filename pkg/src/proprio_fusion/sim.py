"""Simulated runs: ground truth plus the sensor log it produces."""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from proprio_fusion import exceptions
from proprio_fusion._sim import (
    find_scenario,
    gyro_bias_rates,
    sensor_characteristics,
    synthesize_bend,
    synthesize_imu,
)
from proprio_fusion.config import (
    BendNoiseModel,
    ContactSettings,
    ForceEventSettings,
    ImuNoiseModel,
)
from proprio_fusion.types import GroundTruthLog, ScenarioKind, SensorLog
from proprio_fusion.utils import spawn_generators

if TYPE_CHECKING:
    from collections.abc import Sequence

    from proprio_fusion.calibration import CalibrationMap
    from proprio_fusion.types import SegmentGeometry

__all__ = ["ScenarioSpec", "ScenarioRun", "generate_trajectory", "simulate"]

logger = logging.getLogger(__name__)

_dataclass_options: dict[str, Any] = {"frozen": True}
if sys.version_info >= (3, 10):
    _dataclass_options["kw_only"] = True
    _dataclass_options["slots"] = False

_STREAMS = ("trajectory", "imu", "bend")


@dataclass(**_dataclass_options)
class ScenarioSpec:
    kind: ScenarioKind
    duration: float
    """seconds"""
    sample_rate: float
    """Hz"""
    seed: int = 0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", ScenarioKind(self.kind))
        except ValueError as exc:
            error_msg = f"Not found scenario: {self.kind}"
            raise exceptions.ScenarioError(error_msg) from exc
        for name in ("duration", "sample_rate"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                error_msg = f"{name} must be > 0, got {value}"
                raise exceptions.ScenarioError(error_msg)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
        }


@dataclass(**_dataclass_options)
class ScenarioRun:
    """A ground-truth trajectory, the sensor log it produced, and its settings."""

    spec: ScenarioSpec
    geometry: tuple[SegmentGeometry, ...]
    ground_truth: GroundTruthLog
    sensors: SensorLog
    characteristics: tuple[CalibrationMap, ...]
    imu_model: ImuNoiseModel = field(default_factory=ImuNoiseModel)
    bend_model: BendNoiseModel = field(default_factory=BendNoiseModel)
    gyro_bias_rates: tuple[float, ...] = ()
    """constant gyro bias of every IMU (rad / s)"""

    @property
    def label(self) -> str:
        return self.spec.kind.value

    def __len__(self) -> int:
        return len(self.ground_truth)


def generate_trajectory(
    spec: ScenarioSpec,
    geoms: Sequence[SegmentGeometry],
    *,
    force: ForceEventSettings | None = None,
    contact: ContactSettings | None = None,
) -> GroundTruthLog:
    """Ground truth of a scenario; depends only on `spec` (seed included)."""
    streams = spawn_generators(spec.seed, _STREAMS)
    scenario = find_scenario(spec.kind)(spec, geoms, force=force, contact=contact)
    return scenario.generate(streams["trajectory"])


def simulate(  # noqa: PLR0913
    spec: ScenarioSpec,
    geoms: Sequence[SegmentGeometry],
    *,
    imu: ImuNoiseModel | None = None,
    bend: BendNoiseModel | None = None,
    characteristics: Sequence[CalibrationMap] | None = None,
    bias_rates: Sequence[float] | None = None,
    force: ForceEventSettings | None = None,
    contact: ContactSettings | None = None,
    robot_seed: int = 0,
) -> ScenarioRun:
    """Generate a scenario and synthesise both sensor streams.

    Trajectory, IMU and bend noise come from independent streams of
    `spec.seed`. The bend sensor curves and the gyro bias rates belong to the
    robot, not the run: unless given, they are drawn from `robot_seed`.
    """
    imu = imu or ImuNoiseModel()
    bend = bend or BendNoiseModel()
    geoms = tuple(geoms)
    if characteristics is None:
        characteristics = sensor_characteristics(len(geoms), robot_seed, v_ref=bend.v_ref)
    if bias_rates is None:
        bias_rates = tuple(gyro_bias_rates(len(geoms), imu, robot_seed).tolist())

    streams = spawn_generators(spec.seed, _STREAMS)
    scenario = find_scenario(spec.kind)(spec, geoms, force=force, contact=contact)
    truth = scenario.generate(streams["trajectory"])
    yaw = synthesize_imu(truth, imu, streams["imu"], bias_rates=bias_rates)
    voltages, out_of_range = synthesize_bend(
        truth, bend, characteristics, streams["bend"]
    )
    logger.debug(
        "simulated scenario %s: %d frames, %d segments, seed %d",
        spec.kind.value, len(truth), len(geoms), spec.seed,
    )
    return ScenarioRun(
        spec=spec,
        geometry=geoms,
        ground_truth=truth,
        sensors=SensorLog(
            t=truth.t.copy(),
            imu_yaw=yaw,
            bend_voltages=voltages,
            bend_out_of_range=out_of_range,
        ),
        characteristics=tuple(characteristics),
        imu_model=imu,
        bend_model=bend,
        gyro_bias_rates=tuple(float(rate) for rate in bias_rates),
    )
