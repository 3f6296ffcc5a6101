"""Settings of every stage, and the run configuration that aggregates them.

Angles are radians, lengths millimetres, durations seconds and voltages volts.
A `RunConfig` is read from JSON whose keys mirror the field names below;
unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any

from typing_extensions import Self

from proprio_fusion import const, exceptions
from proprio_fusion.kinematics import (
    default_geometry,
    geometry_from_dict,
    geometry_to_dict,
    load_geometry,
)
from proprio_fusion.utils import config_hash

if TYPE_CHECKING:
    from collections.abc import Mapping
    from os import PathLike

    from proprio_fusion.types import SegmentGeometry

__all__ = [
    "ImuNoiseModel",
    "BendNoiseModel",
    "ForceEventSettings",
    "ContactSettings",
    "CorrectorSettings",
    "TunerSpec",
    "RunConfig",
    "load_config",
]

_dataclass_options: dict[str, Any] = {"frozen": True}
if sys.version_info >= (3, 10):
    _dataclass_options["kw_only"] = True
    _dataclass_options["slots"] = False


def _require(condition: bool, message: str) -> None:  # noqa: FBT001
    if not condition:
        raise exceptions.ConfigError(message)


def _non_negative(owner: object, *names: str) -> None:
    for name in names:
        value = getattr(owner, name)
        _require(
            math.isfinite(value) and value >= 0,
            f"{type(owner).__name__}.{name} must be finite and >= 0, got {value}",
        )


def _check_range(owner: object, name: str) -> None:
    low, high = getattr(owner, name)
    _require(
        0 <= low <= high,
        f"{type(owner).__name__}.{name} must satisfy 0 <= low <= high",
    )


class _Settings:
    """JSON helpers shared by the settings dataclasses."""

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Self:
        known = {item.name for item in fields(cls)}  # pyright: ignore[reportArgumentType]
        unknown = sorted(set(data) - known)
        if unknown:
            error_msg = f"unknown {cls.__name__} key(s): {', '.join(unknown)}"
            raise exceptions.ConfigError(error_msg)
        values = {
            key: tuple(value) if isinstance(value, list) else value
            for key, value in data.items()
        }
        try:
            return cls(**values)
        except TypeError as exc:
            raise exceptions.ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)  # pyright: ignore[reportArgumentType]


@dataclass(**_dataclass_options)
class ImuNoiseModel(_Settings):
    yaw_white_noise_std: float = const.DEFAULT_YAW_WHITE_NOISE_STD
    """white noise on every yaw sample (rad)"""
    drift_rate_std: float = const.DEFAULT_DRIFT_RATE_STD
    """random-walk bias intensity (rad / sqrt(s)); Var[bias(t)] = std**2 * t"""
    bias_rate: float = const.DEFAULT_GYRO_BIAS_RATE
    """magnitude of the gyro bias shared by the IMUs of one robot (rad / s);
    the sign is a property of the robot, not of the run"""
    bias_rate_spread: float = const.DEFAULT_GYRO_BIAS_SPREAD
    """std of the per-IMU deviation from the shared gyro bias (rad / s)"""
    acceleration_spike_gain: float = const.DEFAULT_ACCELERATION_SPIKE_GAIN
    """yaw disturbance per lateral acceleration during force events (rad per mm/s^2)"""

    def __post_init__(self) -> None:
        _non_negative(
            self,
            "yaw_white_noise_std",
            "drift_rate_std",
            "bias_rate",
            "bias_rate_spread",
            "acceleration_spike_gain",
        )

    @classmethod
    def noiseless(cls) -> Self:
        return cls(
            yaw_white_noise_std=0.0,
            drift_rate_std=0.0,
            bias_rate=0.0,
            bias_rate_spread=0.0,
            acceleration_spike_gain=0.0,
        )


@dataclass(**_dataclass_options)
class BendNoiseModel(_Settings):
    voltage_noise_std: float = const.DEFAULT_VOLTAGE_NOISE_STD
    """white noise on every voltage sample, independent per sensor (V)"""
    hysteresis_width: float = const.DEFAULT_HYSTERESIS_WIDTH
    """gap between loading and unloading curves (rad)"""
    quantization_step: float = const.ADC_REFERENCE_V / 2**const.ADC_BITS
    """ADC resolution (V); 0 disables quantisation"""
    nonuniform_gain: float = const.DEFAULT_NONUNIFORM_GAIN
    """reading bias per rad of distal minus proximal sub-arc bend"""
    v_ref: float = const.ADC_REFERENCE_V
    """ADC full scale (V)"""

    def __post_init__(self) -> None:
        _non_negative(
            self,
            "voltage_noise_std",
            "hysteresis_width",
            "quantization_step",
            "nonuniform_gain",
        )
        _require(self.v_ref > 0, f"v_ref must be > 0, got {self.v_ref}")

    @classmethod
    def noiseless(cls) -> Self:
        return cls(
            voltage_noise_std=0.0,
            hysteresis_width=0.0,
            quantization_step=0.0,
            nonuniform_gain=0.0,
        )


@dataclass(**_dataclass_options)
class ForceEventSettings(_Settings):
    """External pushes of the force scenario."""

    rate_hz: float = const.FORCE_EVENT_RATE_HZ
    """Poisson arrival rate"""
    duration_range: tuple[float, float] = const.FORCE_EVENT_DURATION_S
    amplitude_range: tuple[float, float] = const.FORCE_EVENT_AMPLITUDE_RAD

    def __post_init__(self) -> None:
        _non_negative(self, "rate_hz")
        _check_range(self, "duration_range")
        _check_range(self, "amplitude_range")
        _require(self.duration_range[0] > 0, "force events need a positive duration")


@dataclass(**_dataclass_options)
class ContactSettings(_Settings):
    """Obstacle contact of the contact scenario."""

    segment: int = const.CONTACT_SEGMENT
    """1-based index of the segment held by the obstacle"""
    angle: float = const.CONTACT_ANGLE_RAD
    """bend the obstacle imposes on the held segment"""
    wrap: float = const.CONTACT_WRAP_RAD
    """extra bend of every distal segment while wrapping"""
    non_uniformity: float = const.CONTACT_NON_UNIFORMITY
    """share of the bend moved from the distal to the proximal sub-arc"""
    period: float = 40.0
    """period of the approach/release cycle (s)"""

    def __post_init__(self) -> None:
        _require(self.segment >= 1, f"contact segment must be >= 1, got {self.segment}")
        _non_negative(self, "wrap", "non_uniformity")
        _require(self.non_uniformity <= 1, "non_uniformity must be <= 1")
        _require(self.period > 0, "contact period must be > 0")
        _require(abs(self.angle) < math.pi, "contact angle must be within (-pi, pi)")


@dataclass(**_dataclass_options)
class CorrectorSettings(_Settings):
    window_size: int = const.DEFAULT_WINDOW_SIZE
    """moving-average length (samples)"""
    threshold: float = const.DEFAULT_THRESHOLD_RAD
    """offset change that triggers a new correction (rad)"""

    def __post_init__(self) -> None:
        _require(self.window_size >= 1, f"window_size must be >= 1, got {self.window_size}")
        _non_negative(self, "threshold")


@dataclass(**_dataclass_options)
class TunerSpec(_Settings):
    """Gradient descent settings of the filter tuner."""

    learning_rate: float = const.DEFAULT_LEARNING_RATE
    """initial step size"""
    max_iters: int = const.DEFAULT_MAX_ITERS
    convergence_tol: float = const.DEFAULT_CONVERGENCE_TOL
    """stop once an accepted step improves the loss by less than this"""
    fd_step: float = const.DEFAULT_FD_STEP
    """relative central-difference step, scaled by (1 + |p|)"""
    max_backtracks: int = const.DEFAULT_MAX_BACKTRACKS
    tune_q: bool = True
    tune_r: bool = True
    tune_h: bool = False
    """tune gains of the measurement matrix blocks; the sparsity stays fixed"""
    tie_blocks: bool = True
    """one parameter per sensor block instead of one per diagonal entry"""
    filters: tuple[str, ...] = ("orientation", "coordinate")
    position_weight: float = 1.0
    """weight of the end-effector position RMSE (mm)"""
    orientation_weight: float = 1.0
    """weight of the mean orientation RMSE (deg)"""
    jobs: int = 1
    """threads used for the finite-difference evaluations"""

    def __post_init__(self) -> None:
        _require(
            self.learning_rate > 0 and math.isfinite(self.learning_rate),
            f"learning_rate must be > 0, got {self.learning_rate}",
        )
        _require(self.fd_step > 0, f"fd_step must be > 0, got {self.fd_step}")
        _require(self.max_iters >= 1, f"max_iters must be >= 1, got {self.max_iters}")
        _require(self.max_backtracks >= 0, "max_backtracks must be >= 0")
        _require(self.jobs >= 1, f"jobs must be >= 1, got {self.jobs}")
        _non_negative(
            self, "convergence_tol", "position_weight", "orientation_weight"
        )
        _require(
            self.position_weight + self.orientation_weight > 0,
            "at least one loss weight must be positive",
        )
        unknown = set(self.filters) - {"orientation", "coordinate"}
        _require(not unknown, f"unknown filter(s): {sorted(unknown)}")
        _require(bool(self.filters), "at least one filter must be tuned")
        _require(
            self.tune_q or self.tune_r or self.tune_h, "nothing to tune was enabled"
        )


_RUN_KEYS = {
    "geometry",
    "geometry_file",
    "imu",
    "bend",
    "force",
    "contact",
    "corrector",
    "tuner",
    "sample_rate",
    "scenario_duration",
    "training_duration",
    "validation_duration",
    "drift_duration",
    "seed",
    "robot_seed",
    "output_dir",
}


@dataclass(**_dataclass_options)
class RunConfig:
    """Everything a CLI command needs; `seed` is recorded in every output."""

    geometry: tuple[SegmentGeometry, ...] = field(default_factory=default_geometry)
    geometry_file: Path | None = None
    imu: ImuNoiseModel = field(default_factory=ImuNoiseModel)
    bend: BendNoiseModel = field(default_factory=BendNoiseModel)
    force: ForceEventSettings = field(default_factory=ForceEventSettings)
    contact: ContactSettings = field(default_factory=ContactSettings)
    corrector: CorrectorSettings = field(default_factory=CorrectorSettings)
    tuner: TunerSpec = field(default_factory=TunerSpec)
    sample_rate: float = const.DEFAULT_SAMPLE_RATE_HZ
    scenario_duration: float = const.DEFAULT_SCENARIO_DURATION_S
    training_duration: float = const.DEFAULT_TRAINING_DURATION_S
    validation_duration: float = const.DEFAULT_VALIDATION_DURATION_S
    drift_duration: float = const.DRIFT_TRACE_DURATION_S
    seed: int = 0
    robot_seed: int = 0
    """seed of the bend sensor curves; fixed per robot, not per run"""
    output_dir: Path | None = None

    def __post_init__(self) -> None:
        for name in (
            "sample_rate",
            "scenario_duration",
            "training_duration",
            "validation_duration",
            "drift_duration",
        ):
            value = getattr(self, name)
            _require(value > 0 and math.isfinite(value), f"{name} must be > 0")
        _require(bool(self.geometry), "geometry must declare at least one segment")
        _require(
            self.contact.segment <= len(self.geometry),
            f"contact segment {self.contact.segment} is outside the "
            f"{len(self.geometry)}-segment arm",
        )

    @property
    def n_segments(self) -> int:
        return len(self.geometry)

    def with_overrides(self, **changes: Any) -> Self:
        """Copy with `None`-valued overrides ignored (unset CLI flags)."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], base_dir: str | PathLike[str] | None = None
    ) -> Self:
        unknown = sorted(set(data) - _RUN_KEYS)
        if unknown:
            error_msg = f"unknown config key(s): {', '.join(unknown)}"
            raise exceptions.ConfigError(error_msg)

        base = Path(base_dir) if base_dir is not None else Path.cwd()
        values: dict[str, Any] = {}
        if "geometry_file" in data and "geometry" in data:
            error_msg = "give either geometry or geometry_file, not both"
            raise exceptions.ConfigError(error_msg)
        if "geometry_file" in data:
            path = _resolve(base, data["geometry_file"])
            values["geometry_file"] = path
            values["geometry"] = _wrap_invalid(load_geometry, path)
        if "geometry" in data:
            values["geometry"] = _wrap_invalid(geometry_from_dict, data["geometry"])

        sections: dict[str, type[_Settings]] = {
            "imu": ImuNoiseModel,
            "bend": BendNoiseModel,
            "force": ForceEventSettings,
            "contact": ContactSettings,
            "corrector": CorrectorSettings,
            "tuner": TunerSpec,
        }
        for key, settings_class in sections.items():
            if key in data:
                values[key] = settings_class.from_dict(data[key])

        for key in (
            "sample_rate",
            "scenario_duration",
            "training_duration",
            "validation_duration",
            "drift_duration",
        ):
            if key in data:
                values[key] = float(data[key])
        for key in ("seed", "robot_seed"):
            if key in data:
                values[key] = int(data[key])
        if "output_dir" in data:
            values["output_dir"] = base / data["output_dir"]
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready form; paths are left out so the hash is location independent."""
        return {
            "geometry": geometry_to_dict(self.geometry),
            "imu": self.imu.to_dict(),
            "bend": self.bend.to_dict(),
            "force": self.force.to_dict(),
            "contact": self.contact.to_dict(),
            "corrector": self.corrector.to_dict(),
            "tuner": self.tuner.to_dict(),
            "sample_rate": self.sample_rate,
            "scenario_duration": self.scenario_duration,
            "training_duration": self.training_duration,
            "validation_duration": self.validation_duration,
            "drift_duration": self.drift_duration,
            "seed": self.seed,
            "robot_seed": self.robot_seed,
        }

    def digest(self) -> str:
        return config_hash(self.to_dict())


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        error_msg = f"referenced file does not exist: {path}"
        raise exceptions.ConfigError(error_msg)
    return path


def _wrap_invalid(loader: Any, argument: Any) -> tuple[SegmentGeometry, ...]:
    try:
        return loader(argument)
    except (exceptions.InvalidInputError, OSError, json.JSONDecodeError) as exc:
        raise exceptions.ConfigError(str(exc)) from exc


def load_config(
    path: str | PathLike[str] | None = None, **overrides: Any
) -> RunConfig:
    """Read a `RunConfig` from JSON (defaults when `path` is None)."""
    if path is None:
        config = RunConfig()
    else:
        source = Path(path)
        try:
            with source.open(encoding="utf-8") as file:
                data = json.load(file)
        except (OSError, json.JSONDecodeError) as exc:
            error_msg = f"cannot read config {source}: {exc}"
            raise exceptions.ConfigError(error_msg) from exc
        if not isinstance(data, dict):
            error_msg = f"config {source} must hold a JSON object"
            raise exceptions.ConfigError(error_msg)
        config = RunConfig.from_dict(data, base_dir=source.parent)
    return config.with_overrides(**overrides)
