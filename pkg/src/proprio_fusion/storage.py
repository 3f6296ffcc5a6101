"""CSV and JSON files of simulated runs.

A run named `stem` is stored as three files next to each other:

- `stem.sensors.csv`: t, imu_yaw_1..N, bendA_v_1..N, bendB_v_1..N, then the
  out-of-range flags bendA_oor_1..N and bendB_oor_1..N
- `stem.gt.csv`: t, theta_i, world x_i/y_i, local lx_i/ly_i, the sub-arc
  imbalance and PCC violation flag of every segment, impulse and contact flags
- `stem.meta.json`: scenario spec, geometry, noise models, sensor curves and
  gyro bias rates

Angles are radians, lengths millimetres and voltages volts.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from proprio_fusion import const, exceptions
from proprio_fusion.calibration import CalibrationMap
from proprio_fusion.config import BendNoiseModel, ImuNoiseModel
from proprio_fusion.kinematics import geometry_from_dict, geometry_to_dict
from proprio_fusion.sim import ScenarioRun, ScenarioSpec
from proprio_fusion.types import GroundTruthLog, SensorLog
from proprio_fusion.utils import canonical_json

if TYPE_CHECKING:
    from collections.abc import Mapping
    from os import PathLike

    from numpy.typing import NDArray

__all__ = [
    "run_paths",
    "save_run",
    "load_run",
    "sensors_frame",
    "ground_truth_frame",
    "write_json",
    "read_json",
    "write_frame",
    "file_digest",
]

logger = logging.getLogger(__name__)

_FLOAT_FORMAT = "%.12g"
_BEND_SIDES = (("A", 0), ("B", 1))


def run_paths(stem: str | PathLike[str]) -> tuple[Path, Path, Path]:
    """Sensor CSV, ground-truth CSV and metadata paths of a run."""
    base = Path(stem)
    for suffix in (const.SENSOR_SUFFIX, const.GROUND_TRUTH_SUFFIX, const.METADATA_SUFFIX):
        if base.name.endswith(suffix):
            base = base.with_name(base.name[: -len(suffix)])
    return (
        base.with_name(base.name + const.SENSOR_SUFFIX),
        base.with_name(base.name + const.GROUND_TRUTH_SUFFIX),
        base.with_name(base.name + const.METADATA_SUFFIX),
    )


def write_json(path: str | PathLike[str], payload: Mapping[str, Any]) -> Path:
    target = Path(path)
    target.write_text(canonical_json(payload), encoding="utf-8")
    return target


def read_json(path: str | PathLike[str]) -> dict[str, Any]:
    try:
        with Path(path).open(encoding="utf-8") as file:
            data = json.load(file)
    except (OSError, json.JSONDecodeError) as exc:
        error_msg = f"cannot read {path}: {exc}"
        raise exceptions.ConfigError(error_msg) from exc
    if not isinstance(data, dict):
        error_msg = f"{path} must hold a JSON object"
        raise exceptions.ConfigError(error_msg)
    return data


def write_frame(path: str | PathLike[str], frame: pd.DataFrame, *, index: bool = False) -> Path:
    target = Path(path)
    frame.to_csv(target, index=index, float_format=_FLOAT_FORMAT, lineterminator="\n")
    return target


def file_digest(path: str | PathLike[str]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sensors_frame(sensors: SensorLog) -> pd.DataFrame:
    """Sensor log as columns `t, imu_yaw_1..N, bendA_v_1..N, bendB_v_1..N`.

    The out-of-range flags of both bend sensors follow as `bendA_oor_1..N`
    and `bendB_oor_1..N`.
    """
    labels = range(1, sensors.n_segments + 1)
    columns: dict[str, Any] = {"t": sensors.t}
    columns.update(
        {f"imu_yaw_{label}": sensors.imu_yaw[:, label - 1] for label in labels}
    )
    for side, sensor in _BEND_SIDES:
        columns.update({
            f"bend{side}_v_{label}": sensors.bend_voltages[:, label - 1, sensor]
            for label in labels
        })
    flags = sensors.bend_out_of_range.astype(int)
    for side, sensor in _BEND_SIDES:
        columns.update(
            {f"bend{side}_oor_{label}": flags[:, label - 1, sensor] for label in labels}
        )
    return pd.DataFrame(columns)


def ground_truth_frame(truth: GroundTruthLog) -> pd.DataFrame:
    columns: dict[str, Any] = {"t": truth.t}
    for i in range(truth.n_segments):
        label = i + 1
        columns[f"theta_{label}"] = truth.thetas[:, i]
        columns[f"x_{label}"] = truth.world_points[:, i, 0]
        columns[f"y_{label}"] = truth.world_points[:, i, 1]
        columns[f"lx_{label}"] = truth.local_points[:, i, 0]
        columns[f"ly_{label}"] = truth.local_points[:, i, 1]
        columns[f"sub_arc_{label}"] = truth.sub_arc_difference[:, i]
        columns[f"pcc_violation_{label}"] = truth.pcc_violation[:, i].astype(int)
    columns["impulse_active"] = truth.impulse_active.astype(int)
    columns["contact"] = truth.contact.astype(int)
    return pd.DataFrame(columns)


def _metadata(run: ScenarioRun) -> dict[str, Any]:
    return {
        "scenario": run.spec.to_dict(),
        "geometry": geometry_to_dict(run.geometry),
        "imu": run.imu_model.to_dict(),
        "bend": run.bend_model.to_dict(),
        "characteristics": [curve.to_dict() for curve in run.characteristics],
        "gyro_bias_rates": list(run.gyro_bias_rates),
        "frames": len(run),
    }


def save_run(run: ScenarioRun, stem: str | PathLike[str]) -> tuple[Path, Path, Path]:
    """Write the three files of `run`; returns their paths."""
    sensors_path, truth_path, meta_path = run_paths(stem)
    sensors_path.parent.mkdir(parents=True, exist_ok=True)
    write_frame(sensors_path, sensors_frame(run.sensors))
    write_frame(truth_path, ground_truth_frame(run.ground_truth))
    write_json(meta_path, _metadata(run))
    logger.debug("saved run %s (%d frames)", sensors_path.parent / sensors_path.stem, len(run))
    return sensors_path, truth_path, meta_path


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, ValueError) as exc:
        error_msg = f"cannot read {path}: {exc}"
        raise exceptions.ConfigError(error_msg) from exc


def _columns(frame: pd.DataFrame, pattern: str, n: int) -> NDArray[np.float64]:
    names = [pattern.format(i) for i in range(1, n + 1)]
    missing = [name for name in names if name not in frame.columns]
    if missing:
        error_msg = f"missing column(s): {', '.join(missing)}"
        raise exceptions.InvalidInputError(error_msg)
    return frame[names].to_numpy(dtype=np.float64)


def _load_sensors(frame: pd.DataFrame, n: int) -> SensorLog:
    voltages = np.stack(
        [_columns(frame, "bendA_v_{}", n), _columns(frame, "bendB_v_{}", n)], axis=-1
    )
    flags = np.stack(
        [_columns(frame, "bendA_oor_{}", n), _columns(frame, "bendB_oor_{}", n)], axis=-1
    )
    return SensorLog(
        t=frame["t"].to_numpy(dtype=np.float64),
        imu_yaw=_columns(frame, "imu_yaw_{}", n),
        bend_voltages=voltages,
        bend_out_of_range=flags.astype(bool),
    )


def _load_truth(frame: pd.DataFrame, n: int) -> GroundTruthLog:
    world = np.stack([_columns(frame, "x_{}", n), _columns(frame, "y_{}", n)], axis=-1)
    local = np.stack([_columns(frame, "lx_{}", n), _columns(frame, "ly_{}", n)], axis=-1)
    return GroundTruthLog(
        t=frame["t"].to_numpy(dtype=np.float64),
        thetas=_columns(frame, "theta_{}", n),
        world_points=world,
        pcc_violation=_columns(frame, "pcc_violation_{}", n).astype(bool),
        impulse_active=frame["impulse_active"].to_numpy(dtype=bool),
        contact=frame["contact"].to_numpy(dtype=bool),
        local_points=local,
        sub_arc_difference=_columns(frame, "sub_arc_{}", n),
    )


def load_run(stem: str | PathLike[str]) -> ScenarioRun:
    """Read a run written by `save_run`; the ground truth file must exist too."""
    sensors_path, truth_path, meta_path = run_paths(stem)
    for path in (sensors_path, truth_path, meta_path):
        if not path.exists():
            error_msg = f"run file does not exist: {path}"
            raise exceptions.ConfigError(error_msg)

    meta = read_json(meta_path)
    try:
        geometry = geometry_from_dict(meta["geometry"])
        spec = ScenarioSpec(**meta["scenario"])
        characteristics = tuple(
            CalibrationMap.from_dict(item) for item in meta["characteristics"]
        )
        imu = ImuNoiseModel.from_dict(meta["imu"])
        bend = BendNoiseModel.from_dict(meta["bend"])
        bias_rates = tuple(float(rate) for rate in meta.get("gyro_bias_rates", ()))
    except (KeyError, TypeError) as exc:
        error_msg = f"invalid run metadata {meta_path}: {exc!r}"
        raise exceptions.ConfigError(error_msg) from exc

    n = len(geometry)
    return ScenarioRun(
        spec=spec,
        geometry=geometry,
        ground_truth=_load_truth(_read_csv(truth_path), n),
        sensors=_load_sensors(_read_csv(sensors_path), n),
        characteristics=characteristics,
        imu_model=imu,
        bend_model=bend,
        gyro_bias_rates=bias_rates,
    )
