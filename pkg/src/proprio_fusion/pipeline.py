"""End-to-end experiment: calibrate, tune, compare the methods, trace drift.

Every run seed is derived from `RunConfig.seed` and a fixed key per run, so a
pinned seed reproduces every file byte for byte.
"""

from __future__ import annotations

import logging
import platform
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from proprio_fusion import const
from proprio_fusion.calibration import fit_segment_calibrations, fit_sensor_calibrations
from proprio_fusion.estimator import prepare_measurements
from proprio_fusion.evaluation import (
    compare_methods,
    drift_summary,
    drift_trace,
    generalization_ratio,
)
from proprio_fusion.kalman import default_configs
from proprio_fusion.log import log_stage
from proprio_fusion.sim import ScenarioSpec, simulate
from proprio_fusion.storage import file_digest, save_run, write_frame, write_json
from proprio_fusion.tuner import objective, tune
from proprio_fusion.types import Method, ScenarioKind
from proprio_fusion.utils import derive_seed

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from proprio_fusion.calibration import CalibrationSet
    from proprio_fusion.config import RunConfig
    from proprio_fusion.estimator import MeasurementSet
    from proprio_fusion.evaluation import ComparisonTable
    from proprio_fusion.sim import ScenarioRun

__all__ = [
    "ReproduceOutput",
    "SEED_KEYS",
    "scenario_spec",
    "simulate_config",
    "measure",
    "ordering_checks",
    "reproduce",
    "write_manifest",
]

logger = logging.getLogger(__name__)

SEED_KEYS = {
    "training": 0,
    "validation": 1,
    ScenarioKind.SWEEP.value: 2,
    ScenarioKind.FORCE.value: 3,
    ScenarioKind.CONTACT.value: 4,
    ScenarioKind.DRIFT.value: 5,
}
_VALIDATION_SCENARIOS = (ScenarioKind.SWEEP, ScenarioKind.FORCE, ScenarioKind.CONTACT)
_DEPENDENCIES = ("numpy", "scipy", "pandas")


def scenario_spec(
    config: RunConfig,
    kind: ScenarioKind | str,
    *,
    duration: float | None = None,
    key: str | None = None,
) -> ScenarioSpec:
    """Spec of a run whose seed is derived from the config seed and `key`."""
    kind = ScenarioKind(kind)
    if duration is None:
        duration = {
            ScenarioKind.TRAINING: config.training_duration,
            ScenarioKind.DRIFT: config.drift_duration,
        }.get(kind, config.scenario_duration)
    seed_key = SEED_KEYS[key or ("training" if kind is ScenarioKind.TRAINING else kind.value)]
    return ScenarioSpec(
        kind=kind,
        duration=duration,
        sample_rate=config.sample_rate,
        seed=derive_seed(config.seed, seed_key),
    )


def simulate_config(config: RunConfig, spec: ScenarioSpec) -> ScenarioRun:
    return simulate(
        spec,
        config.geometry,
        imu=config.imu,
        bend=config.bend,
        force=config.force,
        contact=config.contact,
        robot_seed=config.robot_seed,
    )


def measure(run: ScenarioRun, calibration: CalibrationSet, config: RunConfig) -> MeasurementSet:
    return prepare_measurements(
        run.sensors, calibration, config.corrector, truth=run.ground_truth
    )


def ordering_checks(table: ComparisonTable, scenario: str = "union") -> dict[str, bool]:
    """Orderings between the methods on one row of the comparison."""
    rmse = {method: table.get(method, scenario).rmse for method in Method}
    return {
        "fusion_below_bend": rmse[Method.FUSION] < rmse[Method.BEND],
        "fusion_below_imu_c": rmse[Method.FUSION] < rmse[Method.IMU_C],
        "imu_c_below_bend": rmse[Method.IMU_C] < rmse[Method.BEND],
        "bend_below_imu_o": rmse[Method.BEND] < rmse[Method.IMU_O],
    }


def _versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in ("proprio-fusion", *_DEPENDENCIES):
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(
    directory: str | Path,
    config: RunConfig,
    files: Iterable[Path],
    *,
    command: str,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Provenance of a command's outputs; holds no wall-clock values."""
    target = Path(directory)
    entries = []
    for path in sorted(set(files)):
        try:
            name = path.resolve().relative_to(target.resolve()).as_posix()
        except ValueError:
            name = path.as_posix()
        entries.append({"path": name, "sha256": file_digest(path)})
    payload = {
        "command": command,
        "config_hash": config.digest(),
        "config": config.to_dict(),
        "seed": config.seed,
        "robot_seed": config.robot_seed,
        "versions": _versions(),
        "files": entries,
        **(extra or {}),
    }
    return write_json(target / const.MANIFEST_NAME, payload)


class ReproduceOutput(NamedTuple):
    summary: dict[str, Any]
    table: ComparisonTable
    files: list[Path]


def _rmse_rows(table: ComparisonTable) -> dict[str, dict[str, float | None]]:
    rows: dict[str, dict[str, float | None]] = {}
    for result in table.results:
        rows.setdefault(result.scenario, {})[result.method.value] = (
            round(result.rmse, 9) if result.ok else None
        )
    return rows


def _scenario_iii_gap(table: ComparisonTable) -> dict[str, float]:
    def gap(scenario: str) -> float:
        return table.get(Method.FUSION, scenario).rmse - table.get(Method.IMU_O, scenario).rmse

    sweep, contact = gap(ScenarioKind.SWEEP.value), gap(ScenarioKind.CONTACT.value)
    return {"gap_I_mm": sweep, "gap_III_mm": contact, "gap_growth_mm": contact - sweep}


def reproduce(  # noqa: PLR0915
    config: RunConfig,
    out_dir: str | Path,
    *,
    jobs: int = 1,
    save_runs: bool = False,
    scenarios: Sequence[ScenarioKind] = _VALIDATION_SCENARIOS,
) -> ReproduceOutput:
    """Run the whole experiment and write its results to `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geoms = config.geometry
    files: list[Path] = []

    def keep(run: ScenarioRun, name: str) -> None:
        if save_runs:
            files.extend(save_run(run, out / "runs" / name))

    with log_stage("calibration", seed=config.seed):
        training = simulate_config(config, scenario_spec(config, ScenarioKind.TRAINING))
        keep(training, "training")
        calibration = fit_segment_calibrations(training)
        sensor_maps = fit_sensor_calibrations(training)
        files.append(calibration.save(out / "calibration.json"))

    with log_stage("tuning", parameters=config.tuner.filters):
        initial = default_configs(
            geoms,
            config.imu,
            config.bend,
            calibration,
            config.corrector,
            sample_rate=config.sample_rate,
        )
        files.append(initial.save(out / "filter_configs_initial.json"))
        training_set = measure(training, calibration, config)
        report = tune(replace(config.tuner, jobs=jobs), initial, training_set, geoms)
        tuned = report.configs
        files.append(tuned.save(out / "filter_configs.json"))
        files.append(report.save(out / "tuner_report.json"))

        held_out = simulate_config(
            config,
            scenario_spec(
                config,
                ScenarioKind.TRAINING,
                duration=config.validation_duration,
                key="validation",
            ),
        )
        keep(held_out, "validation")
        held_out_loss = objective(
            tuned, measure(held_out, calibration, config), geoms, config.tuner
        ).loss
        ratio = generalization_ratio(report.final_loss, held_out_loss)

    with log_stage("evaluation", scenarios=",".join(kind.value for kind in scenarios)):
        runs: dict[str, MeasurementSet] = {}
        for kind in scenarios:
            run = simulate_config(config, scenario_spec(config, kind))
            keep(run, f"scenario_{kind.value}")
            runs[kind.value] = measure(run, calibration, config)
        table = compare_methods(runs, geoms, tuned, jobs=jobs)
        files.extend(table.save(out))

    with log_stage("drift_trace"):
        drift_run = simulate_config(config, scenario_spec(config, ScenarioKind.DRIFT))
        keep(drift_run, "drift")
        trace = drift_trace(measure(drift_run, calibration, config), segment=1)
        files.append(write_frame(out / "drift_trace.csv", trace))
        drift = drift_summary(trace, config.corrector.window_size)

    summary: dict[str, Any] = {
        "config_hash": config.digest(),
        "seed": config.seed,
        "calibration": {
            "segment_fit_rmse_deg": float(np.degrees(calibration.mean_fit_rmse)),
            "sensor_fit_rmse_deg": float(
                np.degrees(np.mean([cal_map.fit_rmse for cal_map in sensor_maps]))
            ),
        },
        "tuner": {
            "initial_loss": report.initial_loss,
            "final_loss": report.final_loss,
            "iterations": report.iterations,
            "converged": report.converged,
            "stop_reason": report.stop_reason,
            "held_out_loss": held_out_loss,
            "generalization_ratio": ratio,
            "generalization_bound": const.GENERALIZATION_BOUND,
        },
        "rmse_mm": _rmse_rows(table),
        "drift": drift,
    }
    if len(runs) > 1 and all(result.ok for result in table.results):
        summary["ordering"] = ordering_checks(table)
        summary["fusion_over_imu_o"] = (
            table.get(Method.FUSION, "union").rmse / table.get(Method.IMU_O, "union").rmse
        )
    if {ScenarioKind.SWEEP.value, ScenarioKind.CONTACT.value} <= set(runs):
        summary["contact_anomaly"] = _scenario_iii_gap(table)
    files.append(write_json(out / "summary.json", summary))
    files.append(write_manifest(out, config, files, command="reproduce"))
    logger.info("results written to %s", out)
    return ReproduceOutput(summary=summary, table=table, files=files)
