"""`proprio-fusion` command line.

Exit codes: 0 on success, 1 when a pipeline stage fails, 2 on usage errors.
Logs go to stderr; stdout only carries the paths of written files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import TYPE_CHECKING, Any

from proprio_fusion import exceptions
from proprio_fusion.calibration import (
    CalibrationSet,
    fit_segment_calibrations,
    fit_sensor_calibrations,
)
from proprio_fusion.config import RunConfig, load_config
from proprio_fusion.estimator import run_method
from proprio_fusion.evaluation import compare_methods
from proprio_fusion.kalman import FilterConfigs, default_configs
from proprio_fusion.log import log_stage, set_level
from proprio_fusion.pipeline import (
    measure,
    reproduce,
    scenario_spec,
    simulate_config,
    write_manifest,
)
from proprio_fusion.storage import load_run, save_run, write_frame, write_json
from proprio_fusion.tuner import TunerReport, tune
from proprio_fusion.types import Method, ScenarioKind

if TYPE_CHECKING:
    from collections.abc import Sequence

    import pandas as pd

    from proprio_fusion.estimator import ShapeEstimates

__all__ = ["main", "build_parser"]

logger = logging.getLogger(__name__)

_SCENARIOS = [kind.value for kind in ScenarioKind]
_METHODS = [method.value for method in Method]


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, help="run configuration JSON")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", type=Path, default=Path(), help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="proprio-fusion",
        description="Shape estimation of a soft arm from bend sensors and IMUs.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="simulate a run")
    simulate.add_argument("--scenario", required=True, choices=_SCENARIOS)
    simulate.add_argument("--duration", type=float, help="seconds")
    simulate.add_argument("--rate", type=float, help="sample rate (Hz)")
    simulate.add_argument("--name", help="file stem, default scenario_<kind>")
    simulate.set_defaults(handler=cmd_simulate)

    calibrate = commands.add_parser(
        "calibrate", parents=[common], help="fit bend sensor calibrations"
    )
    calibrate.add_argument("--train", type=Path, required=True, help="training run stem")
    calibrate.set_defaults(handler=cmd_calibrate)

    tune_parser = commands.add_parser("tune", parents=[common], help="tune the filters")
    tune_parser.add_argument("--train", type=Path, required=True, help="training run stem")
    tune_parser.add_argument("--calibration", type=Path, required=True)
    tune_parser.add_argument("--initial", type=Path, help="initial filter configs JSON")
    tune_parser.add_argument("--lr", type=float, help="initial step size")
    tune_parser.add_argument("--max-iters", type=int)
    tune_parser.add_argument("--tol", type=float, help="convergence tolerance")
    tune_parser.set_defaults(handler=cmd_tune)

    estimate = commands.add_parser("estimate", parents=[common], help="estimate shapes")
    estimate.add_argument("--run", type=Path, required=True, help="run stem")
    estimate.add_argument("--calibration", type=Path, required=True)
    estimate.add_argument("--configs", type=Path, help="filter configs JSON")
    estimate.add_argument(
        "--method", action="append", choices=_METHODS, help="repeatable, default all"
    )
    estimate.set_defaults(handler=cmd_estimate)

    evaluate = commands.add_parser("evaluate", parents=[common], help="compare methods")
    evaluate.add_argument(
        "--run", type=Path, action="append", required=True, help="run stem, repeatable"
    )
    evaluate.add_argument("--calibration", type=Path, required=True)
    evaluate.add_argument("--configs", type=Path, help="filter configs JSON")
    evaluate.set_defaults(handler=cmd_evaluate)

    reproduce_parser = commands.add_parser(
        "reproduce", parents=[common], help="run the whole experiment"
    )
    reproduce_parser.add_argument(
        "--save-runs", action="store_true", help="also write every simulated run"
    )
    reproduce_parser.set_defaults(handler=cmd_reproduce)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config, seed=args.seed)
    changes = {
        "learning_rate": getattr(args, "lr", None),
        "max_iters": getattr(args, "max_iters", None),
        "convergence_tol": getattr(args, "tol", None),
        "jobs": args.jobs,
    }
    tuner = replace(config.tuner, **{k: v for k, v in changes.items() if v is not None})
    return config.with_overrides(tuner=tuner)


def _filter_configs(
    path: Path | None, config: RunConfig, calibration: CalibrationSet
) -> FilterConfigs:
    if path is not None:
        return TunerReport.load_configs(path)
    logger.info("no filter configs given, using the noise-model defaults")
    return default_configs(
        config.geometry,
        config.imu,
        config.bend,
        calibration,
        config.corrector,
        sample_rate=config.sample_rate,
    )


def _load_calibration(path: Path) -> CalibrationSet:
    try:
        return CalibrationSet.load(path)
    except (OSError, ValueError) as exc:
        error_msg = f"cannot read calibration {path}: {exc}"
        raise exceptions.ConfigError(error_msg) from exc


def _finish(out: Path, config: RunConfig, files: list[Path], command: str) -> list[Path]:
    files.append(write_manifest(out, config, files, command=command))
    for path in files:
        sys.stdout.write(f"{path}\n")
    return files


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    kind = ScenarioKind(args.scenario)
    spec = scenario_spec(config, kind, duration=args.duration)
    if args.rate is not None:
        spec = replace(spec, sample_rate=args.rate)
    with log_stage("simulate", scenario=kind.value, seed=spec.seed):
        run = simulate_config(config, spec)
        files = list(save_run(run, args.out / (args.name or f"scenario_{kind.value}")))
    return _finish(args.out, config, files, "simulate")


def cmd_calibrate(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    with log_stage("calibrate", run=args.train):
        run = load_run(args.train)
        calibration = fit_segment_calibrations(run)
        sensors = fit_sensor_calibrations(run)
        files = [
            calibration.save(args.out / "calibration.json"),
            write_json(
                args.out / "calibration_sensors.json",
                {"maps": [cal_map.to_dict() for cal_map in sensors]},
            ),
        ]
    return _finish(args.out, config, files, "calibrate")


def cmd_tune(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    with log_stage("tune", run=args.train):
        run = load_run(args.train)
        calibration = _load_calibration(args.calibration)
        initial = _filter_configs(args.initial, config, calibration)
        report = tune(config.tuner, initial, measure(run, calibration, config), run.geometry)
        files = [
            report.configs.save(args.out / "filter_configs.json"),
            report.save(args.out / "tuner_report.json"),
        ]
    return _finish(args.out, config, files, "tune")


def _estimates_frame(estimates: ShapeEstimates) -> pd.DataFrame:
    import pandas as pd

    columns: dict[str, Any] = {"t": estimates.t}
    for i in range(estimates.thetas.shape[1]):
        columns[f"theta_{i + 1}"] = estimates.thetas[:, i]
        columns[f"x_{i + 1}"] = estimates.world_points[:, i, 0]
        columns[f"y_{i + 1}"] = estimates.world_points[:, i, 1]
    return pd.DataFrame(columns)


def cmd_estimate(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    methods = [Method(name) for name in (args.method or _METHODS)]
    with log_stage("estimate", run=args.run):
        run = load_run(args.run)
        calibration = _load_calibration(args.calibration)
        configs = (
            _filter_configs(args.configs, config, calibration)
            if Method.FUSION in methods
            else None
        )
        measurements = measure(run, calibration, config)
        stem = Path(args.run).name.split(".")[0]
        files = [
            write_frame(
                args.out / f"{stem}.{method.value}.csv",
                _estimates_frame(run_method(method, measurements, run.geometry, configs)),
            )
            for method in methods
        ]
    return _finish(args.out, config, files, "estimate")


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    with log_stage("evaluate", runs=len(args.run)):
        calibration = _load_calibration(args.calibration)
        configs = _filter_configs(args.configs, config, calibration)
        runs = {}
        geometry = config.geometry
        for stem in args.run:
            run = load_run(stem)
            geometry = run.geometry
            label = run.label if run.label not in runs else Path(stem).name
            runs[label] = measure(run, calibration, config)
        table = compare_methods(runs, geometry, configs, jobs=args.jobs)
        files = table.save(args.out)
    return _finish(args.out, config, files, "evaluate")


def cmd_reproduce(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    output = reproduce(config, args.out, jobs=args.jobs, save_runs=args.save_runs)
    for path in output.files:
        sys.stdout.write(f"{path}\n")
    return output.files


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    set_level(args.log_level)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")

    try:
        config = _config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        args.handler(args, config)
    except exceptions.Error as exc:
        logger.error("%s failed: %s", args.command, exc)  # noqa: TRY400
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
