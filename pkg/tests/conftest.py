from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING

import filelock
import numpy as np
import pytest

from proprio_fusion.calibration import CalibrationSet, fit_segment_calibrations
from proprio_fusion.config import (
    BendNoiseModel,
    ImuNoiseModel,
    RunConfig,
    TunerSpec,
)
from proprio_fusion.estimator import MeasurementSet, prepare_measurements
from proprio_fusion.kalman import FilterConfigs, default_configs
from proprio_fusion.kinematics import default_geometry
from proprio_fusion.log import get_logger
from proprio_fusion.pipeline import reproduce
from proprio_fusion.sim import ScenarioRun, ScenarioSpec, simulate
from proprio_fusion.types import ScenarioKind, SegmentGeometry

if TYPE_CHECKING:
    from collections.abc import Iterator

test_dir = Path(__file__).parent  # root/tests

SAMPLE_RATE = 10.0


def short_config_dict() -> dict[str, object]:
    return {
        "seed": 7,
        "scenario_duration": 30.0,
        "training_duration": 90.0,
        "validation_duration": 30.0,
        "drift_duration": 60.0,
        "corrector": {"window_size": 50},
        "tuner": {"max_iters": 2, "learning_rate": 0.5},
    }


@pytest.fixture(scope="session")
def _log_levels() -> list[int]:
    logger = get_logger()
    return [logger.level, *(handler.level for handler in logger.handlers)]


@pytest.fixture(autouse=True)
def _restore_log_level(_log_levels: list[int]) -> Iterator[None]:
    # `cli.main` sets the package log level; keep it from leaking across tests
    logger = get_logger()
    levels = _log_levels
    yield
    logger.setLevel(levels[0])
    for handler, level in zip(logger.handlers, levels[1:]):
        handler.setLevel(level)


@pytest.fixture(scope="session")
def geoms() -> tuple[SegmentGeometry, ...]:
    return default_geometry()


@pytest.fixture(scope="session")
def short_config() -> RunConfig:
    return RunConfig.from_dict(short_config_dict())


@pytest.fixture(scope="session")
def training_run(geoms: tuple[SegmentGeometry, ...]) -> ScenarioRun:
    spec = ScenarioSpec(
        kind=ScenarioKind.TRAINING, duration=120.0, sample_rate=SAMPLE_RATE, seed=11
    )
    return simulate(spec, geoms)


@pytest.fixture(scope="session")
def calibration(training_run: ScenarioRun) -> CalibrationSet:
    return fit_segment_calibrations(training_run)


@pytest.fixture(scope="session")
def sweep_run(geoms: tuple[SegmentGeometry, ...]) -> ScenarioRun:
    spec = ScenarioSpec(
        kind=ScenarioKind.SWEEP, duration=60.0, sample_rate=SAMPLE_RATE, seed=12
    )
    return simulate(spec, geoms)


@pytest.fixture(scope="session")
def sweep_measurements(
    sweep_run: ScenarioRun, calibration: CalibrationSet
) -> MeasurementSet:
    return prepare_measurements(
        sweep_run.sensors, calibration, truth=sweep_run.ground_truth
    )


@pytest.fixture(scope="session")
def filter_configs(
    geoms: tuple[SegmentGeometry, ...], calibration: CalibrationSet
) -> FilterConfigs:
    return default_configs(
        geoms,
        ImuNoiseModel(),
        BendNoiseModel(),
        calibration,
        sample_rate=SAMPLE_RATE,
    )


@pytest.fixture(scope="session")
def noiseless_run(geoms: tuple[SegmentGeometry, ...]) -> ScenarioRun:
    spec = ScenarioSpec(
        kind=ScenarioKind.SWEEP, duration=60.0, sample_rate=SAMPLE_RATE, seed=3
    )
    return simulate(
        spec, geoms, imu=ImuNoiseModel.noiseless(), bend=BendNoiseModel.noiseless()
    )


@pytest.fixture(scope="session")
def noiseless_calibration(noiseless_run: ScenarioRun) -> CalibrationSet:
    return fit_segment_calibrations(noiseless_run)


@pytest.fixture(scope="session")
def noiseless_configs(
    geoms: tuple[SegmentGeometry, ...], noiseless_calibration: CalibrationSet
) -> FilterConfigs:
    return default_configs(
        geoms,
        ImuNoiseModel.noiseless(),
        BendNoiseModel.noiseless(),
        noiseless_calibration,
        sample_rate=SAMPLE_RATE,
    )


@pytest.fixture(scope="session")
def noiseless_measurements(
    noiseless_run: ScenarioRun, noiseless_calibration: CalibrationSet
) -> MeasurementSet:
    return prepare_measurements(
        noiseless_run.sensors, noiseless_calibration, truth=noiseless_run.ground_truth
    )


@pytest.fixture(scope="session")
def scalar_log() -> tuple[MeasurementSet, tuple[SegmentGeometry, ...], dict[str, float]]:
    """One segment on a random walk, observed by two sensors of known noise."""
    from proprio_fusion.kinematics import compose_world, segment_endpoints
    from proprio_fusion.types import GroundTruthLog

    rng = np.random.default_rng(2024)
    frames = 20_000
    noise = {"q": np.radians(0.05) ** 2, "bend": np.radians(1.0) ** 2}
    noise["imu"] = 4.0 * noise["bend"]

    geoms = (SegmentGeometry(index=1, arc_length=100.0),)
    truth = np.cumsum(rng.normal(0.0, np.sqrt(noise["q"]), size=(frames, 1)), axis=0)
    truth = np.clip(truth, -1.0, 1.0)
    bend = truth + rng.normal(0.0, np.sqrt(noise["bend"]), size=truth.shape)
    imu = truth + rng.normal(0.0, np.sqrt(noise["imu"]), size=truth.shape)
    local = segment_endpoints(geoms, truth)
    t = np.arange(frames) / SAMPLE_RATE
    log = GroundTruthLog(
        t=t,
        thetas=truth,
        world_points=compose_world(truth, local),
        pcc_violation=np.zeros(truth.shape, dtype=bool),
        impulse_active=np.zeros(frames, dtype=bool),
        contact=np.zeros(frames, dtype=bool),
        local_points=local,
        sub_arc_difference=np.zeros(truth.shape),
    )
    measurements = MeasurementSet(
        t=t,
        theta_bend=bend,
        bend_clamped=np.zeros(truth.shape, dtype=bool),
        theta_imu_raw=imu,
        theta_imu_corrected=imu,
        drift_offsets=np.zeros(truth.shape),
        truth=log,
    )
    return measurements, geoms, noise


@pytest.fixture(scope="session")
def oracle_spec() -> TunerSpec:
    return TunerSpec(
        filters=("orientation",),
        tune_q=False,
        position_weight=0.0,
        orientation_weight=1.0,
    )


def _run_reproduce(out: Path) -> None:
    config = RunConfig.from_dict(short_config_dict())
    reproduce(config, out, jobs=1)


@pytest.fixture(scope="session")
def reproduce_dir(tmp_path_factory: pytest.TempPathFactory, worker_id: str) -> Path:
    """Output of a short `reproduce`, computed once per test session."""
    if worker_id == "master":
        out = tmp_path_factory.mktemp("reproduce")
        _run_reproduce(out)
        return out

    # shared by every xdist worker
    root = tmp_path_factory.getbasetemp().parent
    out = root / "reproduce"
    marker = root / "reproduce.json"
    with filelock.FileLock(str(marker) + ".lock"):
        if not marker.is_file():
            _run_reproduce(out)
            marker.write_text(json.dumps({"out": str(out)}), encoding="utf-8")
    return Path(json.loads(marker.read_text(encoding="utf-8"))["out"])


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--acceptance",
        action="store_true",
        default=False,
        help="run the experiment-scale checks (many seeds, default durations)",
    )


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    if config.getoption("--acceptance"):
        return
    skip = pytest.mark.skip(reason="experiment-scale check, run with --acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)
