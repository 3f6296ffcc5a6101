from __future__ import annotations

from typing import Any

from proprio_fusion.calibration import (
    CalibrationMap,
    CalibrationSet,
    fit_calibration,
    fit_segment_calibrations,
    fit_sensor_calibrations,
    inverse,
)
from proprio_fusion.config import (
    BendNoiseModel,
    CorrectorSettings,
    ImuNoiseModel,
    RunConfig,
    TunerSpec,
    load_config,
)
from proprio_fusion.drift import DriftCorrector, DriftCorrectorBank, correct_stream
from proprio_fusion.estimator import (
    MeasurementSet,
    create_estimator,
    estimate_shape,
    prepare_measurements,
    run_method,
)
from proprio_fusion.evaluation import ComparisonTable, compare_methods, summarize
from proprio_fusion.exceptions import (
    BijectivityError,
    CalibrationError,
    ConfigError,
    DimensionError,
    Error,
    FitError,
    InvalidInputError,
    NumericalError,
    ScenarioError,
    TuningError,
)
from proprio_fusion.kalman import (
    FilterConfigs,
    KalmanConfig,
    KalmanFilter,
    KalmanState,
    default_configs,
    fuse_coordinates,
    fuse_orientation,
)
from proprio_fusion.kinematics import (
    compose_world,
    curvature_endpoint,
    default_geometry,
    offset_endpoint,
    segment_endpoint,
    segment_endpoints,
)
from proprio_fusion.log import _setup_config
from proprio_fusion.pipeline import reproduce
from proprio_fusion.sim import ScenarioRun, ScenarioSpec, simulate
from proprio_fusion.tuner import TunerReport, tune
from proprio_fusion.types import (
    Method,
    RobotShapeEstimate,
    ScenarioKind,
    SegmentGeometry,
    SensorFrame,
)

__all__ = [
    # kinematics
    "SegmentGeometry",
    "curvature_endpoint",
    "offset_endpoint",
    "segment_endpoint",
    "segment_endpoints",
    "compose_world",
    "default_geometry",
    # simulation
    "ScenarioKind",
    "ScenarioSpec",
    "ScenarioRun",
    "simulate",
    # calibration
    "CalibrationMap",
    "CalibrationSet",
    "fit_calibration",
    "fit_segment_calibrations",
    "fit_sensor_calibrations",
    "inverse",
    # drift
    "DriftCorrector",
    "DriftCorrectorBank",
    "correct_stream",
    # kalman
    "KalmanConfig",
    "KalmanState",
    "KalmanFilter",
    "FilterConfigs",
    "fuse_orientation",
    "fuse_coordinates",
    "default_configs",
    # estimation
    "Method",
    "SensorFrame",
    "RobotShapeEstimate",
    "MeasurementSet",
    "prepare_measurements",
    "estimate_shape",
    "create_estimator",
    "run_method",
    # tuner
    "TunerReport",
    "tune",
    # evaluation
    "ComparisonTable",
    "compare_methods",
    "summarize",
    "reproduce",
    # config
    "ImuNoiseModel",
    "BendNoiseModel",
    "CorrectorSettings",
    "TunerSpec",
    "RunConfig",
    "load_config",
    # error
    "Error",
    "InvalidInputError",
    "DimensionError",
    "ScenarioError",
    "CalibrationError",
    "FitError",
    "BijectivityError",
    "NumericalError",
    "ConfigError",
    "TuningError",
]

__version__: str
_setup_config()


def __getattr__(name: str) -> Any:  # pragma: no cover
    from importlib.metadata import version

    if name == "__version__":
        return version("proprio-fusion")

    error_msg = f"The attribute named {name!r} is undefined."
    raise AttributeError(error_msg)
