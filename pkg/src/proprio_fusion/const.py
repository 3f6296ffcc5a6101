from __future__ import annotations

import math

#
# kinematics
TAYLOR_THRESHOLD = 1e-4
"""|theta| (rad) below which the curvature endpoint uses its series expansion."""
DEFAULT_MODULES = 3
DEFAULT_SEGMENTS_PER_MODULE = 2
DEFAULT_ARC_LENGTH_MM = 80.0
DEFAULT_OFFSET_LENGTH_MM = 17.15

#
# sampling
DEFAULT_SAMPLE_RATE_HZ = 10.0
DEFAULT_SCENARIO_DURATION_S = 900.0
DEFAULT_TRAINING_DURATION_S = 1200.0
DEFAULT_VALIDATION_DURATION_S = 600.0
DRIFT_TRACE_DURATION_S = 900.0

#
# scenarios
SWEEP_AMPLITUDE_RAD = math.radians(50.0)
SWEEP_PERIOD_S = 10.0
RANDOM_CURVATURE_RANGE_RAD = math.radians(25.0)
DRIFT_TRACE_AMPLITUDE_RAD = math.radians(20.0)
DRIFT_TRACE_PERIOD_S = 5.0
FORCE_EVENT_RATE_HZ = 0.1
FORCE_EVENT_DURATION_S = (0.5, 2.0)
FORCE_EVENT_AMPLITUDE_RAD = (math.radians(5.0), math.radians(15.0))
CONTACT_SEGMENT = 3
CONTACT_ANGLE_RAD = math.radians(34.0)
CONTACT_WRAP_RAD = math.radians(12.0)
CONTACT_NON_UNIFORMITY = 0.35

#
# sensors
ADC_REFERENCE_V = 3.3
ADC_BITS = 12
DEFAULT_GYRO_BIAS_RATE = math.radians(0.05)
DEFAULT_GYRO_BIAS_SPREAD = math.radians(0.005)
DEFAULT_DRIFT_RATE_STD = math.radians(0.05)
DEFAULT_YAW_WHITE_NOISE_STD = math.radians(1.0)
DEFAULT_ACCELERATION_SPIKE_GAIN = 5e-5
DEFAULT_VOLTAGE_NOISE_STD = 0.12
DEFAULT_HYSTERESIS_WIDTH = math.radians(2.0)
DEFAULT_NONUNIFORM_GAIN = 0.5

#
# drift correction
DEFAULT_WINDOW_SIZE = 100
DEFAULT_THRESHOLD_RAD = math.radians(0.5)

#
# kalman
VARIANCE_FLOOR = 1e-12
PSD_TOLERANCE = 1e-10
GAIN_TOLERANCE = 1e-14
"""largest gain change at which the Riccati recursion counts as converged"""
DEFAULT_MOTION_RATE_RAD_S = math.radians(30.0)
"""typical bend rate, sizes the default process noise"""

#
# tuner
DEFAULT_LEARNING_RATE = 0.5
DEFAULT_MAX_ITERS = 30
DEFAULT_CONVERGENCE_TOL = 1e-4
DEFAULT_FD_STEP = 1e-4
DEFAULT_MAX_BACKTRACKS = 12
TUNER_EPSILON = 1e-9
DIVERGED = math.inf
GENERALIZATION_BOUND = 1.5

#
# files
SENSOR_SUFFIX = ".sensors.csv"
GROUND_TRUTH_SUFFIX = ".gt.csv"
METADATA_SUFFIX = ".meta.json"
MANIFEST_NAME = "manifest.json"
