"""Voltage to orientation maps of the bend sensors.

One quadratic `theta = a * v**2 + b * v + c` per map, fitted by least squares
and required to be strictly monotonic over the voltages it was fitted on.
Readings outside that range are clamped to it and flagged; the map is never
extrapolated.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np
from typing_extensions import Self

from proprio_fusion import exceptions
from proprio_fusion.utils import as_finite_array, canonical_json, tag_stage

if TYPE_CHECKING:
    from collections.abc import Sequence
    from os import PathLike

    from numpy.typing import ArrayLike, NDArray

    from proprio_fusion.sim import ScenarioRun

__all__ = [
    "CalibrationMap",
    "CalibrationSet",
    "OrientationReading",
    "fit_calibration",
    "voltage_to_orientation",
    "inverse",
    "fit_segment_calibrations",
    "fit_sensor_calibrations",
]

logger = logging.getLogger(__name__)

_dataclass_options: dict[str, Any] = {"frozen": True}
if sys.version_info >= (3, 10):
    _dataclass_options["kw_only"] = True
    _dataclass_options["slots"] = False

_MIN_SAMPLES = 3


class OrientationReading(NamedTuple):
    theta: float
    """orientation (rad)"""
    clamped: bool
    """the pair mean was outside the calibrated voltage range"""


@dataclass(**_dataclass_options)
class CalibrationMap:
    a: float
    b: float
    c: float
    v_min: float
    v_max: float
    fit_rmse: float = 0.0
    """residual RMSE of the fit (rad)"""

    def __post_init__(self) -> None:
        values = (self.a, self.b, self.c, self.v_min, self.v_max, self.fit_rmse)
        if not all(np.isfinite(values)):
            error_msg = f"calibration map has non-finite values: {values}"
            raise exceptions.CalibrationError(error_msg)
        if self.v_min > self.v_max:
            error_msg = f"v_min {self.v_min} exceeds v_max {self.v_max}"
            raise exceptions.CalibrationError(error_msg)
        if self.fit_rmse < 0:
            error_msg = f"fit_rmse must be >= 0, got {self.fit_rmse}"
            raise exceptions.CalibrationError(error_msg)
        if not self.is_monotonic():
            error_msg = (
                f"map {self.a:.6g} v^2 + {self.b:.6g} v + {self.c:.6g} is not "
                f"monotonic on [{self.v_min:.6g}, {self.v_max:.6g}] V"
            )
            raise exceptions.BijectivityError(error_msg)

    def __call__(self, voltage: ArrayLike) -> NDArray[np.float64]:
        v = np.asarray(voltage, dtype=np.float64)
        return (self.a * v + self.b) * v + self.c

    def derivative(self, voltage: ArrayLike) -> NDArray[np.float64]:
        return 2.0 * self.a * np.asarray(voltage, dtype=np.float64) + self.b

    @property
    def increasing(self) -> bool:
        return bool(self.derivative(0.5 * (self.v_min + self.v_max)) > 0)

    def is_monotonic(self) -> bool:
        # the derivative is affine, so the range ends decide
        ends = self.derivative(np.array([self.v_min, self.v_max]))
        return bool(np.all(ends > 0) or np.all(ends < 0))

    def clamp(self, voltage: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
        v = np.asarray(voltage, dtype=np.float64)
        clamped = (v < self.v_min) | (v > self.v_max)
        return np.clip(v, self.v_min, self.v_max), clamped

    def orientations(
        self, voltage: ArrayLike
    ) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
        v, clamped = self.clamp(voltage)
        return self(v), clamped

    def to_dict(self) -> dict[str, float]:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "fit_rmse": self.fit_rmse,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            return cls(**{key: float(data[key]) for key in (
                "a", "b", "c", "v_min", "v_max", "fit_rmse"
            )})
        except (KeyError, TypeError, ValueError) as exc:
            error_msg = f"invalid calibration map: {exc!r}"
            raise exceptions.CalibrationError(error_msg) from exc


def fit_calibration(
    samples: ArrayLike, *, v_range: tuple[float, float] | None = None
) -> CalibrationMap:
    """Least-squares quadratic through `(voltage, orientation)` samples.

    Args:
        samples: `(n, 2)` array of voltage (V) and true orientation (rad).
        v_range: declared validity range; defaults to the sampled range.

    Raises:
        FitError: fewer than three samples or a rank deficient design.
        BijectivityError: the fit is not monotonic on the range.
    """
    data = as_finite_array(samples, "calibration samples")
    if data.ndim != 2 or data.shape[1] != 2:  # noqa: PLR2004
        error_msg = f"samples must have shape (n, 2), got {data.shape}"
        raise exceptions.FitError(error_msg)
    if data.shape[0] < _MIN_SAMPLES:
        error_msg = f"at least {_MIN_SAMPLES} samples are required, got {data.shape[0]}"
        raise exceptions.FitError(error_msg)

    voltage, theta = data[:, 0], data[:, 1]
    design = np.column_stack([voltage**2, voltage, np.ones_like(voltage)])
    coefficients, _, rank, _ = np.linalg.lstsq(design, theta, rcond=None)
    if rank < _MIN_SAMPLES:
        error_msg = f"calibration design is rank deficient (rank {rank})"
        raise exceptions.FitError(error_msg)

    residual = design @ coefficients - theta
    fit_rmse = float(np.sqrt(np.mean(residual**2)))
    v_min, v_max = (
        (float(voltage.min()), float(voltage.max())) if v_range is None else v_range
    )
    a, b, c = (float(value) for value in coefficients)
    logger.debug(
        "calibration fit a=%.6g b=%.6g c=%.6g range=[%.4f, %.4f] rmse=%.3g deg",
        a, b, c, v_min, v_max, np.degrees(fit_rmse),
    )
    return CalibrationMap(a=a, b=b, c=c, v_min=v_min, v_max=v_max, fit_rmse=fit_rmse)


def voltage_to_orientation(
    cal_map: CalibrationMap, v_pair: tuple[float, float]
) -> OrientationReading:
    """Orientation of a sensor pair, evaluated at the mean of the two voltages."""
    mean = 0.5 * (float(v_pair[0]) + float(v_pair[1]))
    theta, clamped = cal_map.orientations(mean)
    return OrientationReading(theta=float(theta), clamped=bool(clamped))


def inverse(cal_map: CalibrationMap, theta: ArrayLike) -> NDArray[np.float64]:
    """Voltage that `cal_map` maps to `theta`, on the branch of its range.

    Orientations beyond the map's image resolve to the vertex of the parabola
    or to a linear continuation; callers clamp those separately.
    """
    a, b = cal_map.a, cal_map.b
    target = np.asarray(theta, dtype=np.float64) - cal_map.c
    sign = 1.0 if cal_map.increasing else -1.0
    root = sign * np.sqrt(np.maximum(b**2 + 4.0 * a * target, 0.0))
    if sign * b > 0:
        # citardauq form, stable as a -> 0
        return 2.0 * target / (b + root)
    return (root - b) / (2.0 * a)


@dataclass(**_dataclass_options)
class CalibrationSet:
    """One map per segment, applied to the mean of the segment's sensor pair."""

    maps: tuple[CalibrationMap, ...]

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def mean_fit_rmse(self) -> float:
        return float(np.mean([cal_map.fit_rmse for cal_map in self.maps]))

    @tag_stage("calibration")
    def orientations(
        self, voltage_pairs: ArrayLike
    ) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
        """Angles and clamp flags for `(..., N, 2)` voltage pairs."""
        pairs = as_finite_array(voltage_pairs, "voltage pairs")
        if pairs.ndim < 2 or pairs.shape[-2:] != (len(self.maps), 2):  # noqa: PLR2004
            error_msg = (
                f"expected (..., {len(self.maps)}, 2) voltage pairs, got {pairs.shape}"
            )
            raise exceptions.DimensionError(error_msg)
        mean = pairs.mean(axis=-1)
        thetas = np.empty_like(mean)
        clamped = np.empty(mean.shape, dtype=bool)
        for i, cal_map in enumerate(self.maps):
            thetas[..., i], clamped[..., i] = cal_map.orientations(mean[..., i])
        return thetas, clamped

    def to_dict(self) -> dict[str, Any]:
        return {"maps": [cal_map.to_dict() for cal_map in self.maps]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            return cls(maps=tuple(CalibrationMap.from_dict(item) for item in data["maps"]))
        except (KeyError, TypeError) as exc:
            error_msg = f"invalid calibration set: {exc!r}"
            raise exceptions.CalibrationError(error_msg) from exc

    def save(self, path: str | PathLike[str]) -> Path:
        target = Path(path)
        target.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return target

    @classmethod
    def load(cls, path: str | PathLike[str]) -> Self:
        with Path(path).open(encoding="utf-8") as file:
            return cls.from_dict(json.load(file))


def _fit_columns(
    voltages: NDArray[np.float64], thetas: NDArray[np.float64], labels: Sequence[str]
) -> tuple[CalibrationMap, ...]:
    maps: list[CalibrationMap] = []
    for column, label in enumerate(labels):
        with tag_stage("calibration"):
            try:
                samples = np.column_stack([voltages[:, column], thetas[:, column]])
                maps.append(fit_calibration(samples))
            except exceptions.CalibrationError as exc:
                error_msg = f"{label}: {exc}"
                raise type(exc)(error_msg) from exc
    return tuple(maps)


def fit_segment_calibrations(run: ScenarioRun) -> CalibrationSet:
    """Fit one map per segment on the pair-mean voltage of a training run."""
    voltages = run.sensors.bend_voltages.mean(axis=-1)
    labels = [f"segment {i}" for i in range(1, voltages.shape[1] + 1)]
    cal_set = CalibrationSet(maps=_fit_columns(voltages, run.ground_truth.thetas, labels))
    logger.info(
        "fitted %d segment calibration(s), mean rmse %.3f deg",
        len(cal_set), np.degrees(cal_set.mean_fit_rmse),
    )
    return cal_set


def fit_sensor_calibrations(run: ScenarioRun) -> tuple[CalibrationMap, ...]:
    """Fit every bend sensor on its own voltage; ordered A1, B1, A2, B2, ..."""
    frames, segments, _ = run.sensors.bend_voltages.shape
    voltages = run.sensors.bend_voltages.reshape(frames, 2 * segments)
    thetas = np.repeat(run.ground_truth.thetas, 2, axis=1)
    labels = [
        f"sensor {side}{i}" for i in range(1, segments + 1) for side in ("A", "B")
    ]
    return _fit_columns(voltages, thetas, labels)
