"""Online IMU drift correction against the drift-free bend orientation.

The wrapped IMU-minus-bend difference is unrolled into a continuous signal
and averaged over a moving window. That average is the drift estimate; the
correction applied to the IMU is latched and only replaced
when the estimate moves further than `threshold` from it, so between two
latches the corrected signal keeps the full IMU dynamics.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from typing import TYPE_CHECKING

import numpy as np

from proprio_fusion import const, exceptions
from proprio_fusion.config import CorrectorSettings
from proprio_fusion.utils import as_finite_array, tag_stage, wrap_angle

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

__all__ = ["DriftCorrector", "DriftCorrectorBank", "correct_stream"]

logger = logging.getLogger(__name__)


class DriftCorrector:
    """Drift corrector of one IMU channel."""

    def __init__(
        self,
        window_size: int = const.DEFAULT_WINDOW_SIZE,
        threshold: float = const.DEFAULT_THRESHOLD_RAD,
    ) -> None:
        if window_size < 1:
            error_msg = f"window_size must be >= 1, got {window_size}"
            raise exceptions.InvalidInputError(error_msg)
        if not math.isfinite(threshold) or threshold < 0:
            error_msg = f"threshold must be >= 0, got {threshold}"
            raise exceptions.InvalidInputError(error_msg)

        self.window_size = window_size
        self.threshold = threshold
        self._differences: deque[float] = deque(maxlen=window_size)
        self._sum = 0.0
        self.accumulated_offset = 0.0
        self.latches = 0

    @classmethod
    def from_settings(cls, settings: CorrectorSettings) -> DriftCorrector:
        return cls(window_size=settings.window_size, threshold=settings.threshold)

    def __len__(self) -> int:
        return len(self._differences)

    @property
    def offset(self) -> float:
        """Current moving-average difference, IMU minus bend (unwrapped)."""
        if not self._differences:
            return 0.0
        return self._sum / len(self._differences)

    def update(self, theta_imu: float, theta_bend: float) -> float:
        """Push one sample pair and return the corrected IMU angle."""
        if not (math.isfinite(theta_imu) and math.isfinite(theta_bend)):
            error_msg = f"non-finite input: imu={theta_imu}, bend={theta_bend}"
            raise exceptions.InvalidInputError(error_msg)

        difference = float(wrap_angle(theta_imu - theta_bend))
        if self._differences:
            # stay on the branch of the previous sample across a wrap
            last = self._differences[-1]
            difference = last + float(wrap_angle(difference - last))
        if len(self._differences) == self.window_size:
            self._sum -= self._differences[0]
        self._differences.append(difference)
        self._sum += difference

        offset = self.offset
        if abs(offset - self.accumulated_offset) > self.threshold:
            logger.debug(
                "drift correction latched %.4f -> %.4f rad",
                self.accumulated_offset, offset,
            )
            self.accumulated_offset = offset
            self.latches += 1
        return float(wrap_angle(theta_imu - self.accumulated_offset))

    def reset(self) -> DriftCorrector:
        self._differences.clear()
        self._sum = 0.0
        self.accumulated_offset = 0.0
        self.latches = 0
        return self


class DriftCorrectorBank:
    """One independent corrector per IMU channel."""

    def __init__(
        self, n: int, settings: CorrectorSettings | None = None
    ) -> None:
        settings = settings or CorrectorSettings()
        self.settings = settings
        self.correctors = tuple(DriftCorrector.from_settings(settings) for _ in range(n))

    def __len__(self) -> int:
        return len(self.correctors)

    @property
    def offsets(self) -> NDArray[np.float64]:
        return np.array([item.accumulated_offset for item in self.correctors])

    @tag_stage("drift_correction")
    def update(self, theta_imu: ArrayLike, theta_bend: ArrayLike) -> NDArray[np.float64]:
        imu = np.asarray(theta_imu, dtype=np.float64)
        bend = np.asarray(theta_bend, dtype=np.float64)
        if imu.shape != (len(self),) or bend.shape != (len(self),):
            error_msg = (
                f"expected {len(self)} angles per channel set, "
                f"got imu {imu.shape} and bend {bend.shape}"
            )
            raise exceptions.DimensionError(error_msg)
        return np.array([
            corrector.update(float(a), float(b))
            for corrector, a, b in zip(self.correctors, imu, bend)
        ])

    def reset(self) -> DriftCorrectorBank:
        for corrector in self.correctors:
            corrector.reset()
        return self


@tag_stage("drift_correction")
def correct_stream(
    theta_imu: ArrayLike,
    theta_bend: ArrayLike,
    settings: CorrectorSettings | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Run a fresh bank over `(T, N)` streams.

    Returns:
        corrected IMU angles and the latched offset after every sample, both `(T, N)`.
    """
    imu = as_finite_array(theta_imu, "imu angles", ndim=2)
    bend = as_finite_array(theta_bend, "bend angles", ndim=2)
    if imu.shape != bend.shape:
        error_msg = f"imu {imu.shape} and bend {bend.shape} streams differ in shape"
        raise exceptions.DimensionError(error_msg)

    bank = DriftCorrectorBank(imu.shape[1], settings)
    corrected = np.empty_like(imu)
    offsets = np.empty_like(imu)
    for k in range(imu.shape[0]):
        corrected[k] = bank.update(imu[k], bend[k])
        offsets[k] = bank.offsets
    logger.debug(
        "drift correction latched %s time(s) per channel",
        [corrector.latches for corrector in bank.correctors],
    )
    return corrected, offsets
