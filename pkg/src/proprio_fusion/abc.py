"""Interface of the streaming shape estimators.

A shape estimator consumes one sensor frame at a time and returns the
planar shape of the whole arm for that frame.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

from typing_extensions import Self

if TYPE_CHECKING:
    from proprio_fusion.types import Method, RobotShapeEstimate, SensorFrame

__all__ = []


class ShapeEstimatorABC(ABC):
    @property
    @abstractmethod
    def method(self) -> Method:
        """The estimation method this estimator implements."""

    @abstractmethod
    def estimate(self, frame: SensorFrame) -> RobotShapeEstimate:
        """Estimate the shape of the arm for one sensor frame.

        Frames must be passed in time order. Estimators keep state between
        calls (drift corrector windows, filter covariances), so the result
        of a frame depends on every frame passed before it since the last
        `.reset()`.

        Any error raised while processing the frame carries the name of the
        pipeline stage it escaped from in its `stage` attribute.
        """

    @abstractmethod
    def reset(self) -> Self:
        """Forget every frame seen so far.

        After a reset the estimator behaves exactly as a freshly created one
        with the same calibration, settings and filter configs.
        """

    @property
    @abstractmethod
    def n_segments(self) -> int:
        """Number of sensing segments the estimator was built for."""
