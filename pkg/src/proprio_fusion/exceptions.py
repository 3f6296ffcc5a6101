"""Exception hierarchy shared by every stage of the estimation pipeline."""

from __future__ import annotations

from typing import Any

__all__ = [
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


class Error(Exception):
    """Base class of all errors raised by this package.

    `stage` names the pipeline stage the error escaped from,
    or is `None` when it was raised outside a tagged stage.
    """

    stage: str | None = None

    def __str__(self) -> str:
        message = super().__str__()
        if self.stage is None:
            return message
        return f"[{self.stage}] {message}"


class InvalidInputError(Error, ValueError):
    """Raised for non-finite values, invalid geometry or mismatched lengths."""


class DimensionError(InvalidInputError):
    """Raised when matrix or vector shapes are inconsistent."""


class ScenarioError(InvalidInputError):
    """Raised for an unknown scenario kind or an invalid scenario spec."""


class CalibrationError(Error):
    """Base class of calibration failures."""


class FitError(CalibrationError):
    """The least-squares design is rank deficient or under-determined."""


class BijectivityError(CalibrationError):
    """The fitted voltage to orientation map is not monotonic on its range."""


class NumericalError(Error, ArithmeticError):
    """A numerical operation failed, e.g. a singular innovation covariance.

    `diagnostics` holds whatever the failing stage could report
    (condition numbers, offending diagonals).
    """

    def __init__(self, *args: Any, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(*args)
        self.diagnostics: dict[str, Any] = dict(diagnostics or {})


class ConfigError(Error):
    """Configuration could not be read, validated or resolved."""


class TuningError(Error):
    """The tuner was given an invalid specification."""
