from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
from typing_extensions import override

from proprio_fusion import const, exceptions
from proprio_fusion._sim.base import BaseScenario, TrajectoryProfile

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from proprio_fusion.config import ContactSettings, ForceEventSettings
    from proprio_fusion.sim import ScenarioSpec
    from proprio_fusion.types import SegmentGeometry

__all__ = [
    "SweepScenario",
    "ForceScenario",
    "ContactScenario",
    "TrainingScenario",
    "DriftScenario",
]

_PHASE_LAG = 0.15
_ENVELOPE_DEPTH = 0.15
_ENVELOPE_PERIODS = 7.3
_SETPOINT_HOLD_S = (2.0, 5.0)
_TRAINING_SWEEP_SHARE = 2.0 / 3.0
_CONTACT_ONSET = 0.5
_CONTACT_BLEND = 0.25
_VIOLATION_FLOOR = 1e-3


def sweep_weights(n: int) -> NDArray[np.float64]:
    """Share of the total sweep taken by every segment, decreasing to the tip."""
    weights = np.linspace(1.0, 0.5, n) if n > 1 else np.ones(1)
    return weights / weights.sum()


def lateral_sweep(
    t: NDArray[np.float64],
    n: int,
    rng: np.random.Generator,
    *,
    amplitude: float = const.SWEEP_AMPLITUDE_RAD,
    period: float = const.SWEEP_PERIOD_S,
) -> NDArray[np.float64]:
    """Side to side swing whose summed bend never exceeds `amplitude`."""
    phase, envelope_phase = rng.uniform(0.0, 2.0 * math.pi, size=2)
    envelope = (1.0 - _ENVELOPE_DEPTH) + _ENVELOPE_DEPTH * np.sin(
        2.0 * math.pi * t / (_ENVELOPE_PERIODS * period) + envelope_phase
    )
    lags = _PHASE_LAG * np.arange(n)
    wave = np.sin(2.0 * math.pi * t[:, np.newaxis] / period + phase - lags)
    return amplitude * sweep_weights(n) * envelope[:, np.newaxis] * wave


def smoothstep(x: NDArray[np.float64]) -> NDArray[np.float64]:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


class SweepScenario(BaseScenario):
    """Free lateral swing of the whole arm."""

    _kind = "I"

    @override
    def profile(
        self, t: NDArray[np.float64], rng: np.random.Generator
    ) -> TrajectoryProfile:
        return TrajectoryProfile.uniform(lateral_sweep(t, self.n_segments, rng))


class ForceScenario(BaseScenario):
    """Swing disturbed by short external pushes on random segments.

    Pushes arrive as a Poisson process; each one adds a half-sine bend to a
    single segment and is flagged as `impulse_active` while it lasts.
    """

    _kind = "II"

    @override
    def profile(
        self, t: NDArray[np.float64], rng: np.random.Generator
    ) -> TrajectoryProfile:
        thetas = lateral_sweep(t, self.n_segments, rng)
        duration = float(t[-1]) + 1.0 / self.spec.sample_rate
        count = int(rng.poisson(self.force.rate_hz * duration))
        starts = np.sort(rng.uniform(0.0, duration, size=count))
        lengths = rng.uniform(*self.force.duration_range, size=count)
        amplitudes = rng.uniform(*self.force.amplitude_range, size=count)
        signs = rng.choice([-1.0, 1.0], size=count)
        segments = rng.integers(0, self.n_segments, size=count)

        active = np.zeros(t.size, dtype=bool)
        for start, length, amplitude, sign, segment in zip(
            starts, lengths, amplitudes, signs, segments
        ):
            inside = (t >= start) & (t <= start + length)
            thetas[inside, segment] += (
                sign * amplitude * np.sin(math.pi * (t[inside] - start) / length)
            )
            active |= inside
        return TrajectoryProfile.uniform(thetas, impulse_active=active)


class ContactScenario(BaseScenario):
    """Swing against an obstacle that periodically holds one segment.

    While in contact the held segment is pressed to `contact.angle` (beyond
    the calibrated range), every distal segment wraps by `contact.wrap`, and
    the held segment and its distal neighbour lose constant curvature: part
    of their bend moves to the proximal sub-arc.
    """

    _kind = "III"

    def __init__(
        self,
        spec: ScenarioSpec,
        geoms: Sequence[SegmentGeometry],
        *,
        force: ForceEventSettings | None = None,
        contact: ContactSettings | None = None,
    ) -> None:
        super().__init__(spec, geoms, force=force, contact=contact)
        if not 1 <= self.contact.segment <= self.n_segments:
            error_msg = (
                f"contact segment {self.contact.segment} is outside "
                f"1..{self.n_segments}"
            )
            raise exceptions.ScenarioError(error_msg)


    def contact_level(self, t: NDArray[np.float64]) -> NDArray[np.float64]:
        wave = np.sin(2.0 * math.pi * t / self.contact.period)
        return smoothstep((wave - _CONTACT_ONSET) / _CONTACT_BLEND)

    @override
    def profile(
        self, t: NDArray[np.float64], rng: np.random.Generator
    ) -> TrajectoryProfile:
        thetas = lateral_sweep(t, self.n_segments, rng)
        level = self.contact_level(t)
        held = self.contact.segment - 1

        thetas[:, held] = (1.0 - level) * thetas[:, held] + level * self.contact.angle
        thetas[:, held + 1 :] += level[:, np.newaxis] * self.contact.wrap

        skew = np.zeros_like(thetas)
        bent = slice(held, min(held + 2, self.n_segments))
        skew[:, bent] = self.contact.non_uniformity * level[:, np.newaxis]
        proximal = 0.5 * thetas * (1.0 + skew)
        distal = 0.5 * thetas * (1.0 - skew)
        return TrajectoryProfile(
            proximal=proximal,
            distal=distal,
            pcc_violation=skew > _VIOLATION_FLOOR,
            impulse_active=np.zeros(t.size, dtype=bool),
            contact=level > 0,
        )


class TrainingScenario(BaseScenario):
    """Calibration and tuning run.

    The first two thirds sweep the arm by +/-50 degrees; the last third moves
    every segment independently between random set-points within the
    calibrated range.
    """

    _kind = "T"

    @override
    def profile(
        self, t: NDArray[np.float64], rng: np.random.Generator
    ) -> TrajectoryProfile:
        thetas = lateral_sweep(t, self.n_segments, rng)
        split = t[0] + _TRAINING_SWEEP_SHARE * (t[-1] - t[0])
        random_part = t > split
        if np.any(random_part):
            start = int(np.argmax(random_part))
            thetas[start:] = self._setpoints(t[start:], thetas[start - 1], rng)
        return TrajectoryProfile.uniform(thetas)

    def _setpoints(
        self,
        t: NDArray[np.float64],
        initial: NDArray[np.float64],
        rng: np.random.Generator,
    ) -> NDArray[np.float64]:
        knots = [float(t[0])]
        while knots[-1] <= t[-1]:
            knots.append(knots[-1] + float(rng.uniform(*_SETPOINT_HOLD_S)))
        bound = const.RANDOM_CURVATURE_RANGE_RAD
        targets = rng.uniform(-bound, bound, size=(len(knots), self.n_segments))
        targets[0] = initial

        interval = np.searchsorted(knots, t, side="right") - 1
        begin = np.asarray(knots)[interval]
        end = np.asarray(knots)[interval + 1]
        blend = smoothstep((t - begin) / (end - begin))[:, np.newaxis]
        return targets[interval] + blend * (targets[interval + 1] - targets[interval])


class DriftScenario(BaseScenario):
    """First segment oscillates by +/-20 degrees, the others stay straight."""

    _kind = "D"

    @override
    def profile(
        self, t: NDArray[np.float64], rng: np.random.Generator
    ) -> TrajectoryProfile:
        thetas = np.zeros((t.size, self.n_segments))
        thetas[:, 0] = const.DRIFT_TRACE_AMPLITUDE_RAD * np.sin(
            2.0 * math.pi * t / const.DRIFT_TRACE_PERIOD_S
        )
        return TrajectoryProfile.uniform(thetas)
