from __future__ import annotations

from abc import ABC, ABCMeta, abstractmethod
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from proprio_fusion.config import ContactSettings, ForceEventSettings
from proprio_fusion.kinematics import (
    compose_world,
    non_uniform_segment_endpoints,
    segment_endpoints,
)
from proprio_fusion.types import GroundTruthLog, ScenarioKind

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from proprio_fusion.sim import ScenarioSpec
    from proprio_fusion.types import SegmentGeometry

__all__ = []


class TrajectoryProfile(NamedTuple):
    proximal: NDArray[np.float64]
    """(T, N) bend of the proximal half of every arc"""
    distal: NDArray[np.float64]
    """(T, N) bend of the distal half of every arc"""
    pcc_violation: NDArray[np.bool_]
    impulse_active: NDArray[np.bool_]
    contact: NDArray[np.bool_]

    @classmethod
    def uniform(
        cls,
        thetas: NDArray[np.float64],
        *,
        impulse_active: NDArray[np.bool_] | None = None,
        contact: NDArray[np.bool_] | None = None,
    ) -> TrajectoryProfile:
        frames = thetas.shape[0]
        half = 0.5 * thetas
        return cls(
            proximal=half,
            distal=half.copy(),
            pcc_violation=np.zeros(thetas.shape, dtype=bool),
            impulse_active=(
                np.zeros(frames, dtype=bool) if impulse_active is None else impulse_active
            ),
            contact=np.zeros(frames, dtype=bool) if contact is None else contact,
        )


class ScenarioMeta(ABCMeta):
    @property
    def kind(cls) -> ScenarioKind:
        return cls._scenario_kind  # pyright: ignore[reportAttributeAccessIssue]

    def __new__(
        cls,
        name: str,
        bases: tuple[type[Any], ...],
        namespace: dict[str, Any],
        **kwargs: Any,
    ) -> Any:
        kind = namespace.pop("_kind", None)
        if kind is not None:
            namespace["_scenario_kind"] = ScenarioKind(kind)

        return super().__new__(cls, name, bases, namespace, **kwargs)


class BaseScenario(ABC, metaclass=ScenarioMeta):
    """Ground-truth generator of one scenario kind.

    Subclasses set `_kind` and implement `profile`; `generate` turns the
    profile into world-frame ground truth.
    """

    kind: ScenarioKind

    def __init__(
        self,
        spec: ScenarioSpec,
        geoms: Sequence[SegmentGeometry],
        *,
        force: ForceEventSettings | None = None,
        contact: ContactSettings | None = None,
    ) -> None:
        self.spec = spec
        self.geoms = tuple(geoms)
        self.force = force or ForceEventSettings()
        self.contact = contact or ContactSettings()

    @property
    def n_segments(self) -> int:
        return len(self.geoms)

    def timestamps(self) -> NDArray[np.float64]:
        frames = max(round(self.spec.duration * self.spec.sample_rate), 1)
        return np.arange(frames, dtype=np.float64) / self.spec.sample_rate

    @abstractmethod
    def profile(
        self, t: NDArray[np.float64], rng: np.random.Generator
    ) -> TrajectoryProfile:
        """Per-segment sub-arc bends and event flags at the timestamps `t`."""

    def generate(self, rng: np.random.Generator) -> GroundTruthLog:
        t = self.timestamps()
        profile = self.profile(t, rng)
        thetas = profile.proximal + profile.distal
        local = np.where(
            profile.pcc_violation[..., np.newaxis],
            non_uniform_segment_endpoints(self.geoms, profile.proximal, profile.distal),
            segment_endpoints(self.geoms, thetas),
        )
        return GroundTruthLog(
            t=t,
            thetas=thetas,
            world_points=compose_world(thetas, local),
            pcc_violation=profile.pcc_violation,
            impulse_active=profile.impulse_active,
            contact=profile.contact,
            local_points=local,
            sub_arc_difference=profile.distal - profile.proximal,
        )
