"""Scenario generators and sensor models that replace the physical rig.

Each scenario kind is one `BaseScenario` subclass; `find_scenario` resolves a
kind label (`I`, `II`, `III`, `T`, `D`) to its class.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from proprio_fusion import exceptions
from proprio_fusion._sim.sensors import (
    gyro_bias_rates,
    sensor_characteristics,
    synthesize_bend,
    synthesize_imu,
)
from proprio_fusion._sim.trajectory import (
    ContactScenario,
    DriftScenario,
    ForceScenario,
    SweepScenario,
    TrainingScenario,
)
from proprio_fusion.types import ScenarioKind

if TYPE_CHECKING:
    from proprio_fusion._sim.base import BaseScenario

__all__ = [
    "SweepScenario",
    "ForceScenario",
    "ContactScenario",
    "TrainingScenario",
    "DriftScenario",
    "find_scenario",
    "gyro_bias_rates",
    "sensor_characteristics",
    "synthesize_bend",
    "synthesize_imu",
]

_SCENARIOS: tuple[type[BaseScenario], ...] = (
    SweepScenario,
    ForceScenario,
    ContactScenario,
    TrainingScenario,
    DriftScenario,
)


def find_scenario(kind: str | ScenarioKind, /) -> type[BaseScenario]:
    label = kind.value if isinstance(kind, ScenarioKind) else str(kind).strip().upper()
    for scenario in _SCENARIOS:
        if scenario.kind.value == label:
            return scenario

    error_msg = f"Not found scenario: {kind}"
    raise exceptions.ScenarioError(error_msg)
