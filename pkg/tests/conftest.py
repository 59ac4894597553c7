# tests/conftest.py
"""
Gemeinsame Fixtures für alle Testmodule.

Kleine, von Hand konstruierte Welten mit wenigen Fronten; die vollständige
Straßenkulisse wird nur in den Läufer- und Szenariotests verwendet.
"""
from __future__ import annotations

import math
import pathlib
import sys

import pytest

# --------------------------------------------------------------------------- #
#  Quell-Pfad (src/) zu sys.path hinzufügen, falls nicht installiert
# --------------------------------------------------------------------------- #
PROJECT_ROOT = pathlib.Path(__file__).resolve().parents[1]
SRC_PATH = PROJECT_ROOT / "src"
if SRC_PATH.exists() and str(SRC_PATH) not in sys.path:
    sys.path.insert(0, str(SRC_PATH))

from channel_slam.core.models import (  # noqa: E402
    NoiseModel,
    Position2,
    Position3,
    ReflectingPlane,
    RoadBounds,
    ScenarioWorld,
    UniformMotion,
)


# --------------------------------------------------------------------------- #
#  Fixtures
# --------------------------------------------------------------------------- #
@pytest.fixture()
def base_station() -> Position3:
    return Position3(50.0, 0.0, 8.0)


@pytest.fixture()
def north_face() -> ReflectingPlane:
    """Front bei y = 18 von x = 0 bis 100, Normale zeigt nach −y (zur Straße)."""
    return ReflectingPlane(Position2(0.0, 18.0), Position2(100.0, 18.0), 20.0, 0)


@pytest.fixture()
def road() -> RoadBounds:
    return RoadBounds(0.0, 132.0, -16.0, 16.0)


@pytest.fixture()
def noiseless() -> NoiseModel:
    return NoiseModel.noiseless()


@pytest.fixture()
def shared_reflector_world(base_station, north_face, road) -> ScenarioWorld:
    """Zwei Fahrzeuge mit freier Sicht, die dieselbe Front als Reflektor nutzen."""
    return ScenarioWorld(
        base_station=base_station,
        planes=(north_face,),
        vehicles=(
            UniformMotion(Position2(40.0, 5.0), (2.0, 0.0)),
            UniformMotion(Position2(60.0, -5.0), (-2.0, 0.0)),
        ),
        slot_duration=0.1,
        horizon=20,
        bounds=road,
    )


@pytest.fixture()
def default_noise() -> NoiseModel:
    return NoiseModel(sigma_d=2.61, sigma_angle=math.radians(2.08))
