"""
channel_slam.sim.scenario
~~~~~~~~~~~~~~~~~~~~~~~~~

Aufbau der Versuchswelt: acht Fahrstreifen als vier geschlossene Runden
im Uhrzeigersinn und Gebäudefronten entlang beider Straßenseiten.

Runde k fährt auf den Fahrstreifen ``y = ±r_k`` (``r_k = w/2 + k·w``) und
wendet über Halbkreise um die beiden Wendepunkte. Der obere Abschnitt
beschleunigt von ``v_lo`` auf ``v_hi``, der untere bremst zurück; bei
``v_lo == v_hi`` sind beide Abschnitte gleichförmig.
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional

from ..core.io_config import RunConfig, ScenarioConfig
from ..core.models import (
    AcceleratedMotion,
    CircularMotion,
    PiecewiseTrajectory,
    Position2,
    Position3,
    ReflectingPlane,
    RoadBounds,
    ScenarioWorld,
    TrajectorySegment,
    UniformMotion,
)

__all__ = ["loop_trajectory", "building_planes", "vehicle_trajectories", "build_world"]

logger = logging.getLogger(__name__)


def _straight(start: Position2, v_start: float, v_end: float, length: float, sign: float) -> TrajectorySegment:
    duration = 2.0 * length / (v_start + v_end)
    if math.isclose(v_start, v_end):
        model = UniformMotion(start, (sign * v_start, 0.0))
    else:
        accel = (v_end * v_end - v_start * v_start) / (2.0 * length)
        model = AcceleratedMotion(start, (sign * v_start, 0.0), (sign * accel, 0.0))
    return TrajectorySegment(model, duration)


def loop_trajectory(scenario: ScenarioConfig, loop: int, phase: float = 0.0) -> PiecewiseTrajectory:
    """Geschlossene Runde *loop* (0 = innerste) mit Einstiegsversatz *phase* in Sekunden."""
    y0 = 0.5 * (scenario.road_y[0] + scenario.road_y[1])
    radius = scenario.lane_width * (0.5 + loop)
    x_left, x_right = scenario.loop_centers_x
    length = x_right - x_left
    v_lo, v_hi = scenario.loop_speeds[loop]

    segments = (
        _straight(Position2(x_left, y0 + radius), v_lo, v_hi, length, +1.0),
        TrajectorySegment(
            CircularMotion(Position2(x_right, y0), radius, -v_hi / radius, math.pi / 2.0),
            math.pi * radius / v_hi,
        ),
        _straight(Position2(x_right, y0 - radius), v_hi, v_lo, length, -1.0),
        TrajectorySegment(
            CircularMotion(Position2(x_left, y0), radius, -v_lo / radius, -math.pi / 2.0),
            math.pi * radius / v_lo,
        ),
    )
    return PiecewiseTrajectory(segments, phase)


def vehicle_trajectories(scenario: ScenarioConfig, density: int) -> List[PiecewiseTrajectory]:
    """Fahrzeug i fährt Runde ``i mod n_loops``; Fahrzeuge einer Runde sind gleichmäßig versetzt."""
    n_loops = scenario.n_loops
    out: List[PiecewiseTrajectory] = []
    for i in range(density):
        loop, j = i % n_loops, i // n_loops
        on_loop = len(range(loop, density, n_loops))
        period = loop_trajectory(scenario, loop).period
        phase = (period * (j / on_loop + 0.125 * loop)) % period
        out.append(loop_trajectory(scenario, loop, phase))
    return out


def building_planes(scenario: ScenarioConfig, gap: Optional[float]) -> List[ReflectingPlane]:
    """
    Straßenseitige Gebäudefronten (Länge D, Lücke d) auf beiden Seiten.

    Nordfronten laufen in +x, Südfronten in −x, sodass alle Normalen zur
    Straße zeigen. ``gap=None`` bedeutet d = ∞ (keine Gebäude).
    """
    if gap is None:
        return []
    x_min, x_max = scenario.road_x
    y_north = scenario.road_y[1] + scenario.building_setback
    y_south = scenario.road_y[0] - scenario.building_setback
    planes: List[ReflectingPlane] = []
    start = x_min
    while start < x_max:
        end = min(start + scenario.building_length, x_max)
        if end - start > 1e-9:
            planes.append(
                ReflectingPlane(Position2(start, y_north), Position2(end, y_north), scenario.building_height, len(planes))
            )
            planes.append(
                ReflectingPlane(Position2(end, y_south), Position2(start, y_south), scenario.building_height, len(planes))
            )
        start += scenario.building_length + gap
    return planes


def build_world(config: RunConfig, density: int, gap: Optional[float]) -> ScenarioWorld:
    sc = config.scenario
    world = ScenarioWorld(
        base_station=Position3(*sc.base_station),
        planes=tuple(building_planes(sc, gap)),
        vehicles=tuple(vehicle_trajectories(sc, density)),
        slot_duration=config.slot_duration,
        horizon=config.slots,
        bounds=RoadBounds(sc.road_x[0], sc.road_x[1], sc.road_y[0], sc.road_y[1]),
        ue_height=sc.ue_height,
        max_speed=sc.max_speed,
    )
    logger.debug(
        "Welt: %d Fahrzeuge, %d Fronten (Lücke %s m)", density, len(world.planes), "∞" if gap is None else gap
    )
    return world
