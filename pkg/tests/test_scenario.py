# tests/test_scenario.py
"""
Tests für src/channel_slam/sim/scenario.py
-----------------------------------------
Rundkurse bleiben auf der Straße und sind stetig, Gebäudefronten zeigen
zur Straße.
"""
from __future__ import annotations

import numpy as np
import pytest

from channel_slam.core.io_config import RunConfig, ScenarioConfig
from channel_slam.core.world import true_virtual_transmitters, vehicle_state, visible_paths
from channel_slam.sim.scenario import build_world, building_planes, loop_trajectory, vehicle_trajectories


@pytest.fixture(scope="module")
def scenario() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.mark.parametrize("loop", range(4))
def test_loop_is_continuous_and_closed(scenario, loop):
    traj = loop_trajectory(scenario, loop)
    for end in traj._ends:
        before, _ = traj.state_at(end - 1e-7)
        after, _ = traj.state_at(end + 1e-7)
        np.testing.assert_allclose(before, after, atol=1e-4)
    np.testing.assert_allclose(traj.state_at(0.0)[0], traj.state_at(traj.period)[0], atol=1e-9)


@pytest.mark.parametrize("loop", range(4))
def test_loop_stays_on_road_and_below_speed_limit(scenario, loop):
    traj = loop_trajectory(scenario, loop)
    for t in np.linspace(0.0, traj.period, 400):
        pos, vel = traj.state_at(float(t))
        assert scenario.road_x[0] <= pos[0] <= scenario.road_x[1]
        assert scenario.road_y[0] <= pos[1] <= scenario.road_y[1]
        assert np.linalg.norm(vel) <= scenario.max_speed


def test_loops_run_clockwise(scenario):
    traj = loop_trajectory(scenario, 0)
    pos, vel = traj.state_at(0.0)
    assert pos[1] > 0.0 and vel[0] > 0.0  # oben nach rechts


def test_vehicle_phases_are_spread(scenario):
    trajs = vehicle_trajectories(scenario, 8)
    assert len(trajs) == 8
    starts = {tuple(np.round(t.state_at(0.0)[0], 6)) for t in trajs}
    assert len(starts) == 8


def test_building_planes_face_the_road(scenario):
    planes = building_planes(scenario, 6.0)
    assert [p.plane_id for p in planes] == list(range(len(planes)))
    for plane in planes:
        assert plane.signed_distance([66.0, 0.0]) > 0.0
        assert plane.length <= scenario.building_length + 1e-9
    north = [p for p in planes if p.start.y > 0.0]
    assert len(north) == len(planes) // 2
    assert north[0].start.x == 0.0 and north[1].start.x == pytest.approx(18.0)


def test_no_buildings_for_infinite_gap(scenario):
    assert building_planes(scenario, None) == []


def test_build_world_is_consistent():
    config = RunConfig(slots=50)
    world = build_world(config, 4, 24.0)
    assert world.n_vehicles == 4
    assert world.horizon == 50
    for m in range(world.n_vehicles):
        for k in range(world.horizon + 1):
            vehicle_state(world, m, k * world.slot_duration)
    vts = true_virtual_transmitters(world)
    assert vts.shape == (3, 3)  # BS, Spiegel Nord, Spiegel Süd


def test_every_vehicle_sees_paths():
    world = build_world(RunConfig(slots=10), 8, 6.0)
    for m in range(world.n_vehicles):
        assert visible_paths(world, vehicle_state(world, m, 0.0))
