# tests/test_cvtmap.py
"""
Tests für src/channel_slam/core/cvtmap.py
----------------------------------------
Zuordnung, Zusammenführung, Löschung und der vollständige Pflegeablauf
an der Zwei-Fahrzeug-Welt mit gemeinsamer Front.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from channel_slam.core.channel import observe_paths
from channel_slam.core.cvtmap import (
    CvtMap,
    MaintenanceConfig,
    associate_new_vts,
    association_quality,
    compute_thresholds,
    delete_stale,
    merge_clusters,
)
from channel_slam.core.models import CvtCluster, ValidationError, VtSample
from channel_slam.core.world import vehicle_state

L_DEFAULT = -2.36


# --------------------------------------------------------------------------- #
#  Hilfsfunktionen
# --------------------------------------------------------------------------- #
def _cluster(cid: int, position, index, slot: int = 1, stale: int = 0) -> CvtCluster:
    index = np.asarray(index, dtype=int)
    m = int(np.argmax(index != 0)) if index.any() else 0
    p = int(index[m]) if index.any() else 1
    return CvtCluster(cid, [VtSample(slot, m, p, tuple(position))], index, stale)


def _observe(world, noise, slot: int):
    truths = {m: vehicle_state(world, m, slot * world.slot_duration) for m in range(world.n_vehicles)}
    obs = {m: observe_paths(world, truths[m], noise, np.random.default_rng(m), m) for m in truths}
    estimates = {m: truths[m].position.as_array() for m in truths}
    return estimates, obs


# --------------------------------------------------------------------------- #
#  Qualität & Schwellen
# --------------------------------------------------------------------------- #
@pytest.mark.parametrize(
    "delta, expected",
    [(0.0, 0.0), (math.e - 1.0, -1.0), (9.093, -2.312)],
)
def test_association_quality(delta, expected):
    assert association_quality([1.0, 2.0, 3.0], [1.0 + delta, 2.0, 3.0]) == pytest.approx(expected, abs=1e-3)


def test_compute_thresholds_from_noise():
    l_a, l_m = compute_thresholds(100.0, 2.0, 2.61, math.radians(2.08))
    assert l_a == l_m
    assert math.expm1(-l_a) == pytest.approx(9.09, abs=0.01)
    assert l_a == pytest.approx(-2.31, abs=0.01)
    assert l_a != pytest.approx(L_DEFAULT, abs=1e-3)


def test_compute_thresholds_noise_free():
    assert compute_thresholds(100.0, 2.0, 0.0, 0.0) == (0.0, 0.0)


def test_maintenance_config_validation():
    with pytest.raises(ValidationError):
        MaintenanceConfig(assoc_threshold=0.5)
    with pytest.raises(ValidationError):
        MaintenanceConfig(delete_after=0)


# --------------------------------------------------------------------------- #
#  Zuordnung
# --------------------------------------------------------------------------- #
def test_coincident_vt_joins_cluster():
    clusters = [_cluster(0, (10.0, 0.0, 5.0), [1, 0])]
    vt = VtSample(2, 1, 3, (10.0, 0.0, 5.0))
    out, spawned = associate_new_vts(clusters, [vt], L_DEFAULT, 2, 20, itertools.count(1))
    assert spawned == []
    assert out[0].index_vector.tolist() == [0, 3]
    assert out[0].member_count == 2


def test_far_vt_spawns_standalone():
    clusters = [_cluster(0, (10.0, 0.0, 5.0), [1, 0])]
    vt = VtSample(2, 1, 1, (1010.0, 0.0, 5.0))
    out, spawned = associate_new_vts(clusters, [vt], L_DEFAULT, 2, 20, itertools.count(1))
    assert spawned == [1]
    assert len(out) == 2
    assert out[1].index_vector.tolist() == [0, 1]


def test_threshold_radius():
    radius = math.expm1(-L_DEFAULT)  # ≈ 9.59 m
    clusters = [_cluster(0, (0.0, 0.0, 0.0), [1])]
    inside = VtSample(2, 0, 1, (radius - 0.01, 0.0, 0.0))
    outside = VtSample(2, 0, 1, (radius + 0.01, 0.0, 0.0))
    assert associate_new_vts(clusters, [inside], L_DEFAULT, 1, 20, itertools.count(1))[1] == []
    clusters = [_cluster(0, (0.0, 0.0, 0.0), [1])]
    assert associate_new_vts(clusters, [outside], L_DEFAULT, 1, 20, itertools.count(1))[1] == [1]


def test_same_vehicle_collision_keeps_better_vt():
    clusters = [_cluster(0, (0.0, 0.0, 0.0), [1, 0])]
    near = VtSample(2, 1, 1, (0.5, 0.0, 0.0))
    far = VtSample(2, 1, 2, (2.0, 0.0, 0.0))
    out, spawned = associate_new_vts(clusters, [far, near], L_DEFAULT, 2, 20, itertools.count(5))
    assert out[0].index_vector.tolist() == [0, 1]
    assert spawned == [5]
    assert out[1].index_vector.tolist() == [0, 2]


def test_tie_goes_to_lowest_cluster_id():
    clusters = [_cluster(3, (2.0, 0.0, 0.0), [1]), _cluster(1, (-2.0, 0.0, 0.0), [1])]
    vt = VtSample(2, 0, 1, (0.0, 0.0, 0.0))
    out, _ = associate_new_vts(clusters, [vt], L_DEFAULT, 1, 20, itertools.count(10))
    by_id = {c.cluster_id: c for c in out}
    assert by_id[1].index_vector.tolist() == [1]
    assert by_id[3].index_vector.tolist() == [0]


def test_index_vectors_reset_each_slot():
    clusters = [_cluster(0, (0.0, 0.0, 0.0), [1, 2])]
    out, _ = associate_new_vts(clusters, [], L_DEFAULT, 2, 20, itertools.count(1))
    assert out[0].index_vector.tolist() == [0, 0]


# --------------------------------------------------------------------------- #
#  Zusammenführung & Löschung
# --------------------------------------------------------------------------- #
def test_merge_disjoint_coincident_clusters():
    a = _cluster(0, (1.0, 1.0, 1.0), [1, 0, 0])
    b = _cluster(4, (1.0, 1.0, 1.0), [0, 0, 2])
    out, events = merge_clusters([b, a], L_DEFAULT, 20)
    assert len(out) == 1
    assert out[0].cluster_id == 0
    assert out[0].index_vector.tolist() == [1, 0, 2]
    assert events[0].kept == 0 and events[0].absorbed == 4
    assert out[0].member_count == 2


def test_no_merge_when_same_vehicle_observes_both():
    a = _cluster(0, (1.0, 1.0, 1.0), [0, 0, 1])
    b = _cluster(1, (1.0, 1.0, 1.0), [0, 0, 2])
    out, events = merge_clusters([a, b], L_DEFAULT, 20)
    assert len(out) == 2 and events == []


def test_no_merge_when_far_apart():
    a = _cluster(0, (0.0, 0.0, 0.0), [1, 0])
    b = _cluster(1, (100.0, 0.0, 0.0), [0, 1])
    out, events = merge_clusters([a, b], L_DEFAULT, 20)
    assert len(out) == 2 and events == []


def test_merge_chain_leaves_no_mergeable_pair():
    clusters = [_cluster(i, (0.5 * i, 0.0, 0.0), np.eye(4, dtype=int)[i]) for i in range(4)]
    out, events = merge_clusters(clusters, L_DEFAULT, 20)
    assert len(out) == 1
    assert len(events) == 3
    assert out[0].index_vector.tolist() == [1, 1, 1, 1]


def test_delete_after_t_d_unobserved_slots():
    stale = _cluster(0, (0.0, 0.0, 0.0), [0], stale=9)
    observed = _cluster(1, (5.0, 0.0, 0.0), [1], stale=9)
    fresh = _cluster(2, (9.0, 0.0, 0.0), [1])
    survivors, deleted = delete_stale([stale, observed, fresh], delete_after=10)
    assert deleted == [0]
    assert [c.cluster_id for c in survivors] == [1, 2]
    assert survivors[0].stale_slots == 0


# --------------------------------------------------------------------------- #
#  Vollständiger Pflegeablauf
# --------------------------------------------------------------------------- #
def test_first_slot_shared_reflector(shared_reflector_world, noiseless):
    estimates, obs = _observe(shared_reflector_world, noiseless, 1)
    cvt_map = CvtMap(2)
    report = cvt_map.maintain(estimates, obs, 1)
    assert len(cvt_map) == 2
    assert sorted(report.spawned) == [c.cluster_id for c in cvt_map.clusters]
    by_kind = {tuple(np.round(c.position, 6)): c for c in cvt_map.clusters}
    reflector = by_kind[(50.0, 36.0, 8.0)]
    los = by_kind[(50.0, 0.0, 8.0)]
    assert reflector.index_vector.tolist() == [2, 2]
    assert los.index_vector.tolist() == [1, 1]
    assert report.spawn_members[reflector.cluster_id] == [(0, 2), (1, 2)]


def test_noise_free_steady_state(shared_reflector_world, noiseless):
    cvt_map = CvtMap(2)
    for slot in range(1, 6):
        estimates, obs = _observe(shared_reflector_world, noiseless, slot)
        report = cvt_map.maintain(estimates, obs, slot)
        if slot > 1:
            assert report.spawned == [] and report.merged == [] and report.deleted == []
    positions = sorted(tuple(c.position) for c in cvt_map.clusters)
    np.testing.assert_allclose(positions, [(50.0, 0.0, 8.0), (50.0, 36.0, 8.0)], atol=1e-9)
    for c in cvt_map.clusters:
        assert (np.count_nonzero(c.index_vector) == 2)


def test_vehicle_leaving_specular_zone_zeroes_entry(shared_reflector_world, noiseless):
    cvt_map = CvtMap(2)
    estimates, obs = _observe(shared_reflector_world, noiseless, 1)
    cvt_map.maintain(estimates, obs, 1)
    estimates, obs = _observe(shared_reflector_world, noiseless, 2)
    obs[1] = [z for z in obs[1] if z.path_index == 1]  # nur noch LOS
    cvt_map.maintain(estimates, obs, 2)
    reflector = max(cvt_map.clusters, key=lambda c: c.position[1])
    assert reflector.index_vector.tolist() == [2, 0]


def test_empty_observations_age_clusters(shared_reflector_world, noiseless):
    cvt_map = CvtMap(2, MaintenanceConfig(delete_after=3))
    cvt_map.maintain({}, {}, 1)
    assert len(cvt_map) == 0 and not cvt_map.initialized

    estimates, obs = _observe(shared_reflector_world, noiseless, 1)
    cvt_map.maintain(estimates, obs, 2)
    for slot in (3, 4):
        cvt_map.maintain(estimates, {}, slot)
        assert all(c.stale_slots == slot - 2 for c in cvt_map.clusters)
    report = cvt_map.maintain(estimates, {}, 5)
    assert len(cvt_map) == 0
    assert len(report.deleted) == 2


def test_associations_follow_index_vectors(shared_reflector_world, noiseless):
    estimates, obs = _observe(shared_reflector_world, noiseless, 1)
    cvt_map = CvtMap(2)
    cvt_map.maintain(estimates, obs, 1)
    assocs = cvt_map.associations(obs)
    assert len(assocs) == 4
    for a in assocs:
        cluster = cvt_map.cluster(a.cluster_id)
        assert cluster.index_vector[a.vehicle_id] == a.observation.path_index


def test_unknown_cluster_raises():
    with pytest.raises(KeyError):
        CvtMap(1).cluster(99)
