"""
Performance benchmarks for channel_slam.

Run with:
    pytest tests/test_performance.py --benchmark-only
"""

from __future__ import annotations

import numpy as np
import pytest

from channel_slam.core.apcluster import build_similarity, propagate
from channel_slam.core.channel import observation_from_offset
from channel_slam.core.cvtmap import Association
from channel_slam.core.models import NoiseModel
from channel_slam.core.rng import StreamFactory
from channel_slam.core.tpf import CvtFilter, TpfConfig, VehicleFilter, run_slot

# ------------------------------------------------------------------------------
# Fixtures
# ------------------------------------------------------------------------------

VTS = np.array([[50.0, 0.0, 8.0], [50.0, 36.0, 8.0], [50.0, -36.0, 8.0]])


@pytest.fixture(scope="module")
def vt_cloud() -> np.ndarray:
    """60 verrauschte VT-Schätzungen um drei wahre VTs (erster Slot, dichte Kolonne)."""
    rng = np.random.default_rng(7)
    return np.vstack([vt + rng.normal(0.0, 1.5, (20, 3)) for vt in VTS])


def _team(n: int, n_vehicles: int):
    rng = np.random.default_rng(3)
    ue = [np.array([10.0 + 14.0 * m, (-1.0) ** m * 6.0]) for m in range(n_vehicles)]
    uniform = np.full(n, 1.0 / n)
    vehicles = {m: VehicleFilter(xy + rng.normal(0.0, 1.0, (n, 2)), uniform.copy(), m) for m, xy in enumerate(ue)}
    cvts = {c: CvtFilter(vt + rng.normal(0.0, 1.0, (n, 3)), uniform.copy(), c) for c, vt in enumerate(VTS)}
    assocs = [
        Association(c, observation_from_offset(vt - [*xy, 1.5], m, c + 1))
        for m, xy in enumerate(ue)
        for c, vt in enumerate(VTS)
    ]
    return vehicles, cvts, assocs


# ------------------------------------------------------------------------------
# Affinity propagation
# ------------------------------------------------------------------------------


@pytest.mark.benchmark(group="apcluster")
def test_affinity_propagation_under_200ms(benchmark, vt_cloud):
    """Median von `propagate()` auf 60 Punkten bleibt unter 200 ms."""
    sim = build_similarity(vt_cloud)

    result = benchmark(propagate, sim)
    median_ms = benchmark.stats["median"] * 1_000
    assert result.n_clusters >= 1
    assert median_ms < 200, f"Median {median_ms:.2f} ms exceeds 200 ms"


# ------------------------------------------------------------------------------
# Team particle filter slot
# ------------------------------------------------------------------------------


@pytest.mark.benchmark(group="tpf")
def test_run_slot_eight_vehicles_under_1s(benchmark):
    """
    Ein Slot mit 8 Fahrzeugen, 3 CVTs, je 120 Partikeln und 10 Batches
    bleibt im Median unter 1 s.
    """
    config = TpfConfig(n_vehicle=120, n_cvt=120, n_batches=10)
    noise = NoiseModel()

    def _run():
        vehicles, cvts, assocs = _team(120, 8)
        return run_slot(vehicles, cvts, assocs, config, noise, StreamFactory(1), slot=1)

    result = benchmark(_run)
    median_ms = benchmark.stats["median"] * 1_000
    assert set(result.vehicle_estimates) == set(range(8))
    assert median_ms < 1_000, f"Median {median_ms:.1f} ms exceeds 1 s"
