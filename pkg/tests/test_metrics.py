# tests/test_metrics.py
from __future__ import annotations

import numpy as np
import pytest

from channel_slam.core.metrics import (
    EntityKind,
    ErrorSample,
    cdf_table,
    error_over_time,
    improvement,
    mae,
    mean_vt_count,
    quantile_error,
    summarize,
)
from channel_slam.core.models import DomainError, ValidationError


def _samples(errors, kind=EntityKind.VEHICLE, slot=1):
    return [ErrorSample("run", slot, kind, i, e) for i, e in enumerate(errors)]


# --------------------------------------------------------------------------- #
#  MAE & Quantil
# --------------------------------------------------------------------------- #
@pytest.mark.parametrize("errors, expected", [([1.0, 3.0], 2.0), ([0.0, 0.0, 0.0], 0.0), ([4.2], 4.2)])
def test_mae(errors, expected):
    assert mae(errors) == pytest.approx(expected)
    assert mae(_samples(errors)) == pytest.approx(expected)


def test_mae_empty():
    with pytest.raises(DomainError):
        mae([])


def test_quantile_error_order_statistic():
    assert quantile_error([1.0, 2.0, 3.0, 4.0, 5.0], 0.8) == 4.0
    assert quantile_error([7.0], 0.5) == 7.0


def test_quantile_error_permutation_invariant():
    rng = np.random.default_rng(0)
    errors = rng.exponential(2.0, 101)
    assert quantile_error(errors, 0.8) == quantile_error(rng.permutation(errors), 0.8)


def test_quantile_monotone_and_scale_equivariant():
    errors = np.random.default_rng(1).exponential(2.0, 57)
    qs = [quantile_error(errors, q) for q in (0.1, 0.5, 0.8, 0.95)]
    assert qs == sorted(qs)
    assert quantile_error(3.0 * errors, 0.8) == pytest.approx(3.0 * quantile_error(errors, 0.8))
    assert mae(3.0 * errors) == pytest.approx(3.0 * mae(errors))


@pytest.mark.parametrize("q", [0.0, 1.0, -0.2])
def test_quantile_error_invalid_q(q):
    with pytest.raises(DomainError):
        quantile_error([1.0], q)


def test_error_sample_rejects_negative():
    with pytest.raises(ValidationError):
        ErrorSample("run", 1, EntityKind.CVT, 0, -0.1)


# --------------------------------------------------------------------------- #
#  CDF
# --------------------------------------------------------------------------- #
def test_cdf_table_cases():
    table = cdf_table([1.0, 2.0, 3.0, 4.0], [0.5, 2.0, 2.5, 10.0])
    assert table == [(0.5, 0.0), (2.0, 0.5), (2.5, 0.5), (10.0, 1.0)]


def test_cdf_table_empty_samples():
    assert cdf_table([], [0.0, 1.0]) == [(0.0, 0.0), (1.0, 0.0)]


def test_cdf_table_monotone():
    errors = np.random.default_rng(2).exponential(3.0, 200)
    values = [p for _, p in cdf_table(errors, np.linspace(0.0, 30.0, 61))]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert 0.0 <= values[0] and values[-1] <= 1.0


def test_cdf_table_requires_increasing_edges():
    with pytest.raises(DomainError):
        cdf_table([1.0], [1.0, 1.0])


# --------------------------------------------------------------------------- #
#  Verbesserung & Aggregation
# --------------------------------------------------------------------------- #
@pytest.mark.parametrize(
    "baseline, cooperative, expected",
    [(10.0, 5.565, 44.35), (3.0, 3.0, 0.0), (2.0, 0.0, 100.0)],
)
def test_improvement(baseline, cooperative, expected):
    assert improvement(baseline, cooperative) == pytest.approx(expected)


def test_improvement_requires_positive_baseline():
    with pytest.raises(DomainError):
        improvement(0.0, 1.0)


def test_mean_vt_count():
    assert mean_vt_count([2, 3, 4, 3]) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        mean_vt_count([])


def test_error_over_time_groups_by_slot():
    samples = _samples([1.0, 3.0], slot=2) + _samples([2.0, 2.0, 8.0], slot=1)
    rows = error_over_time(samples, q=0.5)
    assert rows == [(1, 2.0, pytest.approx(4.0)), (2, 1.0, pytest.approx(2.0))]


def test_summarize_per_kind():
    samples = _samples([1.0, 2.0, 3.0]) + _samples([10.0], kind=EntityKind.CVT)
    stats = summarize(samples, q=0.8, edges=[0.0, 5.0], vt_counts=[2, 4])
    assert stats.mae[EntityKind.VEHICLE] == pytest.approx(2.0)
    assert stats.quantile[EntityKind.VEHICLE] == 3.0
    assert stats.mae[EntityKind.CVT] == 10.0
    assert stats.cdf[EntityKind.CVT] == [(0.0, 0.0), (5.0, 0.0)]
    assert stats.mean_vt_count == 3.0
