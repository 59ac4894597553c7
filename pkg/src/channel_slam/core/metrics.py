"""
channel_slam.core.metrics
~~~~~~~~~~~~~~~~~~~~~~~~~

Fehlermaße und Aggregation: MAE, Quantilfehler, empirische CDF,
mittlere VT-Anzahl und relative Verbesserung.

Alle Funktionen sind rein und thread-sicher.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .models import DomainError, ValidationError

__all__ = [
    "EntityKind",
    "ErrorSample",
    "SummaryStats",
    "mae",
    "quantile_error",
    "cdf_table",
    "improvement",
    "mean_vt_count",
    "error_over_time",
    "summarize",
]


class EntityKind(enum.Enum):
    VEHICLE = "vehicle"
    CVT = "cvt"


@dataclass(slots=True, frozen=True)
class ErrorSample:
    run_id: str
    slot: int
    kind: EntityKind
    entity_id: int
    error: float

    def __post_init__(self) -> None:
        if not self.error >= 0.0:
            raise ValidationError("Fehler muss ≥ 0 sein.")


@dataclass(slots=True)
class SummaryStats:
    mae: Dict[EntityKind, float] = field(default_factory=dict)
    quantile: Dict[EntityKind, float] = field(default_factory=dict)
    cdf: Dict[EntityKind, List[Tuple[float, float]]] = field(default_factory=dict)
    mean_vt_count: float = float("nan")
    q: float = 0.8


Samples = Union[Sequence[float], Sequence[ErrorSample], np.ndarray]


def _errors(samples: Samples) -> np.ndarray:
    values = [s.error if isinstance(s, ErrorSample) else s for s in samples]
    return np.asarray(values, dtype=float)


def mae(samples: Samples) -> float:
    errors = _errors(samples)
    if errors.size == 0:
        raise DomainError("MAE einer leeren Stichprobe ist undefiniert.")
    return float(errors.mean())


def quantile_error(samples: Samples, q: float) -> float:
    """Kleinstes ε mit empirischer CDF(ε) ≥ q (unteres empirisches Quantil)."""
    if not 0.0 < q < 1.0:
        raise DomainError("q muss in (0, 1) liegen.")
    errors = _errors(samples)
    if errors.size == 0:
        raise DomainError("Quantil einer leeren Stichprobe ist undefiniert.")
    return float(np.quantile(errors, q, method="inverted_cdf"))


def cdf_table(samples: Samples, edges: Sequence[float]) -> List[Tuple[float, float]]:
    edges_arr = np.asarray(edges, dtype=float)
    if edges_arr.size > 1 and not np.all(np.diff(edges_arr) > 0.0):
        raise DomainError("Stützstellen müssen streng steigend sein.")
    errors = np.sort(_errors(samples))
    if errors.size == 0:
        return [(float(e), 0.0) for e in edges_arr]
    counts = np.searchsorted(errors, edges_arr, side="right")
    return [(float(e), float(c) / errors.size) for e, c in zip(edges_arr, counts)]


def improvement(baseline_mae: float, cooperative_mae: float) -> float:
    """Relative Verbesserung in Prozent gegenüber *baseline_mae*."""
    if not baseline_mae > 0.0:
        raise DomainError("Referenz-MAE muss positiv sein.")
    return 100.0 * (baseline_mae - cooperative_mae) / baseline_mae


def mean_vt_count(counts: Iterable[int]) -> float:
    values = np.fromiter(counts, dtype=float)
    if values.size == 0:
        raise DomainError("Keine VT-Zählungen vorhanden.")
    return float(values.mean())


def error_over_time(samples: Sequence[ErrorSample], q: float = 0.8) -> List[Tuple[int, float, float]]:
    """(slot, q-Quantil, MAE) der Fehler je Slot, aufsteigend nach Slot."""
    by_slot: Dict[int, List[float]] = {}
    for s in samples:
        by_slot.setdefault(s.slot, []).append(s.error)
    return [(slot, quantile_error(v, q), mae(v)) for slot, v in sorted(by_slot.items())]


def summarize(
    samples: Sequence[ErrorSample],
    q: float = 0.8,
    edges: Sequence[float] = (),
    vt_counts: Iterable[int] = (),
) -> SummaryStats:
    stats = SummaryStats(q=q)
    for kind in EntityKind:
        subset = [s for s in samples if s.kind is kind]
        if not subset:
            continue
        stats.mae[kind] = mae(subset)
        stats.quantile[kind] = quantile_error(subset, q)
        stats.cdf[kind] = cdf_table(subset, edges)
    counts = list(vt_counts)
    if counts:
        stats.mean_vt_count = mean_vt_count(counts)
    return stats
