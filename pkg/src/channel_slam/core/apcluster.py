"""
channel_slam.core.apcluster
~~~~~~~~~~~~~~~~~~~~~~~~~~~

Affinity Propagation über die VT-Punktwolke eines Slots.

Ähnlichkeit ``s(p, q) = −ln(‖r_p − r_q‖ + 1)``; die Diagonale trägt die
Präferenz (Standard: Median der Nicht-Diagonalwerte). Die Nachrichten
(Responsibility/Availability) rechnet ``sklearn.cluster.AffinityPropagation``
auf der vorberechneten Matrix; darüber liegen nur der Rückfall ohne
Exemplare und eine lokale Nachpolitur mit festen Gleichstandsregeln, damit
die Partition weder von Rundungsrauschen noch von der Punktreihenfolge
abhängt.

Public API
----------
- `build_similarity(points, preference="median")`
- `propagate(sim, max_iter=100, damping=0.9, convergence_iter=10)`
- `clusters_to_cvts(assignment, points, path_keys, n_vehicles, slot, id_source)`
- `net_similarity(sim, exemplars)`
"""

from __future__ import annotations

import itertools
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Final, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import AffinityPropagation
from sklearn.exceptions import ConvergenceWarning

from .models import CvtCluster, DomainError, ValidationError, VtSample

__all__ = [
    "SimilarityMatrix",
    "ClusterAssignment",
    "build_similarity",
    "propagate",
    "net_similarity",
    "clusters_to_cvts",
    "TIE_MARGIN",
]

logger = logging.getLogger(__name__)

Preference = Union[str, float]

TIE_MARGIN: Final[float] = 1e-9  # relative Absenkung der Präferenz
_MIN_GAIN: Final[float] = 1e-12


@dataclass(slots=True, frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    preference: float

    @property
    def size(self) -> int:
        return int(self.values.shape[0])


@dataclass(slots=True, frozen=True)
class ClusterAssignment:
    exemplars: np.ndarray  # Exemplar-Index je Punkt
    iterations: int = 0
    converged: bool = True

    @property
    def exemplar_set(self) -> np.ndarray:
        return np.unique(self.exemplars)

    @property
    def n_clusters(self) -> int:
        return int(self.exemplar_set.size)

    @property
    def clusters(self) -> List[np.ndarray]:
        """Mitgliedsindizes je Cluster, sortiert nach dem kleinsten Mitglied."""
        groups = [np.flatnonzero(self.exemplars == e) for e in self.exemplar_set]
        return sorted(groups, key=lambda members: int(members[0]))


# -------------------------------------------------------------------------- #
# Ähnlichkeit                                                                #
# -------------------------------------------------------------------------- #
def build_similarity(points: np.ndarray, preference: Preference = "median") -> SimilarityMatrix:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if n == 0:
        raise DomainError("Affinity Propagation benötigt mindestens einen Punkt.")
    values = -np.log1p(cdist(pts, pts))
    if preference == "median":
        off = values[~np.eye(n, dtype=bool)]
        pref = float(np.median(off)) if off.size else 0.0
    elif isinstance(preference, str):
        raise ValidationError(f"Unbekannte Präferenz-Regel: {preference!r}")
    else:
        pref = float(preference)
    np.fill_diagonal(values, pref)
    return SimilarityMatrix(values, pref)


def _net(values: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        return float("-inf")
    best = values[:, mask].max(axis=1)
    best[mask] = np.diag(values)[mask]
    return float(best.sum())


def net_similarity(sim: SimilarityMatrix, exemplars: np.ndarray) -> float:
    """Σ_p s(p, E_p) für eine Exemplar-Maske; Exemplare zählen mit ihrer Präferenz."""
    return _net(sim.values, np.asarray(exemplars, dtype=bool))


# -------------------------------------------------------------------------- #
# Exemplarwahl                                                               #
# -------------------------------------------------------------------------- #
def _tie_broken(sim: SimilarityMatrix) -> np.ndarray:
    # Präferenz minimal abgesenkt: bei gleicher Netto-Ähnlichkeit gewinnen weniger Exemplare
    values = sim.values.copy()
    values[np.diag_indices_from(values)] -= TIE_MARGIN * max(1.0, abs(sim.preference))
    return values


def _assign(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    exemplars = np.flatnonzero(mask)
    labels = exemplars[np.argmax(values[:, exemplars], axis=1)]
    labels[exemplars] = exemplars
    return labels


def _medoids(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Ersetzt jedes Exemplar durch das Mitglied mit der größten Ähnlichkeitssumme im Cluster."""
    labels = _assign(values, mask)
    out = np.zeros_like(mask)
    for e in np.flatnonzero(mask):
        members = np.flatnonzero(labels == e)
        scores = values[np.ix_(members, members)].sum(axis=0)
        out[members[int(np.argmax(scores))]] = True  # Gleichstand → kleinster Index
    return out


def _candidates(values: np.ndarray, mask: np.ndarray) -> Iterator[np.ndarray]:
    """Nachbarn einer Exemplarmenge: umschalten, tauschen oder zwei Cluster verschmelzen."""
    for q in range(mask.size):
        flipped = mask.copy()
        flipped[q] = not flipped[q]
        if flipped.any():
            yield flipped
    for e in np.flatnonzero(mask):
        for q in np.flatnonzero(~mask):
            swapped = mask.copy()
            swapped[[e, q]] = [False, True]
            yield swapped
    labels = _assign(values, mask)
    for a, b in itertools.combinations(np.flatnonzero(mask), 2):
        members = np.flatnonzero((labels == a) | (labels == b))
        scores = values[np.ix_(members, members)].sum(axis=0)
        merged = mask.copy()
        merged[[a, b]] = False
        merged[members[int(np.argmax(scores))]] = True
        yield merged


def _refine(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Lokale Suche auf maximale Netto-Ähnlichkeit, danach kanonische Exemplare je Cluster."""
    mask = _medoids(values, mask)
    current = _net(values, mask)
    for _ in range(4 * mask.size):
        best: Optional[np.ndarray] = None
        best_gain = _MIN_GAIN
        for candidate in _candidates(values, mask):
            gain = _net(values, candidate) - current
            if gain > best_gain:
                best, best_gain = candidate, gain
        if best is None:
            break
        mask = _medoids(values, best)
        current = _net(values, mask)
        logger.debug("AP-Nachpolitur: %d Exemplare (+%.3g)", int(mask.sum()), best_gain)
    return mask


def propagate(
    sim: SimilarityMatrix,
    max_iter: int = 100,
    damping: float = 0.9,
    convergence_iter: int = 10,
) -> ClusterAssignment:
    """
    Wählt Exemplare per Affinity Propagation (``sklearn.cluster.AffinityPropagation``).

    Liefert die Propagation keine Exemplare, gilt ``E_p = argmax_q s(p, q)``.
    Das Ergebnis wird lokal auf maximale Netto-Ähnlichkeit nachpoliert;
    Gleichstände entscheiden sich für weniger Exemplare und je Cluster für
    das Mitglied mit dem kleinsten Index. Jeder Punkt gehört zum ähnlichsten
    Exemplar.
    """
    if not 0.5 <= damping < 1.0:
        raise ValidationError("Dämpfung λ muss in [0.5, 1) liegen.")
    n = sim.size
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=int))

    off = sim.values[~np.eye(n, dtype=bool)]
    if np.ptp(off) == 0.0:
        # alle Ähnlichkeiten gleich: ein Cluster, außer die Präferenz ist höher
        if sim.preference > off[0]:
            return ClusterAssignment(np.arange(n))
        return ClusterAssignment(np.zeros(n, dtype=int))

    values = _tie_broken(sim)
    ap = AffinityPropagation(
        damping=damping,
        max_iter=max_iter,
        convergence_iter=convergence_iter,
        copy=True,
        preference=np.diag(values).copy(),
        affinity="precomputed",
        verbose=False,
        random_state=0,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        ap.fit(values)
    centers = np.asarray(ap.cluster_centers_indices_, dtype=int)
    iterations = int(ap.n_iter_)

    mask = np.zeros(n, dtype=bool)
    if centers.size:
        mask[centers] = True
    else:
        logger.warning("AP ohne Exemplare nach %d Iterationen, nutze argmax-Zuordnung", iterations)
        mask[np.argmax(values, axis=1)] = True
    mask = _refine(values, mask)
    logger.debug("AP: %d Punkte → %d Exemplare nach %d Iterationen", n, int(mask.sum()), iterations)
    return ClusterAssignment(_assign(values, mask), iterations, bool(centers.size))


# -------------------------------------------------------------------------- #
# Cluster → CVT                                                              #
# -------------------------------------------------------------------------- #
def clusters_to_cvts(
    assignment: ClusterAssignment,
    points: np.ndarray,
    path_keys: Sequence[Tuple[int, int]],
    n_vehicles: int,
    slot: int = 0,
    id_source: Iterator[int] | None = None,
) -> List[CvtCluster]:
    """
    Baut aus der Zuordnung CVT-Cluster (Position = Mittel, Indexvektor).

    Enthält ein Cluster mehrere Pfade desselben Fahrzeugs, bleibt der Pfad
    mit dem kleinsten Abstand zum Clustermittel; die übrigen werden
    Einzelcluster.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(path_keys) != pts.shape[0] or assignment.exemplars.size != pts.shape[0]:
        raise ValidationError("Zuordnung, Punkte und Pfadindizes passen nicht zusammen.")
    ids = id_source if id_source is not None else itertools.count()

    kept_groups: List[List[int]] = []
    ejected: List[int] = []
    for members in assignment.clusters:
        mean = pts[members].mean(axis=0)
        by_vehicle: Dict[int, List[int]] = defaultdict(list)
        for i in members:
            by_vehicle[path_keys[i][0]].append(int(i))
        keep: List[int] = []
        for vehicle in sorted(by_vehicle):
            candidates = by_vehicle[vehicle]
            nearest = min(candidates, key=lambda i: (float(np.linalg.norm(pts[i] - mean)), i))
            keep.append(nearest)
            ejected.extend(i for i in candidates if i != nearest)
        if len(keep) < len(members):
            logger.debug("AP-Cluster mit Mehrfachpfad eines Fahrzeugs aufgeteilt: %s", members)
        kept_groups.append(sorted(keep))
    groups = kept_groups + [[i] for i in sorted(ejected)]

    clusters: List[CvtCluster] = []
    for group in groups:
        index = np.zeros(n_vehicles, dtype=int)
        samples = []
        for i in group:
            m, p = path_keys[i]
            index[m] = p
            samples.append(VtSample(slot, m, p, tuple(float(v) for v in pts[i])))
        clusters.append(CvtCluster(next(ids), samples, index))
    return clusters
