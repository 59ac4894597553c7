"""
channel_slam.core.cvtmap
~~~~~~~~~~~~~~~~~~~~~~~~

CVT-Bildung und dynamische Clusterpflege.

Ablauf je Slot (``CvtMap.maintain``):

1. VT-Schätzungen aus Fahrzeugschätzung + Beobachtung berechnen.
2. Erster Slot mit Beobachtungen: Affinity Propagation über die gesamte
   VT-Wolke; danach: neue VTs bestehenden Clustern zuordnen oder als
   Einzelcluster anlegen.
3. Benachbarte Cluster zusammenführen (Hadamard-Bedingung).
4. Cluster löschen, die ``t_d`` Slots in Folge nicht beobachtet wurden.

Public API
----------
- `association_quality(cluster_position, vt_position)`
- `compute_thresholds(d_max, n_sigma, sigma_d, sigma_angle)`
- `associate_new_vts(clusters, vts, assoc_threshold, n_vehicles, window, id_source)`
- `merge_clusters(clusters, merge_threshold, window)`
- `delete_stale(clusters, delete_after)`
- `CvtMap` (zustandsbehaftete Karte mit `maintain`)
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .apcluster import build_similarity, clusters_to_cvts, propagate
from .channel import direction_vector
from .models import CvtCluster, MultipathObservation, ValidationError, VtSample

__all__ = [
    "MaintenanceConfig",
    "ApConfig",
    "MergeEvent",
    "MaintenanceReport",
    "Association",
    "association_quality",
    "compute_thresholds",
    "associate_new_vts",
    "merge_clusters",
    "delete_stale",
    "CvtMap",
]

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
#  Konfiguration & Ergebnisse
# --------------------------------------------------------------------------- #
@dataclass(slots=True, frozen=True)
class MaintenanceConfig:
    assoc_threshold: float = -2.36
    merge_threshold: float = -2.36
    delete_after: int = 10
    d_max: float = 100.0
    n_sigma: float = 2.0
    window: int = 20

    def __post_init__(self) -> None:
        if self.assoc_threshold > 0.0 or self.merge_threshold > 0.0:
            raise ValidationError("L_A und L_M müssen ≤ 0 sein.")
        if self.delete_after < 1:
            raise ValidationError("t_d muss mindestens 1 Slot sein.")
        if self.window < 1:
            raise ValidationError("Fenster W muss mindestens 1 Slot sein.")
        if self.d_max <= 0.0 or self.n_sigma <= 0.0:
            raise ValidationError("d_max und n müssen positiv sein.")


@dataclass(slots=True, frozen=True)
class ApConfig:
    max_iter: int = 100
    damping: float = 0.9
    convergence_iter: int = 10
    preference: str | float = "median"

    def __post_init__(self) -> None:
        if self.max_iter < 1 or self.convergence_iter < 1:
            raise ValidationError("AP-Iterationszahlen müssen ≥ 1 sein.")
        if not 0.5 <= self.damping < 1.0:
            raise ValidationError("Dämpfung λ muss in [0.5, 1) liegen.")


@dataclass(slots=True, frozen=True)
class MergeEvent:
    kept: int
    absorbed: int
    kept_weight: int
    absorbed_weight: int


@dataclass(slots=True)
class MaintenanceReport:
    spawned: List[int] = field(default_factory=list)
    spawn_members: Dict[int, List[Tuple[int, int]]] = field(default_factory=dict)
    merged: List[MergeEvent] = field(default_factory=list)
    deleted: List[int] = field(default_factory=list)


@dataclass(slots=True, frozen=True)
class Association:
    """Pfad *observation* des Fahrzeugs ist in diesem Slot Cluster *cluster_id* zugeordnet."""

    cluster_id: int
    observation: MultipathObservation

    @property
    def vehicle_id(self) -> int:
        return self.observation.vehicle_id


# --------------------------------------------------------------------------- #
#  Qualitätsmaße
# --------------------------------------------------------------------------- #
def association_quality(cluster_position: Sequence[float], vt_position: Sequence[float]) -> float:
    delta = np.linalg.norm(np.asarray(cluster_position, float) - np.asarray(vt_position, float))
    return float(-np.log1p(delta))


def compute_thresholds(
    d_max: float, n_sigma: float, sigma_d: float, sigma_angle: float
) -> Tuple[float, float]:
    """
    Schwellen aus dem ungünstigsten VT-Fehler bei Reichweite *d_max*.

    ``ε² = (d + nσ_d)² + d² − 2d(d + nσ_d)·cos(nσ_θ)``, ``L = −ln(ε + 1)``.
    """
    if d_max <= 0.0:
        raise ValidationError("d_max muss positiv sein.")
    far = d_max + n_sigma * sigma_d
    eps_sq = far * far + d_max * d_max - 2.0 * d_max * far * math.cos(n_sigma * sigma_angle)
    level = -math.log1p(math.sqrt(max(eps_sq, 0.0)))
    return level, level


# --------------------------------------------------------------------------- #
#  Pflege-Schritte
# --------------------------------------------------------------------------- #
def _standalone(cluster_id: int, sample: VtSample, n_vehicles: int) -> CvtCluster:
    index = np.zeros(n_vehicles, dtype=int)
    index[sample.vehicle_id] = sample.path_index
    return CvtCluster(cluster_id, [sample], index)


def associate_new_vts(
    clusters: List[CvtCluster],
    vts: Sequence[VtSample],
    assoc_threshold: float,
    n_vehicles: int,
    window: int,
    id_source: Iterator[int],
) -> Tuple[List[CvtCluster], List[int]]:
    """
    Ordnet neue VTs dem Cluster mit maximaler Qualität Q_A zu.

    Indexvektoren werden zu Slotbeginn auf 0 gesetzt. VTs werden nach
    absteigendem besten Q_A verarbeitet; bei Gleichstand gewinnt die
    kleinste Cluster-ID. Ein VT tritt nur bei ``Q_A ≥ L_A`` und freiem
    Fahrzeugeintrag bei; sonst entsteht ein Einzelcluster.

    Returns
    -------
    (clusters, spawned_ids)
    """
    clusters = sorted(clusters, key=lambda c: c.cluster_id)
    for c in clusters:
        c.index_vector[:] = 0
    spawned: List[int] = []
    if not vts:
        return clusters, spawned

    points = np.array([v.position for v in vts], dtype=float)
    if clusters:
        centers = np.array([c.position for c in clusters])
        quality = -np.log1p(cdist(points, centers))
        best_u = np.argmax(quality, axis=1)
        best_q = quality[np.arange(len(vts)), best_u]
    else:
        best_u = np.zeros(len(vts), dtype=int)
        best_q = np.full(len(vts), -np.inf)

    standalone: List[VtSample] = []
    for i in sorted(range(len(vts)), key=lambda i: (-best_q[i], i)):
        vt = vts[i]
        if best_q[i] >= assoc_threshold:
            target = clusters[int(best_u[i])]
            if target.index_vector[vt.vehicle_id] == 0:
                target.index_vector[vt.vehicle_id] = vt.path_index
                target.add_sample(vt, window)
                continue
        standalone.append(vt)

    for vt in standalone:
        cluster = _standalone(next(id_source), vt, n_vehicles)
        clusters.append(cluster)
        spawned.append(cluster.cluster_id)
    if spawned:
        logger.debug("Slot %s: %d Einzelcluster angelegt", vts[0].slot, len(spawned))
    return clusters, spawned


def _absorb(kept: CvtCluster, other: CvtCluster, window: int) -> None:
    kept.samples = sorted(kept.samples + other.samples, key=lambda s: (s.slot, s.vehicle_id))
    kept.prune(window)
    kept.index_vector = kept.index_vector + other.index_vector
    kept.stale_slots = min(kept.stale_slots, other.stale_slots)


def merge_clusters(
    clusters: List[CvtCluster], merge_threshold: float, window: int
) -> Tuple[List[CvtCluster], List[MergeEvent]]:
    """
    Führt Nachbarcluster zusammen.

    Je Runde werden alle Paare mit ``Q_M ≥ L_M`` und disjunktem Indexvektor
    nach absteigendem Q_M abgearbeitet, jeder Cluster höchstens einmal.
    Runden wiederholen sich, bis kein Paar beide Bedingungen erfüllt. Der
    Cluster mit der kleineren ID bleibt bestehen.
    """
    clusters = sorted(clusters, key=lambda c: c.cluster_id)
    events: List[MergeEvent] = []
    while len(clusters) > 1:
        centers = np.array([c.position for c in clusters])
        quality = -np.log1p(cdist(centers, centers))
        index = np.array([c.index_vector for c in clusters])
        overlap = (index[:, None, :] * index[None, :, :]).any(axis=2)
        i_idx, j_idx = np.triu_indices(len(clusters), k=1)
        ok = (quality[i_idx, j_idx] >= merge_threshold) & ~overlap[i_idx, j_idx]
        if not ok.any():
            break
        pairs = sorted(
            zip(i_idx[ok].tolist(), j_idx[ok].tolist()),
            key=lambda ij: (-quality[ij[0], ij[1]], ij[0], ij[1]),
        )
        used: set[int] = set()
        absorbed: set[int] = set()
        for i, j in pairs:
            if i in used or j in used:
                continue
            kept, other = clusters[i], clusters[j]
            events.append(MergeEvent(kept.cluster_id, other.cluster_id, kept.member_count, other.member_count))
            _absorb(kept, other, window)
            used.update((i, j))
            absorbed.add(j)
            logger.debug("Cluster %s übernimmt Cluster %s", kept.cluster_id, other.cluster_id)
        clusters = [c for k, c in enumerate(clusters) if k not in absorbed]
    return clusters, events


def delete_stale(
    clusters: List[CvtCluster], delete_after: int
) -> Tuple[List[CvtCluster], List[int]]:
    """Zählt unbeobachtete Slots hoch und entfernt Cluster nach *delete_after* Slots."""
    survivors: List[CvtCluster] = []
    deleted: List[int] = []
    for c in clusters:
        c.stale_slots = c.stale_slots + 1 if not c.index_vector.any() else 0
        if c.stale_slots >= delete_after:
            deleted.append(c.cluster_id)
        else:
            survivors.append(c)
    if deleted:
        logger.debug("Veraltete Cluster gelöscht: %s", deleted)
    return survivors, deleted


# --------------------------------------------------------------------------- #
#  Zustandsbehaftete Karte
# --------------------------------------------------------------------------- #
class CvtMap:
    """Besitzt alle CVT-Cluster eines Laufs; Aufrufe müssen serialisiert erfolgen."""

    def __init__(
        self,
        n_vehicles: int,
        config: MaintenanceConfig | None = None,
        ap: ApConfig | None = None,
        ue_height: float = 1.5,
    ) -> None:
        if n_vehicles < 1:
            raise ValidationError("Mindestens ein Fahrzeug erforderlich.")
        self.n_vehicles = n_vehicles
        self.config = config or MaintenanceConfig()
        self.ap = ap or ApConfig()
        self.ue_height = ue_height
        self.clusters: List[CvtCluster] = []
        self.initialized = False
        self._ids = itertools.count()

    def __len__(self) -> int:
        return len(self.clusters)

    def cluster(self, cluster_id: int) -> CvtCluster:
        for c in self.clusters:
            if c.cluster_id == cluster_id:
                return c
        raise KeyError(cluster_id)

    def vt_samples(
        self,
        vehicle_estimates: Mapping[int, Sequence[float]],
        observations: Mapping[int, Sequence[MultipathObservation]],
        slot: int,
    ) -> List[VtSample]:
        samples: List[VtSample] = []
        for vehicle_id in sorted(observations):
            base = np.array([*np.asarray(vehicle_estimates[vehicle_id], float)[:2], self.ue_height])
            for z in observations[vehicle_id]:
                vt = base + direction_vector(z.theta, z.phi, z.distance)
                samples.append(VtSample(slot, vehicle_id, z.path_index, tuple(float(v) for v in vt)))
        return samples

    def maintain(
        self,
        vehicle_estimates: Mapping[int, Sequence[float]],
        observations: Mapping[int, Sequence[MultipathObservation]],
        slot: int,
    ) -> MaintenanceReport:
        report = MaintenanceReport()
        vts = self.vt_samples(vehicle_estimates, observations, slot)
        cfg = self.config

        if not self.initialized and not self.clusters:
            if vts:
                self._initialize(vts, slot, report)
            else:
                logger.debug("Slot %s: keine Beobachtungen, Karte bleibt leer", slot)
        else:
            self.clusters, report.spawned = associate_new_vts(
                self.clusters, vts, cfg.assoc_threshold, self.n_vehicles, cfg.window, self._ids
            )
        report.spawn_members = {cid: self.cluster(cid).observed_by() for cid in report.spawned}

        self.clusters, report.merged = merge_clusters(self.clusters, cfg.merge_threshold, cfg.window)
        self.clusters, report.deleted = delete_stale(self.clusters, cfg.delete_after)
        return report

    def _initialize(self, vts: List[VtSample], slot: int, report: MaintenanceReport) -> None:
        points = np.array([v.position for v in vts])
        sim = build_similarity(points, self.ap.preference)
        assignment = propagate(sim, self.ap.max_iter, self.ap.damping, self.ap.convergence_iter)
        keys = [(v.vehicle_id, v.path_index) for v in vts]
        self.clusters = clusters_to_cvts(assignment, points, keys, self.n_vehicles, slot, self._ids)
        report.spawned = [c.cluster_id for c in self.clusters]
        self.initialized = True
        logger.info("Karte initialisiert: %d VTs → %d CVT-Cluster", len(vts), len(self.clusters))

    def associations(
        self, observations: Mapping[int, Sequence[MultipathObservation]]
    ) -> List[Association]:
        """Zuordnung Pfad → Cluster für den aktuellen Slot (aus den Indexvektoren)."""
        lookup: Dict[Tuple[int, int], MultipathObservation] = {
            z.key: z for obs in observations.values() for z in obs
        }
        out: List[Association] = []
        for c in sorted(self.clusters, key=lambda c: c.cluster_id):
            for m, p in c.observed_by():
                out.append(Association(c.cluster_id, lookup[(m, p)]))
        return out
