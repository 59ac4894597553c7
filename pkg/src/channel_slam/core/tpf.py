"""
channel_slam.core.tpf
~~~~~~~~~~~~~~~~~~~~~

Team-Partikelfilter: gemeinsame Schätzung der 2D-Fahrzeugpositionen und
3D-CVT-Positionen über zwei Familien von Partikelfiltern, die sich
gegenseitig als Karten- bzw. Posenprior dienen.

Gewichtsupdates rechnen den Integralterm über alle Partnerpartikel im
Log-Raum (``logsumexp``) und multiplizieren über die Pfade. Ein Batch-Update
normiert nur innerhalb des Batches, dessen Gesamtgewicht also erhalten
bleibt; unterläuft die Likelihood für den ganzen Batch, wird er innerhalb
seiner Masse gleichverteilt und ein Degenerationsereignis gemeldet.

Public API
----------
- Filter: `VehicleFilter`, `CvtFilter`, `TpfConfig`, `SlotResult`
- Prädiktion: `init_vehicle_filter`, `predict_vehicle`, `predict_cvt`,
  `init_cvt_filter`, `merge_cvt_filters`
- Update: `update_cvt_batch`, `update_vehicle_batch`, `resample`,
  `systematic_resample`, `effective_sample_size`, `estimate`,
  `partition_batches`
- Koordination: `run_slot`, `TeamParticleFilter`
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .channel import (
    MIN_DISTANCE,
    direction_vector,
    kernel_width,
    truncated_normal,
    vehicle_from_cvt_particles,
    vt_from_particles,
)
from .cvtmap import Association, MaintenanceReport
from .models import MotionReport, MultipathObservation, NoiseModel, ValidationError
from .rng import Stream, StreamFactory

__all__ = [
    "TpfConfig",
    "VehicleFilter",
    "CvtFilter",
    "SlotResult",
    "init_vehicle_filter",
    "predict_vehicle",
    "predict_cvt",
    "init_cvt_filter",
    "merge_cvt_filters",
    "update_cvt_batch",
    "update_vehicle_batch",
    "effective_sample_size",
    "systematic_resample",
    "resample",
    "estimate",
    "partition_batches",
    "run_slot",
    "TeamParticleFilter",
]

logger = logging.getLogger(__name__)

_VEHICLE_KIND: int = 0
_CVT_KIND: int = 1


# ======================================================================================================================
# Datentypen
# ======================================================================================================================
@dataclass(slots=True, frozen=True)
class TpfConfig:
    n_vehicle: int = 120
    n_cvt: int = 120
    n_batches: int = 10
    xi: float = 0.01
    sigma_w: Optional[float] = None  # None = je Beobachtung aus dem Rauschmodell
    sigma_floor: float = 0.05
    resample_ratio: float = 0.5
    ue_height: float = 1.5

    def __post_init__(self) -> None:
        if self.n_vehicle < 1 or self.n_cvt < 1:
            raise ValidationError("Partikelzahlen müssen ≥ 1 sein.")
        if not 1 <= self.n_batches <= min(self.n_vehicle, self.n_cvt):
            raise ValidationError("N_b muss zwischen 1 und der Partikelzahl liegen.")
        if self.xi <= 0.0:
            raise ValidationError("ξ muss positiv sein.")
        if self.sigma_w is not None and self.sigma_w <= 0.0:
            raise ValidationError("σ_w muss positiv sein.")
        if self.sigma_floor <= 0.0:
            raise ValidationError("σ_w-Untergrenze muss positiv sein.")
        if not 0.0 <= self.resample_ratio <= 1.0:
            raise ValidationError("Resampling-Schwelle muss in [0, 1] liegen.")

    def kernel_width(self, z: MultipathObservation, noise: NoiseModel) -> float:
        if self.sigma_w is not None:
            return self.sigma_w
        return kernel_width(z, noise, self.sigma_floor)


@dataclass(slots=True)
class _ParticleSet:
    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != self._dim():
            raise ValidationError(f"Partikel müssen die Form (N, {self._dim()}) haben.")
        if self.weights.shape != (self.positions.shape[0],):
            raise ValidationError("Gewichtsvektor passt nicht zur Partikelzahl.")
        if np.any(self.weights < 0.0) or not math.isclose(float(self.weights.sum()), 1.0, abs_tol=1e-9):
            raise ValidationError("Gewichte müssen ≥ 0 sein und sich zu 1 summieren.")

    def _dim(self) -> int:
        raise NotImplementedError

    @property
    def size(self) -> int:
        return int(self.positions.shape[0])


@dataclass(slots=True)
class VehicleFilter(_ParticleSet):
    vehicle_id: int = 0

    def _dim(self) -> int:
        return 2


@dataclass(slots=True)
class CvtFilter(_ParticleSet):
    cluster_id: int = 0

    def _dim(self) -> int:
        return 3


ParticleFilter = Union[VehicleFilter, CvtFilter]


@dataclass(slots=True)
class SlotResult:
    vehicle_estimates: Dict[int, np.ndarray]
    cvt_estimates: Dict[int, np.ndarray]
    iterations: int
    degeneracy_events: int = 0


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


# ======================================================================================================================
# Prädiktion & Initialisierung
# ======================================================================================================================
def init_vehicle_filter(
    vehicle_id: int,
    gps_fix: Sequence[float],
    n: int,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> VehicleFilter:
    """Partikel um den GPS-Fix, beschnittenes Rauschen mit σ_gps."""
    fix = np.asarray(gps_fix, dtype=float)[:2]
    offsets = truncated_normal(rng, noise.sigma_gps, noise.truncation, (n, 2))
    return VehicleFilter(fix + offsets, _uniform(n), vehicle_id)


def predict_vehicle(
    flt: VehicleFilter,
    previous: MotionReport,
    current: MotionReport,
    dt: float,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> VehicleFilter:
    """
    Trapezregel ``r ← r + (v_prev + v_now)·dt/2`` plus Bewegungsrauschen je Partikel.

    Das Rauschen hat Betrag n_v·dt in Richtung ``h + n_ω`` (h = mittlere
    Fahrtrichtung), beide Komponenten beschnitten.
    """
    v_mean = 0.5 * (previous.as_array() + current.as_array())
    n = flt.size
    n_v = truncated_normal(rng, noise.sigma_v, noise.truncation, n)
    n_omega = truncated_normal(rng, noise.sigma_omega, noise.truncation, n)
    heading = math.atan2(v_mean[1], v_mean[0]) if np.any(v_mean != 0.0) else 0.0
    angle = heading + n_omega
    jitter = (n_v * dt)[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    flt.positions = flt.positions + v_mean * dt + jitter
    return flt


def predict_cvt(flt: CvtFilter) -> CvtFilter:
    """CVTs sind statisch: Partikel und Gewichte bleiben unverändert."""
    return flt


def init_cvt_filter(
    sources: Sequence[Tuple[VehicleFilter, MultipathObservation]],
    n: int,
    noise: NoiseModel,
    rng: np.random.Generator,
    cluster_id: int = 0,
    ue_height: float = 1.5,
) -> CvtFilter:
    """
    Geburt eines CVT-Filters aus Fahrzeugpartikeln und Beobachtung(en).

    Fahrzeugpartikel werden gewichtsproportional gezogen, Winkel und Distanz
    frisch (unbeschnitten) gestört und per Rückprojektion r + R(z) in VT-Punkte umgerechnet.
    Mehrere Quellen teilen sich die *n* Ziehungen reihum.
    """
    if not sources:
        raise ValidationError("CVT-Filter benötigt mindestens eine Quelle.")
    chunks = np.array_split(np.arange(n), len(sources))
    parts: List[np.ndarray] = []
    for (vehicle, z), chunk in zip(sources, chunks):
        k = chunk.size
        if k == 0:
            continue
        idx = rng.choice(vehicle.size, size=k, p=vehicle.weights)
        theta = z.theta + noise.sigma_angle * rng.standard_normal(k)
        phi = z.phi + noise.sigma_angle * rng.standard_normal(k)
        dist = np.maximum(z.distance + noise.sigma_d * rng.standard_normal(k), MIN_DISTANCE)
        lifted = np.column_stack([vehicle.positions[idx], np.full(k, ue_height)])
        parts.append(lifted + direction_vector(theta, phi, dist))
    return CvtFilter(np.vstack(parts), _uniform(n), cluster_id)


def merge_cvt_filters(
    kept: CvtFilter,
    absorbed: CvtFilter,
    kept_weight: float,
    absorbed_weight: float,
    rng: np.random.Generator,
) -> CvtFilter:
    """Poolt beide Partikelwolken (gewichtet nach Mitgliederzahl) und zieht auf N_C zurück."""
    total = float(kept_weight + absorbed_weight)
    alpha = kept_weight / total if total > 0.0 else 0.5
    positions = np.vstack([kept.positions, absorbed.positions])
    weights = np.concatenate([alpha * kept.weights, (1.0 - alpha) * absorbed.weights])
    weights = weights / weights.sum()
    idx = systematic_resample(weights, rng, kept.size)
    return CvtFilter(positions[idx], _uniform(kept.size), kept.cluster_id)


# ======================================================================================================================
# Gewichtsupdates
# ======================================================================================================================
def _log_kernel_sum(
    particles: np.ndarray, companions: np.ndarray, companion_weights: np.ndarray, sigma_w: float
) -> np.ndarray:
    """log Σ_j w_j · G(‖x_a − y_j‖; σ_w) für alle Batch-Partikel a."""
    diff = particles[:, None, :] - companions[None, :, :]
    sq = np.einsum("abk,abk->ab", diff, diff)
    with np.errstate(divide="ignore"):
        log_w = np.log(companion_weights)
    return logsumexp(log_w[None, :] - sq / (2.0 * sigma_w * sigma_w), axis=1)


def _apply_factor(flt: ParticleFilter, batch: np.ndarray, log_factor: np.ndarray) -> bool:
    """
    Gewichtet den Batch mit exp(log_factor) und normiert *innerhalb* des Batches.

    Die Masse des Batches bleibt erhalten, Partikel außerhalb des Batches
    behalten ihr Gewicht. Unterläuft die Likelihood für jedes Batch-Partikel,
    wird der Batch innerhalb seiner Masse gleichverteilt (True).
    """
    weights = flt.weights.copy()
    mass = float(weights[batch].sum())
    if mass <= 0.0:
        return False
    degenerate = not np.any(np.exp(log_factor) > 0.0)
    if degenerate:
        weights[batch] = mass / batch.size
    else:
        with np.errstate(divide="ignore"):
            log_w = np.log(weights[batch]) + log_factor
        weights[batch] = mass * np.exp(log_w - logsumexp(log_w))
    flt.weights = weights / weights.sum()
    return degenerate


def _as_widths(sigma_w: Union[float, Sequence[float]], count: int) -> List[float]:
    if isinstance(sigma_w, (int, float)):
        return [float(sigma_w)] * count
    widths = [float(s) for s in sigma_w]
    if len(widths) != count:
        raise ValidationError("Je Beobachtung wird genau eine Kernbreite erwartet.")
    return widths


def update_cvt_batch(
    flt: CvtFilter,
    batch: np.ndarray,
    observations: Sequence[Tuple[VehicleFilter, MultipathObservation]],
    sigma_w: Union[float, Sequence[float]],
    ue_height: float = 1.5,
) -> bool:
    """
    Gewichtet Batch-Partikel mit ∏_p Σ_j w_V^(j)·G(‖r_C^(a) − r̂_C^(p,j)‖).

    Returns
    -------
    bool
        True, wenn alle Batch-Gewichte unterliefen (Batch innerhalb seiner Masse gleichverteilt).
    """
    if not observations:
        return False
    batch = np.asarray(batch, dtype=int)
    log_factor = np.zeros(batch.size)
    for (vehicle, z), width in zip(observations, _as_widths(sigma_w, len(observations))):
        predicted = vt_from_particles(vehicle.positions, ue_height, z)
        log_factor += _log_kernel_sum(flt.positions[batch], predicted, vehicle.weights, width)
    degenerate = _apply_factor(flt, batch, log_factor)
    if degenerate:
        logger.warning("CVT-Filter %s degeneriert, Gewichte zurückgesetzt", flt.cluster_id)
    return degenerate


def update_vehicle_batch(
    flt: VehicleFilter,
    batch: np.ndarray,
    observations: Sequence[Tuple[CvtFilter, MultipathObservation]],
    sigma_w: Union[float, Sequence[float]],
) -> bool:
    """
    Gewichtet Batch-Partikel mit ∏_p Σ_a w_C^(a)·G(‖r_V^(j) − proj₂(r_C^(a) − R(z))‖).

    Ohne zugeordnete Pfade bleiben die Gewichte unverändert (Koppelnavigation).
    """
    if not observations:
        return False
    batch = np.asarray(batch, dtype=int)
    log_factor = np.zeros(batch.size)
    for (cvt, z), width in zip(observations, _as_widths(sigma_w, len(observations))):
        predicted = vehicle_from_cvt_particles(cvt.positions, z)
        log_factor += _log_kernel_sum(flt.positions[batch], predicted, cvt.weights, width)
    degenerate = _apply_factor(flt, batch, log_factor)
    if degenerate:
        logger.warning("Fahrzeugfilter %s degeneriert, Gewichte zurückgesetzt", flt.vehicle_id)
    return degenerate


# ======================================================================================================================
# Resampling & Schätzung
# ======================================================================================================================
def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(np.square(weights)))


def systematic_resample(
    weights: np.ndarray, rng: np.random.Generator, n: Optional[int] = None
) -> np.ndarray:
    """Low-Variance-Sampler: ein Zufallsversatz, n äquidistante Zeiger."""
    n = weights.size if n is None else n
    pointers = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, pointers, side="right")


def resample(flt: ParticleFilter, rng: np.random.Generator, ratio: float = 0.5) -> bool:
    """Systematisches Resampling, wenn N_eff < ratio·N. Gibt True zurück, wenn gezogen wurde."""
    if effective_sample_size(flt.weights) >= ratio * flt.size:
        return False
    idx = systematic_resample(flt.weights, rng)
    flt.positions = flt.positions[idx]
    flt.weights = _uniform(flt.size)
    return True


def estimate(flt: ParticleFilter) -> np.ndarray:
    """Gewichteter Mittelwert der Partikelpositionen."""
    return flt.weights @ flt.positions


def partition_batches(n: int, n_batches: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Zufällige, disjunkte, überdeckende Aufteilung von range(n) in n_batches Batches."""
    if not 1 <= n_batches <= n:
        raise ValidationError("Batchzahl muss zwischen 1 und N liegen.")
    return np.array_split(rng.permutation(n), n_batches)


# ======================================================================================================================
# Slot-Ablauf
# ======================================================================================================================
def run_slot(
    vehicle_filters: Mapping[int, VehicleFilter],
    cvt_filters: Mapping[int, CvtFilter],
    associations: Sequence[Association],
    config: TpfConfig,
    noise: NoiseModel,
    streams: StreamFactory,
    slot: int,
) -> SlotResult:
    """
    Batchweise verschränkte Updates beider Filterfamilien.

    Iteration b: Batch b aller CVT-Filter gegen die (unveränderten)
    Fahrzeugfilter, Resampling; danach Batch b aller Fahrzeugfilter gegen die
    eben aktualisierten CVT-Filter, Resampling; dann Schätzung. Abbruch, sobald
    sich jede Fahrzeugschätzung gegenüber der vorigen Iteration um weniger als
    ξ bewegt. Die erste Schätzung entsteht erst nach Batch 1, verglichen wird
    also frühestens nach Batch 2; ohne zugeordnete Pfade endet der Slot nach
    einer Iteration.
    """
    by_cvt: Dict[int, List[MultipathObservation]] = {}
    by_vehicle: Dict[int, List[Tuple[int, MultipathObservation]]] = {}
    for assoc in associations:
        if assoc.cluster_id not in cvt_filters or assoc.vehicle_id not in vehicle_filters:
            continue
        by_cvt.setdefault(assoc.cluster_id, []).append(assoc.observation)
        by_vehicle.setdefault(assoc.vehicle_id, []).append((assoc.cluster_id, assoc.observation))

    def _partition(kind: int, key: int, n: int) -> List[np.ndarray]:
        return partition_batches(n, config.n_batches, streams.stream(Stream.PARTITION, slot, kind, key))

    cvt_batches = {cid: _partition(_CVT_KIND, cid, cvt_filters[cid].size) for cid in sorted(by_cvt)}
    vehicle_batches = {
        vid: _partition(_VEHICLE_KIND, vid, vehicle_filters[vid].size) for vid in sorted(by_vehicle)
    }
    resample_rngs = {
        (kind, key): streams.stream(Stream.RESAMPLE, slot, kind, key)
        for kind, keys in ((_CVT_KIND, by_cvt), (_VEHICLE_KIND, by_vehicle))
        for key in sorted(keys)
    }

    previous = {vid: estimate(f) for vid, f in vehicle_filters.items()}
    degeneracies = 0
    iterations = 0
    for b in range(config.n_batches):
        iterations = b + 1
        # Teilprozess 1: CVT-Kartierung
        for cid in sorted(by_cvt):
            obs = by_cvt[cid]
            pairs = [(vehicle_filters[z.vehicle_id], z) for z in obs]
            widths = [config.kernel_width(z, noise) for z in obs]
            degeneracies += update_cvt_batch(
                cvt_filters[cid], cvt_batches[cid][b], pairs, widths, config.ue_height
            )
            resample(cvt_filters[cid], resample_rngs[(_CVT_KIND, cid)], config.resample_ratio)

        # Teilprozess 2: Fahrzeuglokalisierung
        for vid in sorted(by_vehicle):
            items = by_vehicle[vid]
            pairs_v = [(cvt_filters[cid], z) for cid, z in items]
            widths = [config.kernel_width(z, noise) for _, z in items]
            degeneracies += update_vehicle_batch(vehicle_filters[vid], vehicle_batches[vid][b], pairs_v, widths)
            resample(vehicle_filters[vid], resample_rngs[(_VEHICLE_KIND, vid)], config.resample_ratio)

        # Teilprozess 3: Zustandsschätzung
        current = {vid: estimate(f) for vid, f in vehicle_filters.items()}
        moved = max((float(np.linalg.norm(current[v] - previous[v])) for v in current), default=0.0)
        previous = current
        if (b > 0 or not (by_cvt or by_vehicle)) and moved < config.xi:
            break

    return SlotResult(
        vehicle_estimates=previous,
        cvt_estimates={cid: estimate(f) for cid, f in cvt_filters.items()},
        iterations=iterations,
        degeneracy_events=int(degeneracies),
    )


# ======================================================================================================================
# Koordinator
# ======================================================================================================================
@dataclass
class TeamParticleFilter:
    """Besitzt alle Filter eines Laufs und führt sie über die Slots."""

    config: TpfConfig
    noise: NoiseModel
    streams: StreamFactory
    vehicle_filters: Dict[int, VehicleFilter] = field(default_factory=dict)
    cvt_filters: Dict[int, CvtFilter] = field(default_factory=dict)
    degeneracy_events: int = 0

    def initialize_vehicles(self, gps_fixes: Mapping[int, Sequence[float]]) -> None:
        for vid in sorted(gps_fixes):
            rng = self.streams.stream(Stream.GPS, 1, vid)
            self.vehicle_filters[vid] = init_vehicle_filter(
                vid, gps_fixes[vid], self.config.n_vehicle, self.noise, rng
            )

    def predict(
        self,
        slot: int,
        previous: Mapping[int, MotionReport],
        current: Mapping[int, MotionReport],
        dt: float,
    ) -> None:
        for vid, flt in sorted(self.vehicle_filters.items()):
            rng = self.streams.stream(Stream.VEHICLE_PREDICTION, slot, vid)
            predict_vehicle(flt, previous[vid], current[vid], dt, self.noise, rng)
        for flt in self.cvt_filters.values():
            predict_cvt(flt)

    def vehicle_estimates(self) -> Dict[int, np.ndarray]:
        return {vid: estimate(f) for vid, f in sorted(self.vehicle_filters.items())}

    def cvt_estimates(self) -> Dict[int, np.ndarray]:
        return {cid: estimate(f) for cid, f in sorted(self.cvt_filters.items())}

    def apply_maintenance(
        self,
        report: MaintenanceReport,
        observations: Mapping[int, Sequence[MultipathObservation]],
        slot: int,
    ) -> None:
        """Hält die CVT-Filter synchron zur Karte: anlegen, zusammenführen, löschen."""
        lookup = {z.key: z for obs in observations.values() for z in obs}
        for cid in report.spawned:
            members = report.spawn_members.get(cid, [])
            sources = [(self.vehicle_filters[m], lookup[(m, p)]) for m, p in members if (m, p) in lookup]
            if not sources:
                logger.warning("Cluster %s ohne Quellpfade, kein CVT-Filter angelegt", cid)
                continue
            rng = self.streams.stream(Stream.CVT_INIT, slot, cid)
            self.cvt_filters[cid] = init_cvt_filter(
                sources, self.config.n_cvt, self.noise, rng, cid, self.config.ue_height
            )
        for event in report.merged:
            kept = self.cvt_filters.get(event.kept)
            absorbed = self.cvt_filters.pop(event.absorbed, None)
            if absorbed is None:
                continue
            if kept is None:
                self.cvt_filters[event.kept] = CvtFilter(absorbed.positions, absorbed.weights, event.kept)
                continue
            rng = self.streams.stream(Stream.CVT_MERGE, slot, event.kept, event.absorbed)
            self.cvt_filters[event.kept] = merge_cvt_filters(
                kept, absorbed, event.kept_weight, event.absorbed_weight, rng
            )
        for cid in report.deleted:
            self.cvt_filters.pop(cid, None)

    def run_slot(self, associations: Sequence[Association], slot: int) -> SlotResult:
        result = run_slot(
            self.vehicle_filters, self.cvt_filters, associations, self.config, self.noise, self.streams, slot
        )
        self.degeneracy_events += result.degeneracy_events
        return result
