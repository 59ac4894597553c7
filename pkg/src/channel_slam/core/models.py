"""
channel_slam.core.models
~~~~~~~~~~~~~~~~~~~~~~~~

Gemeinsame Datenklassen und Fehlertypen.

Alle Klassen validieren ihre Werte in ``__post_init__`` und werfen bei
Verstößen :class:`ValidationError` bzw. :class:`GeometryError`. Positionen
und Ebenen sind unveränderlich; Cluster (:class:`CvtCluster`) werden von der
Kartenpflege laufend fortgeschrieben.

Public API
----------
- Fehler: `ChannelSlamError`, `ValidationError`, `GeometryError`,
  `OutOfRangeError`, `DomainError`
- Geometrie: `Position2`, `Position3`, `ReflectingPlane`, `RoadBounds`
- Trajektorien: `UniformMotion`, `AcceleratedMotion`, `CircularMotion`,
  `TrajectorySegment`, `PiecewiseTrajectory`, `TrajectoryModel`
- Szenario: `VehicleTruth`, `ScenarioWorld`, `PathKind`, `GeometricPath`
- Messung: `NoiseModel`, `MultipathObservation`, `MotionReport`
- Karte: `VtSample`, `CvtCluster`
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "ChannelSlamError",
    "ValidationError",
    "GeometryError",
    "OutOfRangeError",
    "DomainError",
    "Position2",
    "Position3",
    "ReflectingPlane",
    "RoadBounds",
    "UniformMotion",
    "AcceleratedMotion",
    "CircularMotion",
    "TrajectorySegment",
    "PiecewiseTrajectory",
    "TrajectoryModel",
    "VehicleTruth",
    "ScenarioWorld",
    "PathKind",
    "GeometricPath",
    "NoiseModel",
    "MultipathObservation",
    "MotionReport",
    "VtSample",
    "CvtCluster",
]


# --------------------------------------------------------------------------- #
#  Eigene Fehlertypen
# --------------------------------------------------------------------------- #
class ChannelSlamError(Exception):
    """Basisfehler für alle Operationen des Pakets."""


class ValidationError(ChannelSlamError):
    """Fehlerhafte Eingabewerte oder unzulässiger Zustand."""


class GeometryError(ChannelSlamError):
    """Ungültige Geometrie (Ebenen, Trajektorien, Straßengrenzen)."""


class OutOfRangeError(ValidationError):
    """Zeitpunkt liegt außerhalb des Simulationshorizonts."""


class DomainError(ChannelSlamError):
    """Mathematisch unzulässige Eingabe (z. B. leere Stichprobe)."""


def _require_finite(name: str, *values: float) -> None:
    if not all(math.isfinite(v) for v in values):
        raise ValidationError(f"{name}: alle Komponenten müssen endlich sein.")


# --------------------------------------------------------------------------- #
#  Positionen
# --------------------------------------------------------------------------- #
@dataclass(slots=True, frozen=True)
class Position2:
    x: float
    y: float

    def __post_init__(self) -> None:
        _require_finite("Position2", self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def lift(self, z: float) -> "Position3":
        """Hebt die 2D-Position auf Höhe *z* an."""
        return Position3(self.x, self.y, z)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Position2":
        return cls(float(values[0]), float(values[1]))


@dataclass(slots=True, frozen=True)
class Position3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        _require_finite("Position3", self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Position3") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Position3":
        return cls(float(values[0]), float(values[1]), float(values[2]))


# --------------------------------------------------------------------------- #
#  Reflektierende Ebene
# --------------------------------------------------------------------------- #
@dataclass(slots=True, frozen=True)
class ReflectingPlane:
    """
    Senkrechte Gebäudefront über dem Segment *start* → *end*.

    Die Normale ``(dy, -dx) / L`` zeigt auf die reflektierende Seite,
    d. h. rechts der Laufrichtung des Segments.
    """

    start: Position2
    end: Position2
    height: float
    plane_id: int = 0

    def __post_init__(self) -> None:
        if self.length <= 0.0:
            raise GeometryError("Ebenen-Segment muss eine positive Länge haben.")
        if not (math.isfinite(self.height) and self.height > 0.0):
            raise GeometryError("Ebenenhöhe h_b muss positiv sein.")

    @property
    def length(self) -> float:
        return math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)

    @property
    def tangent(self) -> np.ndarray:
        return (self.end.as_array() - self.start.as_array()) / self.length

    @property
    def normal(self) -> np.ndarray:
        dx, dy = self.end.x - self.start.x, self.end.y - self.start.y
        return np.array([dy, -dx], dtype=float) / self.length

    def signed_distance(self, point: np.ndarray) -> float:
        """Abstand von *point* (2D oder 3D) zur unendlichen Ebene, positiv vorne."""
        return float((np.asarray(point, dtype=float)[:2] - self.start.as_array()) @ self.normal)

    def translated(self, dx: float, dy: float) -> "ReflectingPlane":
        return ReflectingPlane(
            Position2(self.start.x + dx, self.start.y + dy),
            Position2(self.end.x + dx, self.end.y + dy),
            self.height,
            self.plane_id,
        )


@dataclass(slots=True, frozen=True)
class RoadBounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        _require_finite("RoadBounds", self.x_min, self.x_max, self.y_min, self.y_max)
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise GeometryError("Straßengrenzen sind leer.")

    def contains(self, x: float, y: float, tol: float = 1e-6) -> bool:
        return (
            self.x_min - tol <= x <= self.x_max + tol
            and self.y_min - tol <= y <= self.y_max + tol
        )

    def translated(self, dx: float, dy: float) -> "RoadBounds":
        return RoadBounds(self.x_min + dx, self.x_max + dx, self.y_min + dy, self.y_max + dy)


# --------------------------------------------------------------------------- #
#  Trajektorien
# --------------------------------------------------------------------------- #
State = Tuple[np.ndarray, np.ndarray]  # (Position, Geschwindigkeit)


@dataclass(slots=True, frozen=True)
class UniformMotion:
    start: Position2
    velocity: Tuple[float, float]
    start_time: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("UniformMotion", *self.velocity, self.start_time)

    def state_at(self, t: float) -> State:
        tau = t - self.start_time
        v = np.asarray(self.velocity, dtype=float)
        return self.start.as_array() + v * tau, v


@dataclass(slots=True, frozen=True)
class AcceleratedMotion:
    start: Position2
    velocity: Tuple[float, float]
    acceleration: Tuple[float, float]
    start_time: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("AcceleratedMotion", *self.velocity, *self.acceleration, self.start_time)

    def state_at(self, t: float) -> State:
        tau = t - self.start_time
        v0 = np.asarray(self.velocity, dtype=float)
        a = np.asarray(self.acceleration, dtype=float)
        return self.start.as_array() + v0 * tau + 0.5 * a * tau * tau, v0 + a * tau


@dataclass(slots=True, frozen=True)
class CircularMotion:
    """Gleichförmige Kreisbewegung; negative Winkelrate = Uhrzeigersinn."""

    center: Position2
    radius: float
    angular_rate: float
    start_angle: float = 0.0
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise GeometryError("Kreisradius muss positiv sein.")
        _require_finite("CircularMotion", self.angular_rate, self.start_angle, self.start_time)

    @property
    def start(self) -> Position2:
        return Position2(
            self.center.x + self.radius * math.cos(self.start_angle),
            self.center.y + self.radius * math.sin(self.start_angle),
        )

    def state_at(self, t: float) -> State:
        angle = self.start_angle + self.angular_rate * (t - self.start_time)
        c, s = math.cos(angle), math.sin(angle)
        pos = self.center.as_array() + self.radius * np.array([c, s])
        vel = self.radius * self.angular_rate * np.array([-s, c])
        return pos, vel


SegmentModel = Union[UniformMotion, AcceleratedMotion, CircularMotion]


@dataclass(slots=True, frozen=True)
class TrajectorySegment:
    model: SegmentModel
    duration: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise GeometryError("Segmentdauer muss positiv sein.")


@dataclass(slots=True, frozen=True)
class PiecewiseTrajectory:
    """
    Periodische Verkettung von Segmenten (geschlossene Runde).

    Jedes Segment wird in seiner lokalen Zeit ab ``model.start_time``
    ausgewertet; *phase* verschiebt den Einstieg in die Runde.
    """

    segments: Tuple[TrajectorySegment, ...]
    phase: float = 0.0
    start_time: float = 0.0
    _ends: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.segments:
            raise GeometryError("Trajektorie benötigt mindestens ein Segment.")
        ends: List[float] = []
        acc = 0.0
        for seg in self.segments:
            acc += seg.duration
            ends.append(acc)
        object.__setattr__(self, "_ends", tuple(ends))

    @property
    def period(self) -> float:
        return self._ends[-1]

    def state_at(self, t: float) -> State:
        local = (t - self.start_time + self.phase) % self.period
        idx = min(bisect.bisect_right(self._ends, local), len(self.segments) - 1)
        seg_start = self._ends[idx - 1] if idx > 0 else 0.0
        model = self.segments[idx].model
        return model.state_at(model.start_time + (local - seg_start))


TrajectoryModel = Union[UniformMotion, AcceleratedMotion, CircularMotion, PiecewiseTrajectory]


# --------------------------------------------------------------------------- #
#  Szenario
# --------------------------------------------------------------------------- #
@dataclass(slots=True, frozen=True)
class VehicleTruth:
    position: Position2
    velocity: Tuple[float, float]
    ue_height: float = 1.5

    def __post_init__(self) -> None:
        _require_finite("VehicleTruth", *self.velocity)
        if self.ue_height <= 0.0:
            raise ValidationError("ue_height muss positiv sein.")

    @property
    def position3(self) -> Position3:
        return self.position.lift(self.ue_height)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(slots=True, frozen=True)
class ScenarioWorld:
    base_station: Position3
    planes: Tuple[ReflectingPlane, ...]
    vehicles: Tuple[TrajectoryModel, ...]
    slot_duration: float
    horizon: int
    bounds: RoadBounds
    ue_height: float = 1.5
    max_speed: Optional[float] = None

    def __post_init__(self) -> None:
        if self.slot_duration <= 0.0:
            raise ValidationError("Slotdauer t_δ muss positiv sein.")
        if self.horizon < 1:
            raise ValidationError("Horizont K muss mindestens 1 sein.")
        if self.ue_height <= 0.0:
            raise ValidationError("ue_height muss positiv sein.")
        if not (self.bounds.x_min <= self.base_station.x <= self.bounds.x_max):
            raise GeometryError("Basisstation liegt außerhalb des Straßenbereichs (x).")
        ids = [p.plane_id for p in self.planes]
        if len(set(ids)) != len(ids):
            raise GeometryError("plane_id muss eindeutig sein.")

    @property
    def horizon_s(self) -> float:
        return self.horizon * self.slot_duration

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)


class PathKind(enum.Enum):
    LOS = "los"
    REFLECTION = "reflection"


@dataclass(slots=True, frozen=True)
class GeometricPath:
    kind: PathKind
    virtual_transmitter: Position3
    plane_id: Optional[int] = None
    reflection_point: Optional[Position3] = None


# --------------------------------------------------------------------------- #
#  Messmodell
# --------------------------------------------------------------------------- #
@dataclass(slots=True, frozen=True)
class NoiseModel:
    """Standardabweichungen; Winkel in Radiant, Trunkierung als σ-Vielfaches."""

    sigma_d: float = 2.61
    sigma_angle: float = math.radians(2.08)
    sigma_v: float = 0.1
    sigma_omega: float = math.radians(0.1)
    sigma_gps: float = 3.0
    truncation: float = 2.0

    def __post_init__(self) -> None:
        sigmas = (self.sigma_d, self.sigma_angle, self.sigma_v, self.sigma_omega, self.sigma_gps)
        if any(not math.isfinite(s) or s < 0.0 for s in sigmas):
            raise ValidationError("Alle σ-Werte müssen ≥ 0 sein.")
        if not self.truncation > 0.0:
            raise ValidationError("Trunkierung muss positiv sein.")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(slots=True, frozen=True)
class MultipathObservation:
    theta: float
    phi: float
    distance: float
    vehicle_id: int
    path_index: int

    def __post_init__(self) -> None:
        _require_finite("MultipathObservation", self.theta, self.phi, self.distance)
        if self.distance <= 0.0:
            raise ValidationError("Distanz muss positiv sein.")
        if self.path_index < 1:
            raise ValidationError("Pfadindex beginnt bei 1.")

    @property
    def key(self) -> Tuple[int, int]:
        return (self.vehicle_id, self.path_index)


@dataclass(slots=True, frozen=True)
class MotionReport:
    vehicle_id: int
    velocity: Tuple[float, float]

    def __post_init__(self) -> None:
        _require_finite("MotionReport", *self.velocity)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.velocity, dtype=float)


# --------------------------------------------------------------------------- #
#  CVT-Cluster
# --------------------------------------------------------------------------- #
@dataclass(slots=True, frozen=True)
class VtSample:
    """Eine VT-Schätzung (Fahrzeugschätzung + R(z)) eines Pfads in einem Slot."""

    slot: int
    vehicle_id: int
    path_index: int
    position: Tuple[float, float, float]


@dataclass(slots=True)
class CvtCluster:
    cluster_id: int
    samples: List[VtSample]
    index_vector: np.ndarray
    stale_slots: int = 0

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValidationError("Ein Cluster benötigt mindestens eine VT-Stichprobe.")
        self.index_vector = np.asarray(self.index_vector, dtype=int)
        if self.stale_slots < 0:
            raise ValidationError("stale_slots muss ≥ 0 sein.")

    # ------------------------ Eigenschaften ---------------------------- #
    @property
    def position(self) -> np.ndarray:
        return np.mean([s.position for s in self.samples], axis=0)

    @property
    def members(self) -> set[Tuple[int, int]]:
        return {(s.vehicle_id, s.path_index) for s in self.samples}

    @property
    def member_count(self) -> int:
        return len(self.samples)

    def observed_by(self) -> List[Tuple[int, int]]:
        """(vehicle_id, path_index) aller Fahrzeuge mit Eintrag ≠ 0 in diesem Slot."""
        return [(int(m), int(p)) for m, p in enumerate(self.index_vector) if p != 0]

    # ------------------------- Operationen ----------------------------- #
    def add_sample(self, sample: VtSample, window: int) -> None:
        self.samples.append(sample)
        self.prune(window)

    def prune(self, window: int) -> None:
        """Behält nur Stichproben der letzten *window* Slots (relativ zur jüngsten)."""
        newest = max(s.slot for s in self.samples)
        self.samples = [s for s in self.samples if s.slot > newest - window]

    def to_dict(self) -> Dict[str, Any]:
        x, y, z = (float(v) for v in self.position)
        return {
            "cluster_id": self.cluster_id,
            "x": x,
            "y": y,
            "z": z,
            "index_vector": self.index_vector.tolist(),
            "stale_slots": self.stale_slots,
            "member_count": self.member_count,
        }
