"""
channel_slam.core.world
~~~~~~~~~~~~~~~~~~~~~~~

Ground-Truth-Geometrie: Trajektorienauswertung, Spiegelsender und
sichtbare Ausbreitungspfade (LOS + Einfachreflexion).

Das Modul ist zustandslos und darf aus beliebig vielen Threads
aufgerufen werden.

Public API
----------
- `evaluate_trajectory(model, t, horizon_s=None)`
- `vehicle_state(world, vehicle_id, t)`
- `mirror_transmitter(bs, plane)`
- `segment_blocked(p, q, planes, skip=())`
- `visible_paths(world, vehicle)`
- `true_virtual_transmitters(world)`
"""

from __future__ import annotations

import logging
from typing import Iterable, List, Optional

import numpy as np

from .models import (
    GeometricPath,
    GeometryError,
    OutOfRangeError,
    PathKind,
    Position2,
    Position3,
    ReflectingPlane,
    ScenarioWorld,
    TrajectoryModel,
    VehicleTruth,
)

__all__ = [
    "evaluate_trajectory",
    "vehicle_state",
    "mirror_transmitter",
    "segment_blocked",
    "visible_paths",
    "true_virtual_transmitters",
]

logger = logging.getLogger(__name__)

# Toleranz für Randfälle (Segmentenden, Zeitgrenzen)
_EPS: float = 1e-9


# -------------------------------------------------------------------------- #
# Trajektorien                                                               #
# -------------------------------------------------------------------------- #
def evaluate_trajectory(
    model: TrajectoryModel,
    t: float,
    horizon_s: Optional[float] = None,
    ue_height: float = 1.5,
) -> VehicleTruth:
    """
    Exakte Position und Geschwindigkeit zum Zeitpunkt *t*.

    Raises
    ------
    OutOfRangeError
        *t* < 0 oder *t* > *horizon_s*.
    """
    if t < -_EPS or (horizon_s is not None and t > horizon_s + _EPS):
        raise OutOfRangeError(f"t={t} liegt außerhalb von [0, {horizon_s}]")
    pos, vel = model.state_at(t)
    return VehicleTruth(Position2.from_array(pos), (float(vel[0]), float(vel[1])), ue_height)


def vehicle_state(world: ScenarioWorld, vehicle_id: int, t: float) -> VehicleTruth:
    """Wie :func:`evaluate_trajectory`, prüft zusätzlich Straßengrenzen und Tempo."""
    truth = evaluate_trajectory(world.vehicles[vehicle_id], t, world.horizon_s, world.ue_height)
    if not world.bounds.contains(truth.position.x, truth.position.y):
        raise GeometryError(f"Fahrzeug {vehicle_id} verlässt bei t={t:.3f}s die Straße")
    if world.max_speed is not None and truth.speed > world.max_speed + _EPS:
        raise GeometryError(f"Fahrzeug {vehicle_id} überschreitet die Höchstgeschwindigkeit")
    return truth


# -------------------------------------------------------------------------- #
# Spiegelung & Verdeckung                                                    #
# -------------------------------------------------------------------------- #
def mirror_transmitter(bs: Position3, plane: ReflectingPlane) -> Position3:
    """Spiegelt *bs* an der unendlichen senkrechten Ebene der Front; z bleibt."""
    n = plane.normal
    p = np.array([bs.x, bs.y])
    mirrored = p - 2.0 * plane.signed_distance(p) * n
    return Position3(float(mirrored[0]), float(mirrored[1]), bs.z)


def segment_blocked(
    p: np.ndarray,
    q: np.ndarray,
    planes: Iterable[ReflectingPlane],
    skip: Iterable[int] = (),
) -> bool:
    """
    True, wenn das 3D-Segment *p* → *q* eine Front schneidet.

    Geprüft wird der 2D-Schnitt mit dem Frontsegment; die Front blockiert nur,
    wenn der Strahl an der Schnittstelle nicht über ``h_b`` verläuft.
    Berührungen an den Enden von *p* → *q* zählen nicht.
    """
    skip_ids = set(skip)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q[:2] - p[:2]
    for plane in planes:
        if plane.plane_id in skip_ids:
            continue
        a = plane.start.as_array()
        e = plane.end.as_array() - a
        denom = d[0] * e[1] - d[1] * e[0]
        if abs(denom) < _EPS:
            continue  # parallel
        w = a - p[:2]
        s = (w[0] * e[1] - w[1] * e[0]) / denom
        u = (w[0] * d[1] - w[1] * d[0]) / denom
        if not (_EPS < s < 1.0 - _EPS and -_EPS <= u <= 1.0 + _EPS):
            continue
        z = p[2] + s * (q[2] - p[2])
        if z <= plane.height:
            logger.debug("Segment blockiert durch Front %s (s=%.3f)", plane.plane_id, s)
            return True
    return False


def _reflection_path(
    world: ScenarioWorld, plane: ReflectingPlane, ue: np.ndarray
) -> Optional[GeometricPath]:
    bs = world.base_station.as_array()
    f_bs = plane.signed_distance(bs)
    f_ue = plane.signed_distance(ue)
    if f_bs <= _EPS or f_ue <= _EPS:
        return None  # beide müssen vor der Front liegen

    vt = mirror_transmitter(world.base_station, plane)
    vt_arr = vt.as_array()
    # Schnittpunkt VT → UE mit der Frontebene (f(VT) = -f(BS))
    s = f_bs / (f_bs + f_ue)
    refl = vt_arr + s * (ue - vt_arr)
    u = float((refl[:2] - plane.start.as_array()) @ plane.tangent) / plane.length
    if not (-_EPS <= u <= 1.0 + _EPS):
        return None
    if not (0.0 <= refl[2] <= plane.height):
        return None
    skip = (plane.plane_id,)
    if segment_blocked(bs, refl, world.planes, skip) or segment_blocked(refl, ue, world.planes, skip):
        return None
    return GeometricPath(PathKind.REFLECTION, vt, plane.plane_id, Position3.from_array(refl))


def visible_paths(world: ScenarioWorld, vehicle: VehicleTruth) -> List[GeometricPath]:
    """
    Alle geometrisch gültigen Pfade BS → UE.

    Reihenfolge: LOS (falls frei), danach Reflexionen in Reihenfolge von
    ``world.planes``. Die Reihenfolge bestimmt die Pfadindizes p_m.
    """
    ue = vehicle.position3.as_array()
    paths: List[GeometricPath] = []
    if not segment_blocked(world.base_station.as_array(), ue, world.planes):
        paths.append(GeometricPath(PathKind.LOS, world.base_station))
    for plane in world.planes:
        path = _reflection_path(world, plane, ue)
        if path is not None:
            paths.append(path)
    return paths


def true_virtual_transmitters(world: ScenarioWorld) -> np.ndarray:
    """BS plus Spiegelbilder aller Fronten, koplanare Duplikate zusammengefasst (k×3)."""
    points = [world.base_station.as_array()]
    points.extend(mirror_transmitter(world.base_station, p).as_array() for p in world.planes)
    return np.unique(np.round(np.vstack(points), 9), axis=0)
