"""
channel_slam.core.channel
~~~~~~~~~~~~~~~~~~~~~~~~~

Synthetische Mehrwege-Messungen (ToA-Distanz, zwei AoA-Winkel) und deren
Rückrechnung auf VT-Positionen.

Winkelkonvention: ``R(θ, φ, d) = d·(sin φ cos θ, sin φ sin θ, cos φ)``;
φ ist damit der Polarwinkel gegenüber der z-Achse.

Alle Funktionen sind rein bis auf den explizit übergebenen
``numpy.random.Generator``.
"""

from __future__ import annotations

import logging
import math
from typing import List, Sequence

import numpy as np
from scipy.stats import norm

from .models import (
    DomainError,
    MotionReport,
    MultipathObservation,
    NoiseModel,
    Position3,
    ScenarioWorld,
    VehicleTruth,
)
from .world import visible_paths

__all__ = [
    "MIN_DISTANCE",
    "direction_vector",
    "observation_from_offset",
    "truncated_normal",
    "observe_paths",
    "vt_from_observation",
    "vt_from_particles",
    "vehicle_from_cvt_particles",
    "report_motion",
    "odometry_velocities",
    "calibrate_sigma_from_median",
    "kernel_width",
]

logger = logging.getLogger(__name__)

MIN_DISTANCE: float = 1e-6


def direction_vector(theta, phi, d) -> np.ndarray:
    """Vektoroperator R(α, d); akzeptiert Skalare oder gleich lange Arrays."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    d = np.asarray(d, dtype=float)
    sin_phi = np.sin(phi)
    return np.stack(
        [d * sin_phi * np.cos(theta), d * sin_phi * np.sin(theta), d * np.cos(phi)],
        axis=-1,
    )


def observation_from_offset(
    offset: Sequence[float], vehicle_id: int, path_index: int
) -> MultipathObservation:
    """Exakte (θ, φ, d) für den Vektor UE → VT."""
    x, y, z = (float(v) for v in offset)
    d = math.sqrt(x * x + y * y + z * z)
    theta = math.atan2(y, x)
    phi = math.acos(max(-1.0, min(1.0, z / d))) if d > 0.0 else 0.0
    return MultipathObservation(theta, phi, max(d, MIN_DISTANCE), vehicle_id, path_index)


def truncated_normal(
    rng: np.random.Generator, sigma: float, truncation: float, size=None
) -> np.ndarray:
    """
    N(0, σ²) beschnitten auf ±truncation·σ per Rejection-Sampling.

    σ = 0 liefert Nullen, ohne den Generator zu verbrauchen.
    """
    shape = () if size is None else size
    if sigma == 0.0:
        return np.zeros(shape)
    bound = truncation * sigma
    out = rng.normal(0.0, sigma, size=shape)
    out = np.atleast_1d(out)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out.reshape(shape)


def observe_paths(
    world: ScenarioWorld,
    vehicle: VehicleTruth,
    noise: NoiseModel,
    rng: np.random.Generator,
    vehicle_id: int = 0,
) -> List[MultipathObservation]:
    """
    Verrauschte Beobachtungen aller sichtbaren Pfade eines Fahrzeugs.

    Pfadindizes werden in der Reihenfolge von :func:`visible_paths`
    ab 1 vergeben.
    """
    paths = visible_paths(world, vehicle)
    if not paths:
        return []
    n = len(paths)
    ue = vehicle.position3.as_array()
    n_d = truncated_normal(rng, noise.sigma_d, noise.truncation, n)
    n_theta = truncated_normal(rng, noise.sigma_angle, noise.truncation, n)
    n_phi = truncated_normal(rng, noise.sigma_angle, noise.truncation, n)

    observations: List[MultipathObservation] = []
    for i, path in enumerate(paths):
        exact = observation_from_offset(path.virtual_transmitter.as_array() - ue, vehicle_id, i + 1)
        observations.append(
            MultipathObservation(
                theta=exact.theta + float(n_theta[i]),
                phi=exact.phi + float(n_phi[i]),
                distance=max(exact.distance + float(n_d[i]), MIN_DISTANCE),
                vehicle_id=vehicle_id,
                path_index=i + 1,
            )
        )
    return observations


def vt_from_observation(vehicle: Position3, z: MultipathObservation) -> Position3:
    """r_VT = r_V + R(z)."""
    return Position3.from_array(vehicle.as_array() + direction_vector(z.theta, z.phi, z.distance))


def vt_from_particles(
    positions: np.ndarray, ue_height: float, z: MultipathObservation
) -> np.ndarray:
    """Rückprojektion r + R(z) für alle Fahrzeugpartikel (N×2) → VT-Punkte (N×3)."""
    lifted = np.column_stack([positions, np.full(len(positions), ue_height)])
    return lifted + direction_vector(z.theta, z.phi, z.distance)


def vehicle_from_cvt_particles(positions: np.ndarray, z: MultipathObservation) -> np.ndarray:
    """Fahrzeugposition aus CVT-Partikeln (N×3), auf 2D projiziert (N×2)."""
    return (positions - direction_vector(z.theta, z.phi, z.distance))[:, :2]


def report_motion(
    true_velocity: Sequence[float],
    noise: NoiseModel,
    rng: np.random.Generator,
    vehicle_id: int = 0,
) -> MotionReport:
    """v = v_real + n_v·(cos(h + n_ω), sin(h + n_ω)), h = Fahrtrichtung."""
    v = np.asarray(true_velocity, dtype=float)
    n_v = float(truncated_normal(rng, noise.sigma_v, noise.truncation))
    n_omega = float(truncated_normal(rng, noise.sigma_omega, noise.truncation))
    heading = math.atan2(v[1], v[0]) if np.any(v != 0.0) else 0.0
    reported = v + n_v * np.array([math.cos(heading + n_omega), math.sin(heading + n_omega)])
    return MotionReport(vehicle_id, (float(reported[0]), float(reported[1])))


def odometry_velocities(positions: np.ndarray, v0: Sequence[float], dt: float) -> np.ndarray:
    """
    Geschwindigkeitsfolge, deren Trapezintegration die Positionen exakt trifft.

    ``v_k = 2·(r_k − r_{k−1})/dt − v_{k−1}``; auf Abschnitten mit linearem
    Geschwindigkeitsverlauf identisch mit der wahren Geschwindigkeit.
    """
    positions = np.asarray(positions, dtype=float)
    out = np.empty_like(positions)
    out[0] = np.asarray(v0, dtype=float)
    for k in range(1, len(positions)):
        out[k] = 2.0 * (positions[k] - positions[k - 1]) / dt - out[k - 1]
    return out


def calibrate_sigma_from_median(median_error: float) -> float:
    """σ mit P(|N(0, σ²)| ≤ e) = 1/2, also σ = e / Φ⁻¹(0.75)."""
    if not median_error > 0.0:
        raise DomainError("Median-Fehler muss positiv sein.")
    return float(median_error / norm.ppf(0.75))


def kernel_width(z: MultipathObservation, noise: NoiseModel, floor: float = 0.05) -> float:
    """σ_w = max(√(σ_d² + (d̂·σ_angle)²), floor)."""
    return max(math.hypot(noise.sigma_d, z.distance * noise.sigma_angle), floor)
