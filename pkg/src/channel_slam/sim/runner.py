"""
channel_slam.sim.runner
~~~~~~~~~~~~~~~~~~~~~~~

Monte-Carlo-Läufe über Fahrzeug- und Gebäudedichte.

Eine Zelle (density, gap, seed) ist intern sequenziell: je Slot
Prädiktion → Kartenpflege → Filterabgleich → Team-Partikelfilter.
Zellen sind unabhängig und laufen optional parallel in einem
``ProcessPoolExecutor``; die Ergebnisse werden nach (density, gap, seed)
sortiert geschrieben und sind damit unabhängig von der Parallelität.

Public API
----------
- `simulate(world, config, seed, ...)`
- `run_cell(config, density, gap, seed)`
- `run_cells(config, cells, workers)`
- `write_results(results, output_dir, config)`
- `run_experiment(config, workers=1)`
- `run_building_sweep(config, workers=1)`
"""

from __future__ import annotations

import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.channel import observe_paths, odometry_velocities, report_motion, truncated_normal
from ..core.cvtmap import CvtMap
from ..core.io_config import RunConfig
from ..core.metrics import (
    EntityKind,
    ErrorSample,
    cdf_table,
    error_over_time,
    improvement,
    mae,
    mean_vt_count,
    summarize,
)
from ..core.models import MotionReport, ScenarioWorld, VehicleTruth
from ..core.rng import Stream, StreamFactory
from ..core.tpf import TeamParticleFilter
from ..core.world import true_virtual_transmitters, vehicle_state
from ..export.csv_export import write_csv
from .scenario import build_world

__all__ = [
    "VEHICLE_HEADER",
    "CVT_HEADER",
    "SUMMARY_HEADER",
    "CellResult",
    "ExperimentResult",
    "run_id_for",
    "simulate",
    "run_cell",
    "run_cells",
    "write_results",
    "run_experiment",
    "run_building_sweep",
]

logger = logging.getLogger(__name__)

VEHICLE_HEADER: Tuple[str, ...] = (
    "run_id", "seed", "density", "slot", "vehicle_id", "true_x", "true_y", "est_x", "est_y", "error_m",
)
CVT_HEADER: Tuple[str, ...] = (
    "run_id", "slot", "cvt_id", "est_x", "est_y", "est_z", "nearest_true_vt_error_m", "member_count",
)
SUMMARY_HEADER: Tuple[str, ...] = (
    "run_id", "seed", "density", "gap_m", "vehicle_mae_m", "vehicle_q80_m", "cvt_mae_m",
    "mean_vt_count", "final_cvt_count", "degeneracy_events",
)
DENSITY_HEADER: Tuple[str, ...] = (
    "density", "gap_m", "runs", "median_vehicle_mae_m", "mean_vehicle_mae_m", "mean_cvt_mae_m",
    "mean_vt_count", "improvement_pct",
)
TIME_HEADER: Tuple[str, ...] = ("density", "gap_m", "slot", "q80_error_m", "mae_m")
CDF_HEADER: Tuple[str, ...] = ("entity", "density", "gap_m", "edge_m", "cdf")

Cell = Tuple[int, Optional[float], int]  # (density, gap, seed)


@dataclass(slots=True)
class CellResult:
    run_id: str
    seed: int
    density: int
    gap: Optional[float]
    vehicle_rows: List[tuple] = field(default_factory=list)
    cvt_rows: List[tuple] = field(default_factory=list)
    vehicle_errors: List[ErrorSample] = field(default_factory=list)
    cvt_errors: List[ErrorSample] = field(default_factory=list)
    vt_counts: List[int] = field(default_factory=list)
    final_cvt_count: int = 0
    degeneracy_events: int = 0

    @property
    def gap_value(self) -> float:
        return math.inf if self.gap is None else float(self.gap)

    @property
    def vehicle_mae(self) -> float:
        return mae(self.vehicle_errors)

    @property
    def cvt_mae(self) -> float:
        return mae(self.cvt_errors) if self.cvt_errors else math.nan

    @property
    def mean_vt_count(self) -> float:
        return mean_vt_count(self.vt_counts)

    def summary_row(self, q: float = 0.8) -> tuple:
        stats = summarize([*self.vehicle_errors, *self.cvt_errors], q, vt_counts=self.vt_counts)
        return (
            self.run_id,
            self.seed,
            self.density,
            self.gap_value,
            stats.mae[EntityKind.VEHICLE],
            stats.quantile[EntityKind.VEHICLE],
            stats.mae.get(EntityKind.CVT, math.nan),
            stats.mean_vt_count,
            self.final_cvt_count,
            self.degeneracy_events,
        )


@dataclass(slots=True)
class ExperimentResult:
    results: List[CellResult]
    files: List[Path]


def _gap_label(gap: Optional[float]) -> str:
    return "inf" if gap is None else f"{gap:g}"


def run_id_for(density: int, gap: Optional[float], seed: int) -> str:
    return f"rho{density}-d{_gap_label(gap)}-s{seed}"


# --------------------------------------------------------------------------- #
#  Einzelne Zelle
# --------------------------------------------------------------------------- #
def _ground_truth(world: ScenarioWorld) -> List[List[VehicleTruth]]:
    dt = world.slot_duration
    return [
        [vehicle_state(world, m, k * dt) for m in range(world.n_vehicles)]
        for k in range(world.horizon + 1)
    ]


def _motion_reports(
    world: ScenarioWorld, truth: List[List[VehicleTruth]], config: RunConfig, streams: StreamFactory
) -> List[Dict[int, MotionReport]]:
    reports: List[Dict[int, MotionReport]] = [{} for _ in truth]
    for m in range(world.n_vehicles):
        track = np.array([row[m].position.as_array() for row in truth])
        odometry = odometry_velocities(track, truth[0][m].velocity, world.slot_duration)
        rng = streams.stream(Stream.MOTION, m)
        for k, v in enumerate(odometry):
            reports[k][m] = report_motion(v, config.noise, rng, m)
    return reports


def simulate(
    world: ScenarioWorld,
    config: RunConfig,
    seed: int,
    run_id: str = "run",
    density: Optional[int] = None,
    gap: Optional[float] = None,
) -> CellResult:
    """
    Ein vollständiger Lauf über ``world.horizon`` Slots.

    Filter und Karte rechnen relativ zur xy-Position der Basisstation;
    Weltkoordinaten entstehen erst in den Ergebniszeilen. Eine Verschiebung
    der Welt erreicht die Filter nur als Rundungsfehler der Messgeometrie.
    """
    n = world.n_vehicles
    dt = world.slot_duration
    noise = config.noise
    streams = StreamFactory(seed)
    result = CellResult(run_id, seed, n if density is None else density, gap)
    origin = world.base_station.as_array()[:2]
    origin3 = np.array([*origin, 0.0])

    truth = _ground_truth(world)
    reports = _motion_reports(world, truth, config, streams)
    measure_rngs = {m: streams.stream(Stream.MEASUREMENT, m) for m in range(n)}
    gps_fixes = {
        m: (truth[0][m].position.as_array() - origin)
        + truncated_normal(streams.stream(Stream.GPS, 0, m), noise.sigma_gps, noise.truncation, 2)
        for m in range(n)
    }

    tpf = TeamParticleFilter(config.tpf, noise, streams)
    tpf.initialize_vehicles(gps_fixes)
    cvt_map = CvtMap(n, config.effective_maintenance(), config.ap, world.ue_height)
    true_vts = true_virtual_transmitters(world) - origin3

    for k in range(1, world.horizon + 1):
        tpf.predict(k, reports[k - 1], reports[k], dt)
        observations = {
            m: observe_paths(world, truth[k][m], noise, measure_rngs[m], m) for m in range(n)
        }
        report = cvt_map.maintain(tpf.vehicle_estimates(), observations, k)
        tpf.apply_maintenance(report, observations, k)
        slot = tpf.run_slot(cvt_map.associations(observations), k)

        for m in range(n):
            true_xy = truth[k][m].position.as_array()
            local = slot.vehicle_estimates[m]
            error = float(np.linalg.norm(local - (true_xy - origin)))
            est = local + origin
            result.vehicle_rows.append(
                (run_id, seed, result.density, k, m, true_xy[0], true_xy[1], est[0], est[1], error)
            )
            result.vehicle_errors.append(ErrorSample(run_id, k, EntityKind.VEHICLE, m, error))
            result.vt_counts.append(len(observations[m]))

        clusters = {c.cluster_id: c for c in cvt_map.clusters}
        for cid, local in sorted(slot.cvt_estimates.items()):
            if cid not in clusters:
                continue
            error = float(np.min(np.linalg.norm(true_vts - local, axis=1)))
            est = local + origin3
            result.cvt_rows.append(
                (run_id, k, cid, est[0], est[1], est[2], error, clusters[cid].member_count)
            )
            result.cvt_errors.append(ErrorSample(run_id, k, EntityKind.CVT, cid, error))

    result.final_cvt_count = len(cvt_map)
    result.degeneracy_events = tpf.degeneracy_events
    logger.info(
        "%s: Fahrzeug-MAE %.3f m, %d CVTs, %d Degenerationen",
        run_id,
        result.vehicle_mae,
        result.final_cvt_count,
        result.degeneracy_events,
    )
    return result


def run_cell(config: RunConfig, density: int, gap: Optional[float], seed: int) -> CellResult:
    world = build_world(config, density, gap)
    return simulate(world, config, seed, run_id_for(density, gap, seed), density, gap)


def _run_cell_task(args: Tuple[RunConfig, int, Optional[float], int]) -> CellResult:
    return run_cell(*args)


def _cell_order(cell: Cell) -> Tuple[int, float, int]:
    density, gap, seed = cell
    return (density, math.inf if gap is None else gap, seed)


def run_cells(config: RunConfig, cells: Sequence[Cell], workers: int = 1) -> List[CellResult]:
    ordered = sorted(set(cells), key=_cell_order)
    tasks = [(config, d, g, s) for d, g, s in ordered]
    logger.info("%d Zellen, %d Worker", len(tasks), workers)
    if workers <= 1:
        return [_run_cell_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_task, tasks))


# --------------------------------------------------------------------------- #
#  Ausgabe
# --------------------------------------------------------------------------- #
def _group_key(r: CellResult) -> Tuple[int, float]:
    return (r.density, r.gap_value)


def _density_rows(results: Sequence[CellResult]) -> List[tuple]:
    rows: List[tuple] = []
    grouped = {key: list(group) for key, group in groupby(sorted(results, key=_group_key), key=_group_key)}
    for (density, gap), group in sorted(grouped.items()):
        maes = [r.vehicle_mae for r in group]
        baseline_key = min(k for k in grouped if k[1] == gap)
        baseline = statistics.median(r.vehicle_mae for r in grouped[baseline_key])
        median_mae = statistics.median(maes)
        cvt = [r.cvt_mae for r in group if not math.isnan(r.cvt_mae)]
        rows.append(
            (
                density,
                gap,
                len(group),
                median_mae,
                float(np.mean(maes)),
                float(np.mean(cvt)) if cvt else math.nan,
                float(np.mean([r.mean_vt_count for r in group])),
                improvement(baseline, median_mae) if baseline > 0.0 else math.nan,
            )
        )
    return rows


def _time_rows(results: Sequence[CellResult], q: float) -> List[tuple]:
    rows: List[tuple] = []
    for (density, gap), group in groupby(sorted(results, key=_group_key), key=_group_key):
        samples = [s for r in group for s in r.vehicle_errors]
        rows.extend((density, gap, slot, q_err, m) for slot, q_err, m in error_over_time(samples, q))
    return rows


def _cdf_rows(results: Sequence[CellResult], edges: Sequence[float]) -> List[tuple]:
    rows: List[tuple] = []
    for (density, gap), group in groupby(sorted(results, key=_group_key), key=_group_key):
        samples = [s for r in group for s in (*r.vehicle_errors, *r.cvt_errors)]
        stats = summarize(samples, edges=edges)
        for kind in (EntityKind.VEHICLE, EntityKind.CVT):
            table = stats.cdf.get(kind) or cdf_table([], edges)
            rows.extend((kind.value, density, gap, edge, p) for edge, p in table)
    return rows


def write_results(results: Sequence[CellResult], output_dir: Path, config: RunConfig) -> List[Path]:
    """Schreibt alle Ergebnisdateien; Zeilen in fester (density, gap, seed, slot)-Reihenfolge."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: _cell_order((r.density, r.gap, r.seed)))
    return [
        write_csv(output_dir / "vehicles.csv", VEHICLE_HEADER, (row for r in ordered for row in r.vehicle_rows)),
        write_csv(output_dir / "cvts.csv", CVT_HEADER, (row for r in ordered for row in r.cvt_rows)),
        write_csv(output_dir / "summary.csv", SUMMARY_HEADER, (r.summary_row(config.quantile) for r in ordered)),
        write_csv(output_dir / "density_summary.csv", DENSITY_HEADER, _density_rows(ordered)),
        write_csv(output_dir / "error_over_time.csv", TIME_HEADER, _time_rows(ordered, config.quantile)),
        write_csv(output_dir / "cdf.csv", CDF_HEADER, _cdf_rows(ordered, config.cdf_edges)),
    ]


def run_experiment(config: RunConfig, workers: int = 1) -> ExperimentResult:
    """Dichte-Sweep bei der konfigurierten Gebäudelücke."""
    gap = config.scenario.building_gap
    cells = [(d, gap, s) for d in config.densities for s in config.seeds]
    results = run_cells(config, cells, workers)
    return ExperimentResult(results, write_results(results, config.output_dir, config))


def run_building_sweep(config: RunConfig, workers: int = 1) -> ExperimentResult:
    """Dichte × Gebäudelücke (d ∈ config.gaps) bei fester Gebäudelänge."""
    cells = [(d, g, s) for d in config.densities for g in config.gaps for s in config.seeds]
    results = run_cells(config, cells, workers)
    return ExperimentResult(results, write_results(results, config.output_dir, config))
