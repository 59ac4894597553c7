"""
src/channel_slam/core/io_config.py

Laden und Validieren der Laufkonfiguration (JSON).

Eine leere Konfiguration ``{}`` reproduziert den Standardaufbau: jeder
fehlende Schlüssel fällt auf den dokumentierten Standardwert zurück.
Winkel werden in der Datei in Grad angegeben und beim Laden in Radiant
umgerechnet.

Funktionen
----------
load_run_config(path: str | Path | None) -> RunConfig
run_config_from_dict(raw: dict) -> RunConfig
with_overrides(config, *, seed, density, slots, output_dir) -> RunConfig
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Final, Mapping, Optional, Sequence, Tuple

from .cvtmap import ApConfig, MaintenanceConfig, compute_thresholds
from .models import ChannelSlamError, NoiseModel
from .tpf import TpfConfig

__all__ = [
    "ConfigError",
    "ConfigFormatError",
    "ScenarioConfig",
    "RunConfig",
    "load_run_config",
    "run_config_from_dict",
    "with_overrides",
]

# ======================================================================================================================
# Exceptions
# ======================================================================================================================


class ConfigError(ChannelSlamError):
    """Basisklasse aller Konfigurationsfehler."""


class ConfigFormatError(ConfigError):
    """Die Konfigurationsdatei verletzt das erwartete Schema."""


# ======================================================================================================================
# Konstanten & Globals
# ======================================================================================================================

_LOGGER: Final[logging.Logger] = logging.getLogger("channel_slam.core.io_config")

_DEFAULT_FILE: Final[str] = "scenario.json"

# Cache für die Standardkonfiguration (wird lazy geladen)
_DEFAULT_CONFIG: "RunConfig | None" = None


# ======================================================================================================================
# Datenklassen
# ======================================================================================================================


@dataclass(slots=True, frozen=True)
class ScenarioConfig:
    base_station: Tuple[float, float, float] = (50.0, 0.0, 8.0)
    road_x: Tuple[float, float] = (0.0, 132.0)
    road_y: Tuple[float, float] = (-16.0, 16.0)
    lanes: int = 8
    lane_width: float = 4.0
    loop_centers_x: Tuple[float, float] = (16.0, 116.0)
    loop_speeds: Tuple[Tuple[float, float], ...] = ((3.0, 3.0), (5.0, 8.0), (8.0, 8.0), (9.0, 12.0))
    max_speed: float = 20.0
    ue_height: float = 1.5
    building_length: float = 12.0
    building_gap: Optional[float] = 6.0  # None = keine Gebäude (d = ∞)
    building_height: float = 20.0
    building_setback: float = 2.0

    @property
    def n_loops(self) -> int:
        return self.lanes // 2


@dataclass(slots=True, frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    maintenance: MaintenanceConfig = field(default_factory=MaintenanceConfig)
    derive_thresholds: bool = False
    ap: ApConfig = field(default_factory=ApConfig)
    tpf: TpfConfig = field(default_factory=TpfConfig)
    densities: Tuple[int, ...] = (1, 2, 4, 8, 12, 16, 24)
    gaps: Tuple[Optional[float], ...] = (6.0, 24.0, 60.0, None)
    seeds: Tuple[int, ...] = tuple(range(1, 21))
    slots: int = 300
    slot_duration: float = 0.1
    output_dir: Path = Path("results")
    quantile: float = 0.8
    cdf_edges: Tuple[float, ...] = tuple(0.5 * k for k in range(41))

    def effective_maintenance(self) -> MaintenanceConfig:
        """Pflegeparameter mit abgeleiteten Schwellen, falls ``derive_thresholds`` gesetzt ist."""
        cfg = self.maintenance
        derived, _ = compute_thresholds(cfg.d_max, cfg.n_sigma, self.noise.sigma_d, self.noise.sigma_angle)
        if self.derive_thresholds:
            return dataclasses.replace(cfg, assoc_threshold=derived, merge_threshold=derived)
        if not math.isclose(derived, cfg.assoc_threshold, abs_tol=1e-3):
            _LOGGER.info(
                "Abgeleitete Schwelle %.3f weicht von konfigurierter L_A=%.3f ab",
                derived,
                cfg.assoc_threshold,
            )
        return cfg


# ======================================================================================================================
# Hilfsfunktionen
# ======================================================================================================================


def _project_root() -> Path:
    """Projekt-Root (= drei Ebenen über src/channel_slam/core/io_config.py)."""
    return Path(__file__).resolve().parents[3]


def _data_dir() -> Path:
    return _project_root() / "data"


def _section(raw: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigFormatError(f"Feld '{key}' muss ein Objekt sein")
    return value


def _number(raw: Mapping[str, Any], key: str, default: float) -> float:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigFormatError(f"Feld '{key}' muss eine endliche Zahl sein")
    return float(value)


def _integer(raw: Mapping[str, Any], key: str, default: int) -> int:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigFormatError(f"Feld '{key}' muss eine Ganzzahl sein")
    return value


def _vector(raw: Mapping[str, Any], key: str, default: Sequence[float], length: int) -> Tuple[float, ...]:
    value = raw.get(key, list(default))
    if not isinstance(value, list) or len(value) != length:
        raise ConfigFormatError(f"Feld '{key}' muss eine Liste mit {length} Zahlen sein")
    return tuple(_number({"v": v}, "v", 0.0) for v in value)


def _optional_gap(value: Any) -> Optional[float]:
    if value is None or value == "inf":
        return None
    return _number({"gap_m": value}, "gap_m", 0.0)


def _parse_scenario(raw: Mapping[str, Any]) -> ScenarioConfig:
    d = ScenarioConfig()
    road = _section(raw, "road")
    building = _section(raw, "building")
    speeds_raw = raw.get("loop_speeds_mps", [list(s) for s in d.loop_speeds])
    if not isinstance(speeds_raw, list) or not speeds_raw:
        raise ConfigFormatError("Feld 'loop_speeds_mps' muss eine nichtleere Liste sein")
    speeds = tuple(tuple(_vector({"s": s}, "s", (0.0, 0.0), 2)) for s in speeds_raw)
    return ScenarioConfig(
        base_station=_vector(raw, "base_station", d.base_station, 3),  # type: ignore[arg-type]
        road_x=_vector(road, "x", d.road_x, 2),  # type: ignore[arg-type]
        road_y=_vector(road, "y", d.road_y, 2),  # type: ignore[arg-type]
        lanes=_integer(raw, "lanes", d.lanes),
        lane_width=_number(raw, "lane_width_m", d.lane_width),
        loop_centers_x=_vector(raw, "loop_centers_x_m", d.loop_centers_x, 2),  # type: ignore[arg-type]
        loop_speeds=speeds,  # type: ignore[arg-type]
        max_speed=_number(raw, "max_speed_mps", d.max_speed),
        ue_height=_number(raw, "ue_height_m", d.ue_height),
        building_length=_number(building, "length_m", d.building_length),
        building_gap=_optional_gap(building.get("gap_m", d.building_gap)),
        building_height=_number(building, "height_m", d.building_height),
        building_setback=_number(building, "setback_m", d.building_setback),
    )


def _validate(config: RunConfig) -> None:
    sc = config.scenario
    if sc.lanes < 2 or sc.lanes % 2:
        raise ConfigFormatError("'lanes' muss eine gerade Zahl ≥ 2 sein")
    if len(sc.loop_speeds) < sc.n_loops:
        raise ConfigFormatError("'loop_speeds_mps' braucht einen Eintrag je Fahrstreifenpaar")
    if any(v <= 0.0 for pair in sc.loop_speeds for v in pair):
        raise ConfigFormatError("Geschwindigkeiten müssen positiv sein")
    if sc.lane_width <= 0.0 or sc.building_length <= 0.0 or sc.building_height <= 0.0:
        raise ConfigFormatError("Fahrstreifenbreite und Gebäudemaße müssen positiv sein")
    if sc.building_gap is not None and sc.building_gap <= 0.0:
        raise ConfigFormatError("Gebäudelücke muss positiv oder null (∞) sein")
    if not config.densities or any(d < 1 for d in config.densities):
        raise ConfigFormatError("'densities' muss nichtleer sein, Werte ≥ 1")
    if not config.seeds or any(s < 0 for s in config.seeds):
        raise ConfigFormatError("'seeds' muss nichtleer sein, Werte ≥ 0")
    if not config.gaps:
        raise ConfigFormatError("'gaps_m' darf nicht leer sein")
    if config.slots < 1 or config.slot_duration <= 0.0:
        raise ConfigFormatError("'slots' ≥ 1 und 'slot_duration_s' > 0 erforderlich")
    if not 0.0 < config.quantile < 1.0:
        raise ConfigFormatError("'metrics.quantile' muss in (0, 1) liegen")


# ======================================================================================================================
# API
# ======================================================================================================================


def run_config_from_dict(raw: Mapping[str, Any]) -> RunConfig:
    """
    Baut eine :class:`RunConfig` aus einem JSON-Objekt.

    Raises
    ------
    ConfigFormatError
    """
    if not isinstance(raw, dict):
        raise ConfigFormatError("Konfiguration muss ein JSON-Objekt sein")
    base = RunConfig()
    noise_raw = _section(raw, "noise")
    thr = _section(raw, "thresholds")
    cvt = _section(raw, "cvt")
    ap_raw = _section(raw, "ap")
    tpf_raw = _section(raw, "tpf")
    metrics_raw = _section(raw, "metrics")

    def _int_list(key: str, default: Sequence[int]) -> Tuple[int, ...]:
        value = raw.get(key, list(default))
        if not isinstance(value, list):
            raise ConfigFormatError(f"Feld '{key}' muss eine Liste sein")
        return tuple(_integer({key: v}, key, 0) for v in value)

    gaps_raw = raw.get("gaps_m", [g for g in base.gaps])
    if not isinstance(gaps_raw, list):
        raise ConfigFormatError("Feld 'gaps_m' muss eine Liste sein")
    edges_raw = metrics_raw.get("cdf_edges_m", list(base.cdf_edges))
    if not isinstance(edges_raw, list):
        raise ConfigFormatError("Feld 'metrics.cdf_edges_m' muss eine Liste sein")
    derive = thr.get("derive", base.derive_thresholds)
    if not isinstance(derive, bool):
        raise ConfigFormatError("Feld 'thresholds.derive' muss true/false sein")
    preference = ap_raw.get("preference", "median")
    if not (preference == "median" or (isinstance(preference, (int, float)) and not isinstance(preference, bool))):
        raise ConfigFormatError("Feld 'ap.preference' muss 'median' oder eine Zahl sein")
    sigma_w = tpf_raw.get("sigma_w_m")

    try:
        config = RunConfig(
            scenario=_parse_scenario(_section(raw, "scenario")),
            noise=NoiseModel(
                sigma_d=_number(noise_raw, "sigma_d_m", base.noise.sigma_d),
                sigma_angle=math.radians(_number(noise_raw, "sigma_angle_deg", 2.08)),
                sigma_v=_number(noise_raw, "sigma_v_mps", base.noise.sigma_v),
                sigma_omega=math.radians(_number(noise_raw, "sigma_omega_deg", 0.1)),
                sigma_gps=_number(noise_raw, "sigma_gps_m", base.noise.sigma_gps),
                truncation=_number(noise_raw, "truncation", base.noise.truncation),
            ),
            maintenance=MaintenanceConfig(
                assoc_threshold=_number(thr, "L_A", base.maintenance.assoc_threshold),
                merge_threshold=_number(thr, "L_M", base.maintenance.merge_threshold),
                delete_after=_integer(cvt, "delete_after_slots", base.maintenance.delete_after),
                d_max=_number(thr, "d_max_m", base.maintenance.d_max),
                n_sigma=_number(thr, "n_sigma", base.maintenance.n_sigma),
                window=_integer(cvt, "window_slots", base.maintenance.window),
            ),
            derive_thresholds=derive,
            ap=ApConfig(
                max_iter=_integer(ap_raw, "max_iter", base.ap.max_iter),
                damping=_number(ap_raw, "damping", base.ap.damping),
                convergence_iter=_integer(ap_raw, "convergence_iter", base.ap.convergence_iter),
                preference=preference if preference == "median" else float(preference),
            ),
            tpf=TpfConfig(
                n_vehicle=_integer(tpf_raw, "n_vehicle", base.tpf.n_vehicle),
                n_cvt=_integer(tpf_raw, "n_cvt", base.tpf.n_cvt),
                n_batches=_integer(tpf_raw, "n_batches", base.tpf.n_batches),
                xi=_number(tpf_raw, "xi_m", base.tpf.xi),
                sigma_w=None if sigma_w is None else _number(tpf_raw, "sigma_w_m", 0.0),
                sigma_floor=_number(tpf_raw, "sigma_floor_m", base.tpf.sigma_floor),
                resample_ratio=_number(tpf_raw, "resample_ratio", base.tpf.resample_ratio),
                ue_height=_number(_section(raw, "scenario"), "ue_height_m", base.tpf.ue_height),
            ),
            densities=_int_list("densities", base.densities),
            gaps=tuple(_optional_gap(g) for g in gaps_raw),
            seeds=_int_list("seeds", base.seeds),
            slots=_integer(raw, "slots", base.slots),
            slot_duration=_number(raw, "slot_duration_s", base.slot_duration),
            output_dir=Path(str(raw.get("output_dir", base.output_dir))),
            quantile=_number(metrics_raw, "quantile", base.quantile),
            cdf_edges=tuple(_number({"e": e}, "e", 0.0) for e in edges_raw),
        )
    except ConfigFormatError:
        raise
    except ChannelSlamError as exc:
        raise ConfigFormatError(f"Ungültige Konfiguration: {exc}") from exc

    _validate(config)
    return config


def load_run_config(path: str | Path | None = None) -> RunConfig:
    """
    Lädt die Laufkonfiguration.

    Parameter
    ---------
    path:
        Optionaler Pfad. *None* ⇒ *data/scenario.json* relativ zum Projekt-Root
        (wird gecacht).

    Raises
    ------
    FileNotFoundError, ConfigFormatError
    """
    global _DEFAULT_CONFIG  # noqa: PLW0603

    if _DEFAULT_CONFIG is not None and path is None:
        return _DEFAULT_CONFIG

    json_path = Path(path) if path else _data_dir() / _DEFAULT_FILE
    try:
        raw: Dict[str, Any] = json.loads(json_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        _LOGGER.exception("Ungültiges JSON in %s", json_path)
        raise ConfigFormatError(f"{json_path.name} enthält ungültiges JSON") from exc

    config = run_config_from_dict(raw)
    if path is None:
        _DEFAULT_CONFIG = config
    _LOGGER.debug("Konfiguration geladen aus %s", json_path)
    return config


def with_overrides(
    config: RunConfig,
    *,
    seed: Optional[int] = None,
    density: Optional[int] = None,
    slots: Optional[int] = None,
    output_dir: str | Path | None = None,
) -> RunConfig:
    """Überschreibt einzelne Felder (CLI-Flags); Rest bleibt unverändert."""
    changes: Dict[str, Any] = {}
    if seed is not None:
        changes["seeds"] = (seed,)
    if density is not None:
        changes["densities"] = (density,)
    if slots is not None:
        changes["slots"] = slots
    if output_dir is not None:
        changes["output_dir"] = Path(output_dir)
    updated = dataclasses.replace(config, **changes)
    _validate(updated)
    return updated
