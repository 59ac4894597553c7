"""
Kommandozeilen-Einstieg: ``python -m channel_slam.main [Optionen]``.

Exit-Codes: 0 = ok, 1 = unerwarteter Fehler, 2 = Konfigurationsfehler,
3 = Ein-/Ausgabefehler.
"""

import argparse
import logging
import sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import List, Optional

from channel_slam.core.io_config import ConfigError, load_run_config, with_overrides
from channel_slam.export.csv_export import OutputLockedError

# --------------------------------------------------------------------------- #
# Global logger (einzige erlaubte globale Variable)
# --------------------------------------------------------------------------- #
logger = logging.getLogger("channel_slam")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


# --------------------------------------------------------------------------- #
# Hilfsfunktionen
# --------------------------------------------------------------------------- #
def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="channel_slam",
        description="Monte-Carlo-Auswertung der kooperativen Mehrwege-SLAM.",
    )
    parser.add_argument("--config", type=Path, default=None, help="JSON-Konfiguration (Standard: data/scenario.json)")
    parser.add_argument("--seed", type=int, default=None, help="nur diesen Seed rechnen")
    parser.add_argument("--density", type=int, default=None, help="nur diese Fahrzeuganzahl rechnen")
    parser.add_argument("--slots", type=int, default=None, help="Anzahl Zeitschlitze K")
    parser.add_argument("--output", type=Path, default=None, help="Ausgabeverzeichnis")
    parser.add_argument("--sweep", action="store_true", help="zusätzlich über Gebäudelücken variieren")
    parser.add_argument("--workers", type=int, default=1, help="parallele Prozesse (Zellen)")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logstufe der Konsole",
    )
    return parser


def _setup_logging(output_dir: Path, level: str) -> None:
    """Initialisiert Rotating-Logfile <output>/logs/error.log (Retention 7 Tage) und Konsole."""
    log_dir = output_dir / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    formatter = logging.Formatter("%(asctime)s | %(levelname)s | %(name)s | %(message)s")

    file_handler = TimedRotatingFileHandler(
        log_dir / "error.log",
        when="D",
        interval=1,
        backupCount=7,
        encoding="utf-8",
    )
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.DEBUG)

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(formatter)
    console.setLevel(getattr(logging, level))

    logger.setLevel(logging.DEBUG)
    logger.handlers.clear()
    logger.addHandler(file_handler)
    logger.addHandler(console)
    logger.propagate = False


def _install_exception_hook() -> None:
    """Schreibt unbehandelte Exceptions ins Log."""

    def _handler(exc_type, exc_value, exc_tb):  # noqa: N802
        logger.critical("Unbehandelte Ausnahme", exc_info=(exc_type, exc_value, exc_tb))

    sys.excepthook = _handler


# --------------------------------------------------------------------------- #
# Einstiegspunkt
# --------------------------------------------------------------------------- #
def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    try:
        config = with_overrides(
            load_run_config(args.config),
            seed=args.seed,
            density=args.density,
            slots=args.slots,
            output_dir=args.output,
        )
    except (ConfigError, FileNotFoundError) as err:
        print(f"Konfigurationsfehler: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        _setup_logging(config.output_dir, args.log_level)
    except OSError as err:
        print(f"Ausgabeverzeichnis nicht nutzbar: {err}", file=sys.stderr)
        return EXIT_IO
    _install_exception_hook()

    # Simulationsmodule erst nach Logger-Initialisierung importieren
    from channel_slam.sim.runner import run_building_sweep, run_experiment

    try:
        if args.sweep:
            outcome = run_building_sweep(config, workers=args.workers)
        else:
            outcome = run_experiment(config, workers=args.workers)
    except (OutputLockedError, OSError) as err:
        logger.error("Ein-/Ausgabefehler: %s", err, exc_info=True)
        return EXIT_IO
    except Exception:  # pylint: disable=broad-except
        logger.exception("Lauf abgebrochen")
        return EXIT_UNEXPECTED

    for path in outcome.files:
        logger.info("geschrieben: %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
