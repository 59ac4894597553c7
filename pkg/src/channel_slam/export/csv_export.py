"""
src/channel_slam/export/csv_export.py

Atomares Schreiben der Ergebnis-CSV-Dateien.

Format: UTF-8, Komma als Trenner, Kopfzeile, Punkt als Dezimaltrenner,
Gleitkommazahlen mit sechs Nachkommastellen. Gleiche Zeilen ergeben
byte-identische Dateien.

Funktionen
----------
format_value(value) -> str
write_csv(path, header, rows) -> Path
"""

from __future__ import annotations

import csv
import io
import logging
import math
import numbers
import tempfile
from pathlib import Path
from threading import RLock
from typing import Any, Final, Iterable, Sequence

from ..core.models import ChannelSlamError

__all__ = ["OutputLockedError", "format_value", "write_csv"]


class OutputLockedError(ChannelSlamError):
    """Zieldatei oder -verzeichnis ist nicht beschreibbar."""


_LOGGER: Final[logging.Logger] = logging.getLogger("channel_slam.export.csv_export")

_SAVE_LOCK: Final[RLock] = RLock()

_FLOAT_DIGITS: Final[int] = 6


def format_value(value: Any) -> str:
    """Einheitliche Textdarstellung; ``nan`` für fehlende Gleitkommawerte."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(value)
    if isinstance(value, float) or hasattr(value, "__float__"):
        number = float(value)
        if math.isnan(number):
            return "nan"
        if math.isinf(number):
            return "inf" if number > 0 else "-inf"
        text = f"{number:.{_FLOAT_DIGITS}f}"
        return "0.000000" if text == "-0.000000" else text
    return str(value)


def _ensure_writeable(target: Path) -> None:
    if not target.exists():
        if not target.parent.exists():
            raise FileNotFoundError(str(target.parent))
        if not target.parent.is_dir():
            raise OutputLockedError(f"{target.parent} ist kein Verzeichnis")
        return
    try:
        with target.open("a", encoding="utf-8"):
            pass
    except OSError as exc:
        raise OutputLockedError(f"Datei {target} ist gesperrt oder schreibgeschützt") from exc


def _atomic_write(data: str, target: Path) -> None:
    with tempfile.NamedTemporaryFile(
        mode="w",
        encoding="utf-8",
        newline="",
        dir=str(target.parent),
        delete=False,
        suffix=".tmp",
    ) as tmp:
        tmp.write(data)
        tmp_path = Path(tmp.name)
    tmp_path.replace(target)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Schreibt *rows* unter *header* atomar nach *path*.

    Raises
    ------
    FileNotFoundError
        Zielverzeichnis existiert nicht.
    OutputLockedError
        Ziel nicht beschreibbar.
    """
    path = Path(path)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"Zeile hat {len(row)} Spalten, erwartet {len(header)}")
        writer.writerow([format_value(v) for v in row])
        count += 1

    with _SAVE_LOCK:
        _ensure_writeable(path)
        try:
            _atomic_write(buffer.getvalue(), path)
        except OSError as exc:
            _LOGGER.exception("Schreibfehler für %s", path)
            raise OutputLockedError(f"Konnte {path} nicht schreiben") from exc
    _LOGGER.debug("%s: %d Zeilen geschrieben", path.name, count)
    return path
