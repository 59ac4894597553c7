# tests/test_csv_export.py
from __future__ import annotations

import math

import numpy as np
import pytest

from channel_slam.export.csv_export import OutputLockedError, format_value, write_csv


@pytest.mark.parametrize(
    "value, expected",
    [
        (None, ""),
        (True, "true"),
        (3, "3"),
        (np.int64(12), "12"),
        (1.5, "1.500000"),
        (np.float64(2.0 / 3.0), "0.666667"),
        (-1e-9, "0.000000"),
        (math.nan, "nan"),
        (math.inf, "inf"),
        ("vehicle", "vehicle"),
    ],
)
def test_format_value(value, expected):
    assert format_value(value) == expected


def test_write_csv_content(tmp_path):
    target = write_csv(tmp_path / "out.csv", ("a", "b"), [(1, 0.25), ("x", None)])
    assert target.read_bytes() == b"a,b\n1,0.250000\nx,\n"
    assert list(tmp_path.iterdir()) == [target]  # keine .tmp-Reste


def test_write_csv_overwrites(tmp_path):
    path = tmp_path / "out.csv"
    write_csv(path, ("a",), [(1,)])
    write_csv(path, ("a",), [(2,)])
    assert path.read_text(encoding="utf-8") == "a\n2\n"


def test_write_csv_column_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "out.csv", ("a", "b"), [(1,)])


def test_write_csv_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        write_csv(tmp_path / "fehlt" / "out.csv", ("a",), [])


def test_write_csv_parent_is_file(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(OutputLockedError):
        write_csv(blocker / "out.csv", ("a",), [])
