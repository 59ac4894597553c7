"""
Deterministische Zufallsströme für reproduzierbare Simulationen.

Jeder Strom wird aus ``SeedSequence([seed, *keys])`` abgeleitet. Gleiche
Schlüssel liefern identische Ziehungen, egal in welcher Reihenfolge oder in
welchem Prozess ein Strom erzeugt wird.
"""

from __future__ import annotations

import enum

import numpy as np

__all__ = ["Stream", "substream", "StreamFactory"]


class Stream(enum.IntEnum):
    MEASUREMENT = 1
    MOTION = 2
    GPS = 3
    VEHICLE_PREDICTION = 4
    CVT_INIT = 5
    PARTITION = 6
    RESAMPLE = 7
    CVT_MERGE = 8


def substream(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("Seed und Schlüssel müssen nichtnegativ sein.")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


class StreamFactory:
    """Bindet den Master-Seed eines Laufs; ``stream(*keys)`` liefert Teilströme."""

    def __init__(self, seed: int) -> None:
        self._seed = int(seed)

    @property
    def seed(self) -> int:
        return self._seed

    def stream(self, *keys: int) -> np.random.Generator:
        return substream(self._seed, *keys)
