"""Seed fan-out. Every random draw in the package goes through :func:`stream`.

Streams are Philox generators keyed by ``(seed, *labels)``, so adding a new
consumer never shifts the draws of an existing one.
"""
from __future__ import annotations

import zlib
from fractions import Fraction

import numpy as np


def _key(label) -> int:
    if isinstance(label, int):
        return label
    return zlib.crc32(str(label).encode())


def stream(seed: int, *labels) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(x) for x in labels))
    return np.random.Generator(np.random.Philox(seq))


def uniform_money(gen: np.random.Generator, lo, hi, digits: int = 2) -> Fraction:
    """Uniform draw on the grid ``10**-digits`` inside ``[lo, hi]``, returned exactly."""
    scale = 10 ** digits
    a = int(Fraction(lo) * scale)
    b = int(Fraction(hi) * scale)
    return Fraction(int(gen.integers(a, b + 1)), scale)
