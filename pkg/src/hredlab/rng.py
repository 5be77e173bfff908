"""Seed-addressable random streams.

Each parameter draws from its own generator keyed by ``(seed, name)``, so
adding or reordering parameters never perturbs the values of the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def uniform(seed: int, name: str, shape, low: float, high: float) -> np.ndarray:
    return stream(seed, name).uniform(low, high, size=shape)


def normal(seed: int, name: str, shape, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
    return stream(seed, name).normal(loc, scale, size=shape)
