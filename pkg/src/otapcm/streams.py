"""Seeded, independently keyed random streams.

Every stochastic stage asks for ``stream(seed, *keys)``; keys are ints or
short strings (hashed with CRC-32 so they are stable across processes).
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def stream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [_key(k) for k in keys]))
