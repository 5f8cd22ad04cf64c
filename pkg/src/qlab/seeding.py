"""Deterministic derivation of independent random streams from a master seed."""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def substream(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *keys)``.

    Keys may be ints or short string tags; the same address always yields the
    same stream, and distinct addresses are statistically independent.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys)))


def derive_seed(seed: int, *keys) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
