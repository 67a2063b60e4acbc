"""Named child RNG streams derived from one master seed.

A stream is identified by its path of names (``("explore", 2003)``), so
turning one knob never shifts the draws of an unrelated stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def _word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def child_rng(master_seed: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(_word(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(master_seed: int, *path) -> int:
    return int(child_rng(master_seed, *path).integers(0, 2**63 - 1))
