"""Seeded, splittable random streams.

Every stochastic routine receives an integer root seed plus a path of keys
(strings or ints) naming its role, e.g. ``stream(seed, "spectrum", trial)``.
Streams are Philox (counter-based) generators keyed by a ``SeedSequence``
whose spawn key encodes the path, so the draws for a given path never depend
on how many other streams exist or which worker runs them.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "split_key"]


def split_key(*path) -> tuple[int, ...]:
    out = []
    for p in path:
        if isinstance(p, (int, np.integer)):
            out.append(int(p) & 0xFFFFFFFF)
        else:
            out.append(zlib.crc32(str(p).encode()))
    return tuple(out)


def stream(seed: int, *path) -> np.random.Generator:
    """Return an independent generator for ``(seed, *path)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=split_key(*path))
    return np.random.Generator(np.random.Philox(ss))
