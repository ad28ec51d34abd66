"""Reproducible random streams.

Every random draw in the package goes through :func:`stream`, which keys a
counter-based Philox generator by ``(master seed, *path)``.  Streams with
different paths are statistically independent, and adding replica ``r + 1``
never changes the draws of replica ``r``.
"""
from __future__ import annotations

import numpy as np

# substream tags, kept stable so that outputs stay byte-identical across versions
THRESHOLD_PERMUTATION = 1
STATE_PERMUTATION = 2
WIRING = 3
BRANCHING = 4
REPLICA = 5


def stream(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def replica_seed(seed: int, *path: int) -> int:
    """Derive a 63-bit integer seed for a child experiment."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    hi, lo = (int(v) for v in ss.generate_state(2, dtype=np.uint32))
    return (hi << 31) ^ lo
