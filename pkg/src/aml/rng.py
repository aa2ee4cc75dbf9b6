"""Deterministic hierarchical random streams.

Every stream is addressed by the master seed plus a path of integers
(replicate, start, ...), so results do not depend on scheduling order or on
how many workers run them.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.PCG64(seq))


def child_seed(seed: int, *path: int) -> int:
    """A plain integer seed derived from ``(seed, path)``, for handing to another run."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path))
    return int(seq.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
