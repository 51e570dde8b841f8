"""Per-purpose random streams derived from one master seed.

Every stream is ``PCG64(SeedSequence(master_seed, spawn_key=(purpose, *keys)))``,
so a component (task generation, partitioning, client sampling, minibatch
sampling) can be re-run in isolation and still see the same draws.
"""

from __future__ import annotations

import numpy as np

GENERATOR = "pcg64"

TASK = 0
PARTITION = 1
CLIENT_SAMPLING = 2
BATCH = 3
HOLDOUT = 4


def derive_rng(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), *(int(k) for k in keys)))
    return np.random.Generator(np.random.PCG64(ss))
