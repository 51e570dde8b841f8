"""Quantity-skewed client shards from a symmetric Dirichlet draw."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from edgefl import seeding
from edgefl.tasks import Shard


@dataclass(frozen=True)
class PartitionSpec:
    n_samples: int
    n_clients: int
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.n_samples < self.n_clients:
            raise ValueError(f"n_samples ({self.n_samples}) must be >= n_clients ({self.n_clients})")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"Dirichlet alpha must be > 0, got {self.alpha}")


def dirichlet_proportions(n_clients: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    # Dirichlet(alpha * 1_K) as normalised Gamma(alpha, 1) draws.
    g = rng.gamma(alpha, 1.0, size=n_clients)
    total = g.sum()
    if not total > 0:
        # every draw underflowed (tiny alpha): all mass on one client
        g = np.zeros(n_clients)
        g[int(np.argmax(rng.random(n_clients)))] = 1.0
        total = 1.0
    return g / total


def dirichlet_partition(spec: PartitionSpec) -> list[Shard]:
    rng = seeding.derive_rng(spec.seed, seeding.PARTITION)
    p = dirichlet_proportions(spec.n_clients, spec.alpha, rng)
    # Shard sizes follow the proportions; which samples land where is a
    # uniform shuffle.
    cuts = np.round(np.cumsum(p)[:-1] * spec.n_samples).astype(np.int64)
    order = rng.permutation(spec.n_samples)
    members = [list(chunk) for chunk in np.split(order, cuts)]

    # Keep every client trainable: an empty shard takes one sample from the
    # currently largest shard (lowest id on ties).
    for c in range(spec.n_clients):
        if not members[c]:
            donor = max(range(spec.n_clients), key=lambda j: (len(members[j]), -j))
            members[c].append(members[donor].pop())

    return [Shard(client_id=c, indices=np.sort(np.asarray(m, dtype=np.int64)))
            for c, m in enumerate(members)]


def shard_sizes(shards: list[Shard]) -> np.ndarray:
    return np.array([s.n_samples for s in shards])


def write_manifest(shards: list[Shard], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["client_id", "n_samples"])
        for s in shards:
            w.writerow([s.client_id, s.n_samples])
    return path
