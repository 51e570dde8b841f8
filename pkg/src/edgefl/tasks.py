"""Synthetic federated objectives with exact gradients.

Two task families stand in for fine-tuning a language model:

* ``quadratic``: client ``i`` minimises ``0.5 (x - x*_i)^T A_i (x - x*_i)``.
  Every sample on a client shares the client objective, so minibatches only
  determine how many samples are consumed.
* ``logistic``: binary logistic regression (no intercept) over a shared
  feature pool. A sample's label is drawn from ``sigmoid(w* . f + b_i)``
  where ``b_i`` is the bias of the client that owns it, which skews class
  priors across clients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from edgefl import seeding

KINDS = ("quadratic", "logistic")

# Defaults put the problem in the small-gradient regime typical of
# fine-tuning: server Adam steps of 5e-4 cover the distance to the optimum
# in tens of rounds while plain averaging makes slow progress.
DEFAULT_CURVATURE = (1e-3, 1e-2)
DEFAULT_SCALE = 0.003
DEFAULT_SPREAD = 0.2
DEFAULT_N_SAMPLES = 14732
DEFAULT_HOLDOUT_FRACTION = 0.1


@dataclass(frozen=True)
class Shard:
    client_id: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("shard indices must be one-dimensional")
        if np.unique(idx).size != idx.size:
            raise ValueError(f"shard {self.client_id} has duplicate indices")
        object.__setattr__(self, "indices", idx)

    @property
    def n_samples(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other):
        if not isinstance(other, Shard):
            return NotImplemented
        return self.client_id == other.client_id and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.client_id, self.indices.tobytes()))


@dataclass(frozen=True, eq=False)
class Task:
    kind: str
    dim: int
    n_clients: int
    heterogeneity: float
    seed: int
    n_samples: int
    # quadratic
    optima: np.ndarray | None = None  # (K, d)
    curvatures: np.ndarray | None = None  # (K, d, d)
    # logistic
    features: np.ndarray | None = None  # (n_samples + n_holdout, d)
    label_draws: np.ndarray | None = None  # uniforms, one per sample
    true_weights: np.ndarray | None = None
    client_bias: np.ndarray | None = None  # (K,)
    holdout: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def initial_params(self) -> np.ndarray:
        return np.zeros(self.dim)

    def same_as(self, other: "Task") -> bool:
        """Bit-for-bit equality of every array and scalar field."""
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.dtype != b.dtype or a.shape != b.shape:
                    return False
                if a.tobytes() != b.tobytes():
                    return False
            elif a != b:
                return False
        return True


def make_task(
    kind: str,
    dim: int,
    n_clients: int,
    heterogeneity: float,
    seed: int,
    *,
    n_samples: int = DEFAULT_N_SAMPLES,
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION,
    curvature: tuple[float, float] = DEFAULT_CURVATURE,
    scale: float = DEFAULT_SCALE,
    spread: float = DEFAULT_SPREAD,
) -> Task:
    """Build a deterministic synthetic task.

    Client optima (quadratic) or client label biases (logistic) deviate from
    the shared value with standard deviation proportional to
    ``heterogeneity``; ``heterogeneity=0`` gives every client the same
    objective.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown task kind {kind!r}; expected one of {KINDS}")
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim}")
    if int(n_clients) != n_clients or n_clients < 1:
        raise ValueError(f"n_clients must be a positive integer, got {n_clients}")
    if not np.isfinite(heterogeneity) or heterogeneity < 0:
        raise ValueError(f"heterogeneity must be finite and >= 0, got {heterogeneity}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo, hi = curvature
    if not 0 < lo <= hi:
        raise ValueError(f"curvature range must satisfy 0 < lo <= hi, got {curvature}")

    dim, n_clients = int(dim), int(n_clients)
    rng = seeding.derive_rng(seed, seeding.TASK)
    n_holdout = int(round(holdout_fraction * n_samples))
    holdout = np.arange(n_samples, n_samples + n_holdout, dtype=np.int64)
    common = dict(
        kind=kind,
        dim=dim,
        n_clients=n_clients,
        heterogeneity=float(heterogeneity),
        seed=int(seed),
        n_samples=int(n_samples),
        holdout=holdout,
    )

    if kind == "quadratic":
        center = scale * rng.standard_normal(dim)
        optima = center + heterogeneity * spread * scale * rng.standard_normal((n_clients, dim))
        curvatures = np.empty((n_clients, dim, dim))
        for i in range(n_clients):
            q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
            q = q * np.sign(np.diag(r))
            eig = np.exp(rng.uniform(np.log(lo), np.log(hi), dim))
            a = (q * eig) @ q.T
            curvatures[i] = 0.5 * (a + a.T)
        return Task(optima=optima, curvatures=curvatures, **common)

    total = n_samples + n_holdout
    features = rng.standard_normal((total, dim)) / np.sqrt(dim)
    true_weights = 2.0 * rng.standard_normal(dim)
    client_bias = 2.0 * heterogeneity * rng.standard_normal(n_clients)
    label_draws = rng.uniform(size=total)
    return Task(
        features=features,
        label_draws=label_draws,
        true_weights=true_weights,
        client_bias=client_bias,
        **common,
    )


def global_optimum(task: Task) -> np.ndarray:
    """Minimiser of the summed quadratic objective: solves sum_i A_i (x - x*_i) = 0."""
    if task.kind != "quadratic":
        raise ValueError("closed-form optimum exists only for quadratic tasks")
    a_sum = task.curvatures.sum(axis=0)
    rhs = np.einsum("kij,kj->i", task.curvatures, task.optima)
    return np.linalg.solve(a_sum, rhs)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def labels(task: Task, indices: np.ndarray, bias: float) -> np.ndarray:
    logits = task.features[indices] @ task.true_weights + bias
    return (task.label_draws[indices] < _sigmoid(logits)).astype(float)


def _check(task: Task, params, shard: Shard, batch_indices):
    x = np.asarray(params, dtype=float)
    if x.shape != (task.dim,):
        raise ValueError(f"params have shape {x.shape}, task expects ({task.dim},)")
    batch = np.asarray(batch_indices, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("empty batch")
    if not 0 <= shard.client_id < task.n_clients:
        raise ValueError(f"shard client id {shard.client_id} outside [0, {task.n_clients})")
    if not np.isin(batch, shard.indices).all():
        raise ValueError("batch indices must be a subset of the shard indices")
    return x, batch


def _logistic_terms(task: Task, x, batch, bias):
    feats = task.features[batch]
    y = labels(task, batch, bias)
    z = feats @ x
    return feats, y, z


def _bce(z, y):
    # log(1 + exp(z)) - y z, stable for large |z|
    return np.logaddexp(0.0, z) - y * z


def loss(task: Task, params, shard: Shard, batch_indices) -> float:
    """Mean per-sample loss of ``params`` on ``batch_indices`` of ``shard``."""
    x, batch = _check(task, params, shard, batch_indices)
    cid = shard.client_id
    if task.kind == "quadratic":
        diff = x - task.optima[cid]
        return float(0.5 * diff @ task.curvatures[cid] @ diff)
    _, y, z = _logistic_terms(task, x, batch, task.client_bias[cid])
    return float(np.mean(_bce(z, y)))


def grad(task: Task, params, shard: Shard, batch_indices) -> np.ndarray:
    """Exact gradient of :func:`loss`."""
    x, batch = _check(task, params, shard, batch_indices)
    cid = shard.client_id
    if task.kind == "quadratic":
        return task.curvatures[cid] @ (x - task.optima[cid])
    feats, y, z = _logistic_terms(task, x, batch, task.client_bias[cid])
    return feats.T @ (_sigmoid(z) - y) / batch.size


def population_loss(task: Task, params) -> float:
    """Held-out loss: mean objective over all clients (quadratic) or BCE on
    the held-out pool with no client bias (logistic)."""
    x = np.asarray(params, dtype=float)
    if task.kind == "quadratic":
        diff = x - task.optima
        return float(np.mean(0.5 * np.einsum("ki,kij,kj->k", diff, task.curvatures, diff)))
    if task.holdout.size == 0:
        raise ValueError("task has no held-out samples")
    _, y, z = _logistic_terms(task, x, task.holdout, 0.0)
    return float(np.mean(_bce(z, y)))
