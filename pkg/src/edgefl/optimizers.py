"""Client SGD and the server-side strategies FedAvg, FedAvgM, FedAdam, FedAdamW.

The server treats ``g_t = x_t - mean_i(x_i^{t+1})`` as a gradient. All server
updates are element-wise, so the pseudo-gradient can be any float vector.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from edgefl import tasks

STRATEGIES = ("fedavg", "fedavgm", "fedadam", "fedadamw")

# Server hyperparameters per model column of the published grid.
HPARAMS = {
    "small": {
        "fedavg": dict(lr=0.01, weight_decay=0.001, momentum=0.0),
        "fedavgm": dict(lr=0.1, weight_decay=0.001, momentum=0.9),
        "fedadam": dict(lr=0.0005, weight_decay=0.0, beta1=0.9, beta2=0.999),
        "fedadamw": dict(lr=0.0005, weight_decay=0.001, beta1=0.9, beta2=0.999),
    },
    "base": {
        "fedavg": dict(lr=0.001, weight_decay=0.001, momentum=0.0),
        "fedavgm": dict(lr=0.1, weight_decay=0.001, momentum=0.9),
        "fedadam": dict(lr=0.0005, weight_decay=0.0, beta1=0.9, beta2=0.999),
        "fedadamw": dict(lr=0.0005, weight_decay=0.001, beta1=0.9, beta2=0.999),
    },
    "large": {
        "fedavg": dict(lr=0.01, weight_decay=0.001, momentum=0.0),
        "fedavgm": dict(lr=0.1, weight_decay=0.001, momentum=0.9),
        "fedadam": dict(lr=0.0005, weight_decay=0.0, beta1=0.9, beta2=0.999),
        "fedadamw": dict(lr=0.0005, weight_decay=0.001, beta1=0.9, beta2=0.999),
    },
}
BATCH_SIZE = {"small": 30, "base": 20, "large": 10}
TRAINING_ROUNDS = {"small": 1000, "base": 1500, "large": 1500}
CLIENT_LR = 1.0


class DivergenceError(FloatingPointError):
    """A gradient, pseudo-gradient or parameter vector became non-finite."""

    def __init__(self, message: str, *, strategy: str | None = None, round_index: int | None = None,
                 client_id: int | None = None):
        self.strategy = strategy
        self.round_index = round_index
        self.client_id = client_id
        where = []
        if round_index is not None:
            where.append(f"round {round_index}")
        if strategy is not None:
            where.append(f"strategy {strategy}")
        if client_id is not None:
            where.append(f"client {client_id}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class ServerOptState:
    strategy: str
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.0005
    client_lr: float = CLIENT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    tau: float = 1e-6
    weight_decay: float = 0.0
    momentum: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.t < 0:
            raise ValueError("round counter must be >= 0")
        if np.shape(self.m) != np.shape(self.v):
            raise ValueError("m and v must have the same shape")


def init_state(strategy: str, dim: int, **hparams) -> ServerOptState:
    zeros = np.zeros(dim)
    return ServerOptState(strategy=strategy, m=zeros, v=zeros.copy(), **hparams)


def default_hparams(strategy: str, model: str = "small") -> dict:
    """Grid defaults for ``strategy``; models outside the grid fall back to ``small``."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    return dict(HPARAMS.get(model, HPARAMS["small"])[strategy])


@dataclass
class ClientUpdate:
    client_id: int
    params: np.ndarray
    samples: int
    compute_time: float = 0.0
    loss: float = float("nan")  # at the received model, first minibatch
    batch_size: int = 0


def client_local_update(
    x,
    task: tasks.Task,
    shard: tasks.Shard,
    client_lr: float,
    local_steps: int,
    batch_size: int,
    rng: np.random.Generator,
) -> ClientUpdate:
    if local_steps < 1:
        raise ValueError("local_steps must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if shard.n_samples == 0:
        raise ValueError(f"client {shard.client_id} has an empty shard")

    start = time.perf_counter()
    y = np.array(x, dtype=float, copy=True)
    b = min(batch_size, shard.n_samples)
    first_loss = float("nan")
    for step in range(local_steps):
        batch = rng.choice(shard.indices, size=b, replace=False)
        if step == 0:
            first_loss = tasks.loss(task, y, shard, batch)
        g = tasks.grad(task, y, shard, batch)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite local gradient at step {step}", client_id=shard.client_id)
        y = y - client_lr * g
    if not np.all(np.isfinite(y)):
        raise DivergenceError("non-finite client parameters", client_id=shard.client_id)
    return ClientUpdate(
        client_id=shard.client_id,
        params=y,
        samples=local_steps * b,
        compute_time=time.perf_counter() - start,
        loss=first_loss,
        batch_size=b,
    )


def fedavg_aggregate(updates: Sequence[ClientUpdate], weighted: bool = False) -> np.ndarray:
    """Mean of client parameters, accumulated in ascending client-id order."""
    if not updates:
        raise ValueError("no client updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    dims = {np.shape(u.params) for u in ordered}
    if len(dims) != 1:
        raise ValueError(f"client updates have mismatched shapes: {sorted(dims)}")
    total = np.zeros_like(np.asarray(ordered[0].params, dtype=float))
    if weighted:
        n = sum(u.samples for u in ordered)
        for u in ordered:
            total = total + (u.samples / n) * u.params
        return total
    for u in ordered:
        total = total + u.params
    return total / len(ordered)


def pseudo_gradient(x_t, x_avg) -> np.ndarray:
    x_t, x_avg = np.asarray(x_t, dtype=float), np.asarray(x_avg, dtype=float)
    if x_t.shape != x_avg.shape:
        raise ValueError(f"shape mismatch: {x_t.shape} vs {x_avg.shape}")
    return x_t - x_avg


def server_step(state: ServerOptState, x_t, g_t) -> tuple[np.ndarray, ServerOptState]:
    """Apply one server optimizer step; returns new parameters and state."""
    x = np.asarray(x_t, dtype=float)
    g = np.asarray(g_t, dtype=float)
    if not (x.shape == g.shape == np.shape(state.m) == np.shape(state.v)):
        raise ValueError("x, g, m and v must share one shape")
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite pseudo-gradient", strategy=state.strategy, round_index=state.t)

    lr, wd = state.lr, state.weight_decay
    m, v = state.m, state.v
    if state.strategy == "fedavg":
        x_new = x - lr * (g + wd * x)
    elif state.strategy == "fedavgm":
        m = state.momentum * m + (g + wd * x)
        x_new = x - lr * m
    else:
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        x_new = x
        if state.strategy == "fedadamw":
            x_new = x - lr * wd * x
        step = state.t + 1
        m_hat = m / (1 - state.beta1**step)
        v_hat = v / (1 - state.beta2**step)
        x_new = x_new - lr * m_hat / (np.sqrt(v_hat) + state.tau)

    if not np.all(np.isfinite(x_new)):
        raise DivergenceError("non-finite parameters after server step", strategy=state.strategy,
                              round_index=state.t)
    return x_new, replace(state, m=m, v=v, t=state.t + 1)
