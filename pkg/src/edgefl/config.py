"""YAML run configuration: parsing, defaults, validation, serialization.

Schema (every key optional except where noted)::

    seed: 0                       # master seed for every random stream
    generator: pcg64              # fixed; recorded for reproducibility
    strategy: fedadamw            # fedavg | fedavgm | fedadam | fedadamw
    optimizer: {lr, client_lr, beta1, beta2, tau, weight_decay, momentum,
                weighted_aggregation}
    task: {kind, dim, heterogeneity, n_samples, holdout_fraction,
           curvature: [lo, hi], scale, spread}
    partition: {alpha}
    clients: {total, per_round}
    training: {local_steps, batch_size, sample_budget, max_rounds,
               validation_interval, target_fraction, workers}
    model: small                  # preset name or a mapping of ModelProfile fields
    payload: full_model           # full_model | peft
    hardware: orin                # preset name or mapping
    hardware_overrides: {3: a100} # per-client hardware
    straggler: {7: 1.5}           # per-client compute-time multiplier
    comm: gbit1                   # lte | gbit1 | mapping of CommScenario fields
    wait_s: 0.0
    timing: simulated             # simulated | measured

Optimizer hyperparameters, batch size and round limit default to the
published grid for the configured model (``small`` column for models outside
the grid).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from edgefl import optimizers, seeding
from edgefl.engine import ConfigError, OptimizerSpec, RunConfig, TaskSpec

SECTIONS = {
    "seed", "generator", "strategy", "optimizer", "task", "partition", "clients", "training",
    "model", "payload", "hardware", "hardware_overrides", "straggler", "comm", "wait_s", "timing",
}
TRAINING_KEYS = {"local_steps", "batch_size", "sample_budget", "max_rounds", "validation_interval",
                 "target_fraction", "workers"}


def _grid_model(model) -> str:
    return model if isinstance(model, str) and model in optimizers.HPARAMS else "small"


def _section(raw: dict, key: str, allowed: set, errors: list) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        errors.append(f"{key}: expected a mapping, got {type(sec).__name__}")
        return {}
    for k in sorted(set(sec) - allowed):
        errors.append(f"{key}.{k}: unknown key")
    return {k: v for k, v in sec.items() if k in allowed}


def _coerce(value, kind, name: str, errors: list):
    try:
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
        return value
    except (TypeError, ValueError):
        errors.append(f"{name}: expected {kind.__name__}, got {value!r}")
        return None


def config_from_dict(raw: dict) -> RunConfig:
    """Build and validate a RunConfig; all problems are reported together."""
    if not isinstance(raw, dict):
        raise ConfigError([f"top level: expected a mapping, got {type(raw).__name__}"])
    errors: list[str] = []
    for k in sorted(set(raw) - SECTIONS):
        errors.append(f"{k}: unknown key")
    if raw.get("generator", seeding.GENERATOR) != seeding.GENERATOR:
        errors.append(f"generator: only {seeding.GENERATOR!r} is supported")

    model = raw.get("model", "small")
    grid = _grid_model(model)
    strategy = raw.get("strategy", OptimizerSpec.strategy)

    opt_fields = {f.name: f for f in fields(OptimizerSpec)}
    opt_raw = _section(raw, "optimizer", set(opt_fields) - {"strategy"}, errors)
    opt_kwargs = {"strategy": strategy}
    if strategy in optimizers.STRATEGIES:
        hp = optimizers.default_hparams(strategy, grid)
        opt_kwargs.update(lr=hp["lr"], weight_decay=hp.get("weight_decay", 0.0),
                          momentum=hp.get("momentum", 0.0))
    for k, v in opt_raw.items():
        kind = bool if k == "weighted_aggregation" else float
        opt_kwargs[k] = _coerce(v, kind, f"optimizer.{k}", errors)

    task_fields = {f.name for f in fields(TaskSpec)}
    task_raw = _section(raw, "task", task_fields, errors)
    task_kwargs = {}
    for k, v in task_raw.items():
        if k == "kind":
            task_kwargs[k] = v
        elif k in ("dim", "n_samples"):
            task_kwargs[k] = _coerce(v, int, f"task.{k}", errors)
        elif k == "curvature":
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                errors.append(f"task.curvature: expected [lo, hi], got {v!r}")
            else:
                task_kwargs[k] = tuple(_coerce(c, float, "task.curvature", errors) for c in v)
        else:
            task_kwargs[k] = _coerce(v, float, f"task.{k}", errors)

    part = _section(raw, "partition", {"alpha"}, errors)
    clients = _section(raw, "clients", {"total", "per_round"}, errors)
    training = _section(raw, "training", TRAINING_KEYS, errors)

    kwargs = dict(
        model=model,
        batch_size=optimizers.BATCH_SIZE[grid],
        max_rounds=optimizers.TRAINING_ROUNDS[grid],
    )
    if "alpha" in part:
        kwargs["alpha"] = _coerce(part["alpha"], float, "partition.alpha", errors)
    if "total" in clients:
        kwargs["n_clients"] = _coerce(clients["total"], int, "clients.total", errors)
    if "per_round" in clients:
        kwargs["clients_per_round"] = _coerce(clients["per_round"], int, "clients.per_round", errors)
    for k, v in training.items():
        kind = float if k == "target_fraction" else int
        kwargs[k] = _coerce(v, kind, f"training.{k}", errors)
    for key, kind in (("seed", int), ("wait_s", float)):
        if key in raw:
            kwargs[key] = _coerce(raw[key], kind, key, errors)
    for key in ("hardware", "comm", "timing"):
        if key in raw:
            kwargs[key] = raw[key]
    if "payload" in raw:
        kwargs["payload_mode"] = raw["payload"]
    for key, kind in (("hardware_overrides", None), ("straggler", float)):
        sec = raw.get(key) or {}
        if not isinstance(sec, dict):
            errors.append(f"{key}: expected a mapping of client id to value")
            continue
        out = {}
        for cid, val in sec.items():
            c = _coerce(cid, int, f"{key} client id", errors)
            out[c] = val if kind is None else _coerce(val, kind, f"{key}[{cid}]", errors)
        kwargs[key] = out

    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(task=TaskSpec(**task_kwargs), optimizer=OptimizerSpec(**opt_kwargs), **kwargs)
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError([f"{path}: parse error at {where}: {exc.problem}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: parse error: {exc}"]) from exc
    return config_from_dict(raw if raw is not None else {})


def config_to_dict(cfg: RunConfig) -> dict:
    opt = asdict(cfg.optimizer)
    strategy = opt.pop("strategy")
    task = asdict(cfg.task)
    task["curvature"] = list(task["curvature"])
    return {
        "seed": cfg.seed,
        "generator": seeding.GENERATOR,
        "strategy": strategy,
        "optimizer": opt,
        "task": task,
        "partition": {"alpha": cfg.alpha},
        "clients": {"total": cfg.n_clients, "per_round": cfg.clients_per_round},
        "training": {
            "local_steps": cfg.local_steps,
            "batch_size": cfg.batch_size,
            "sample_budget": cfg.sample_budget,
            "max_rounds": cfg.max_rounds,
            "validation_interval": cfg.validation_interval,
            "target_fraction": cfg.target_fraction,
            "workers": cfg.workers,
        },
        "model": cfg.model,
        "payload": cfg.payload_mode,
        "hardware": cfg.hardware,
        "hardware_overrides": dict(cfg.hardware_overrides),
        "straggler": dict(cfg.straggler),
        "comm": cfg.comm,
        "wait_s": cfg.wait_s,
        "timing": cfg.timing,
    }


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_digest(cfg: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
