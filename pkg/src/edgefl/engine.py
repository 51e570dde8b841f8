"""Round orchestration with a simulated clock.

Clients are in-process; a round samples participants, broadcasts the global
model, runs local SGD on each participant, averages, forms the
pseudo-gradient and applies the server optimizer. Timing comes either from
profile lookups (``simulated``, fully deterministic) or from wall-clock
measurement of the local updates (``measured``).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from edgefl import comm, metrics, optimizers, profiles, seeding, tasks
from edgefl.partition import PartitionSpec, dirichlet_partition

log = logging.getLogger(__name__)

TIMING_MODES = ("simulated", "measured")


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.errors))


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "quadratic"
    dim: int = 50
    heterogeneity: float = 1.0
    n_samples: int = tasks.DEFAULT_N_SAMPLES
    holdout_fraction: float = tasks.DEFAULT_HOLDOUT_FRACTION
    curvature: tuple[float, float] = tasks.DEFAULT_CURVATURE
    scale: float = tasks.DEFAULT_SCALE
    spread: float = tasks.DEFAULT_SPREAD


@dataclass(frozen=True)
class OptimizerSpec:
    strategy: str = "fedadamw"
    lr: float = 0.0005
    client_lr: float = optimizers.CLIENT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    tau: float = 1e-6
    weight_decay: float = 0.001
    momentum: float = 0.0
    weighted_aggregation: bool = False

    def hparams(self) -> dict:
        return dict(lr=self.lr, client_lr=self.client_lr, beta1=self.beta1, beta2=self.beta2,
                    tau=self.tau, weight_decay=self.weight_decay, momentum=self.momentum)


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec = field(default_factory=TaskSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    n_clients: int = 100
    clients_per_round: int = 10
    alpha: float = 1.0
    local_steps: int = 2
    batch_size: int = 30
    sample_budget: int = 60000
    max_rounds: int = 1000
    validation_interval: int = 200
    target_fraction: float = 0.1
    model: object = "small"  # preset name or ModelProfile fields
    payload_mode: str = "full_model"
    hardware: object = "orin"  # preset name or HardwareProfile fields
    hardware_overrides: dict = field(default_factory=dict)  # client id -> preset/fields
    straggler: dict = field(default_factory=dict)  # client id -> compute-time multiplier
    comm: object = "gbit1"  # preset name or CommScenario fields
    wait_s: float = 0.0
    timing: str = "simulated"
    workers: int = 1
    seed: int = 0

    def errors(self) -> list[str]:
        errs = []
        t, o = self.task, self.optimizer
        if t.kind not in tasks.KINDS:
            errs.append(f"task.kind: must be one of {tasks.KINDS}, got {t.kind!r}")
        if not isinstance(t.dim, int) or t.dim < 1:
            errs.append(f"task.dim: must be a positive integer, got {t.dim!r}")
        if not (isinstance(t.heterogeneity, (int, float)) and math.isfinite(t.heterogeneity)
                and t.heterogeneity >= 0):
            errs.append(f"task.heterogeneity: must be finite and >= 0, got {t.heterogeneity!r}")
        if not 0 <= t.holdout_fraction < 1:
            errs.append("task.holdout_fraction: must lie in [0, 1)")
        if len(t.curvature) != 2 or not 0 < t.curvature[0] <= t.curvature[1]:
            errs.append(f"task.curvature: need [lo, hi] with 0 < lo <= hi, got {list(t.curvature)}")
        if o.strategy not in optimizers.STRATEGIES:
            errs.append(f"optimizer.strategy: must be one of {optimizers.STRATEGIES}, got {o.strategy!r}")
        if not (0 <= o.beta1 < 1 and 0 <= o.beta2 < 1):
            errs.append("optimizer.beta1/beta2: must lie in [0, 1)")
        if not o.tau > 0:
            errs.append("optimizer.tau: must be > 0")
        if o.weight_decay < 0:
            errs.append("optimizer.weight_decay: must be >= 0")
        if not o.lr > 0 or not o.client_lr > 0:
            errs.append("optimizer.lr/client_lr: must be > 0")
        if self.n_clients < 1:
            errs.append("clients.total: must be >= 1")
        if not 1 <= self.clients_per_round <= self.n_clients:
            errs.append(f"clients.per_round ({self.clients_per_round}) must satisfy "
                        f"1 <= per_round <= clients.total ({self.n_clients})")
        if t.n_samples < self.n_clients:
            errs.append(f"task.n_samples ({t.n_samples}) must be >= clients.total ({self.n_clients})")
        if not self.alpha > 0:
            errs.append(f"partition.alpha: must be > 0, got {self.alpha}")
        if self.local_steps < 1:
            errs.append("training.local_steps: must be >= 1")
        if self.batch_size < 1:
            errs.append("training.batch_size: must be >= 1")
        if self.sample_budget < 0:
            errs.append("training.sample_budget: must be >= 0")
        if self.max_rounds < 0:
            errs.append("training.max_rounds: must be >= 0")
        if self.validation_interval < 1:
            errs.append("training.validation_interval: must be >= 1")
        if not 0 < self.target_fraction < 1:
            errs.append("training.target_fraction: must lie in (0, 1)")
        if self.payload_mode not in ("full_model", "peft"):
            errs.append(f"payload_mode: must be 'full_model' or 'peft', got {self.payload_mode!r}")
        if self.timing not in TIMING_MODES:
            errs.append(f"timing: must be one of {TIMING_MODES}, got {self.timing!r}")
        if self.workers < 1:
            errs.append("training.workers: must be >= 1")
        if self.wait_s < 0:
            errs.append("wait_s: must be >= 0")
        if self.seed < 0:
            errs.append("seed: must be >= 0")
        for cid, mult in self.straggler.items():
            if not 0 <= int(cid) < self.n_clients or not mult > 0:
                errs.append(f"straggler[{cid}]: client id must exist and multiplier be > 0")
        for cid in self.hardware_overrides:
            if not 0 <= int(cid) < self.n_clients:
                errs.append(f"hardware_overrides[{cid}]: unknown client id")

        model = None
        try:
            model = profiles.model_profile(self.model)
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"model: {exc}")
        hw = [self.hardware, *self.hardware_overrides.values()]
        for spec in hw:
            try:
                prof = profiles.hardware_profile(spec)
                if model is not None and model.name not in prof.step_times:
                    errs.append(f"hardware {prof.name!r}: no step times for model {model.name!r}")
            except (KeyError, TypeError, ValueError) as exc:
                errs.append(f"hardware: {exc}")
        try:
            comm.scenario(self.comm)
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"comm: {exc}")
        return errs

    def validate(self) -> "RunConfig":
        errs = self.errors()
        if errs:
            raise ConfigError(errs)
        return self


def config_for_strategy(config: RunConfig, strategy: str, model: str | None = None) -> RunConfig:
    """Copy of ``config`` using ``strategy`` with its grid-default hyperparameters."""
    if model is None:
        model = config.model if isinstance(config.model, str) else "small"
    hp = optimizers.default_hparams(strategy, model)
    base = OptimizerSpec()
    opt = replace(
        config.optimizer,
        strategy=strategy,
        lr=hp["lr"],
        weight_decay=hp.get("weight_decay", 0.0),
        momentum=hp.get("momentum", 0.0),
        beta1=hp.get("beta1", base.beta1),
        beta2=hp.get("beta2", base.beta2),
    )
    return replace(config, optimizer=opt)


@dataclass
class RoundRecord:
    round: int
    clients: tuple
    loss: float
    val_loss: float | None
    t_comp: float
    t_comm: float
    granularity: float
    comm_j: float
    compute_j: float
    samples: int  # cumulative
    round_samples: int = 0


@dataclass
class EngineState:
    params: np.ndarray
    opt: optimizers.ServerOptState
    round_index: int = 0
    samples: int = 0


@dataclass
class Simulation:
    config: RunConfig
    task: tasks.Task
    shards: list
    model: profiles.ModelProfile
    payload: comm.Payload
    scenario: comm.CommScenario
    hardware: list  # one HardwareProfile per client

    @property
    def strategy(self) -> str:
        return self.config.optimizer.strategy


@dataclass
class RunReport:
    config: RunConfig
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def build_simulation(config: RunConfig) -> Simulation:
    config.validate()
    t = config.task
    task = tasks.make_task(
        t.kind, t.dim, config.n_clients, t.heterogeneity, config.seed,
        n_samples=t.n_samples, holdout_fraction=t.holdout_fraction,
        curvature=tuple(t.curvature), scale=t.scale, spread=t.spread,
    )
    shards = dirichlet_partition(PartitionSpec(t.n_samples, config.n_clients, config.alpha, config.seed))
    model = profiles.model_profile(config.model)
    default_hw = profiles.hardware_profile(config.hardware)
    overrides = {int(k): profiles.hardware_profile(v) for k, v in config.hardware_overrides.items()}
    hardware = [overrides.get(i, default_hw) for i in range(config.n_clients)]
    return Simulation(
        config=config,
        task=task,
        shards=shards,
        model=model,
        payload=comm.payload_bits(model, config.payload_mode),
        scenario=comm.scenario(config.comm),
        hardware=hardware,
    )


def initial_state(sim: Simulation) -> EngineState:
    params = sim.task.initial_params()
    opt = optimizers.init_state(sim.strategy, params.size, **sim.config.optimizer.hparams())
    return EngineState(params=params, opt=opt)


def sample_clients(n_clients: int, k: int, round_index: int, seed: int) -> np.ndarray:
    """Uniform sample of ``k`` distinct client ids, sorted, fixed per (seed, round)."""
    if not 1 <= k <= n_clients:
        raise ValueError(f"need 1 <= k <= K, got k={k}, K={n_clients}")
    rng = seeding.derive_rng(seed, seeding.CLIENT_SAMPLING, round_index)
    return np.sort(rng.choice(n_clients, size=k, replace=False))


def _local_update(sim: Simulation, params, cid: int, round_index: int) -> optimizers.ClientUpdate:
    cfg = sim.config
    rng = seeding.derive_rng(cfg.seed, seeding.BATCH, round_index, cid)
    return optimizers.client_local_update(
        params, sim.task, sim.shards[cid], cfg.optimizer.client_lr, cfg.local_steps, cfg.batch_size, rng)


def run_round(state: EngineState, sim: Simulation, round_index: int) -> tuple[EngineState, RoundRecord]:
    cfg = sim.config
    ids = sample_clients(cfg.n_clients, cfg.clients_per_round, round_index, cfg.seed)
    x_t = state.params

    try:
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                updates = list(pool.map(lambda c: _local_update(sim, x_t, int(c), round_index), ids))
        else:
            updates = [_local_update(sim, x_t, int(c), round_index) for c in ids]
    except optimizers.DivergenceError as exc:
        raise optimizers.DivergenceError(
            "client update diverged", strategy=sim.strategy, round_index=round_index,
            client_id=exc.client_id) from exc
    updates.sort(key=lambda u: u.client_id)

    x_avg = optimizers.fedavg_aggregate(updates, weighted=cfg.optimizer.weighted_aggregation)
    g_t = optimizers.pseudo_gradient(x_t, x_avg)
    try:
        x_next, opt = optimizers.server_step(state.opt, x_t, g_t)
    except optimizers.DivergenceError as exc:
        raise optimizers.DivergenceError(str(exc).split(" (")[0], strategy=sim.strategy,
                                         round_index=round_index) from exc

    # Slowest participant sets the round's compute time.
    times = []
    for u in updates:
        mult = float(cfg.straggler.get(u.client_id, 1.0))
        if cfg.timing == "simulated":
            hw = sim.hardware[u.client_id]
            t = cfg.local_steps * hw.step_time(sim.model.name, u.batch_size)
        else:
            t = u.compute_time
        times.append(t * mult)
    slowest = int(np.argmax(times))
    t_comp = times[slowest]
    t_comm = comm.comm_time(sim.scenario, sim.payload, cfg.wait_s)
    comm_j, _ = comm.round_comm_energy(sim.scenario, sim.payload, len(updates))
    compute_j = t_comp * sim.hardware[updates[slowest].client_id].power_w

    round_samples = sum(u.samples for u in updates)
    val = None
    if (round_index + 1) % cfg.validation_interval == 0:
        val = tasks.population_loss(sim.task, x_next)

    record = RoundRecord(
        round=round_index,
        clients=tuple(int(c) for c in ids),
        loss=float(np.mean([u.loss for u in updates])),
        val_loss=val,
        t_comp=t_comp,
        t_comm=t_comm,
        granularity=metrics.granularity(t_comp, t_comm),
        comm_j=comm_j,
        compute_j=compute_j,
        samples=state.samples + round_samples,
        round_samples=round_samples,
    )
    new_state = EngineState(params=x_next, opt=opt, round_index=round_index + 1,
                            samples=state.samples + round_samples)
    return new_state, record


def rounds_to_target(records: list[RoundRecord], fraction: float) -> int | None:
    """Server updates applied before the training loss first falls to
    ``fraction`` of its round-0 value; None if it never does."""
    if not records:
        return None
    target = fraction * records[0].loss
    for r in records:
        if r.loss <= target:
            return r.round
    return None


def summarize(config: RunConfig, records: list[RoundRecord]) -> dict:
    losses = [r.loss for r in records]
    vals = [r.val_loss for r in records if r.val_loss is not None]
    comm_j = sum(r.comm_j for r in records)
    compute_j = sum(r.compute_j for r in records)
    return {
        "strategy": config.optimizer.strategy,
        "rounds": len(records),
        "samples": records[-1].samples if records else 0,
        "initial_loss": losses[0] if losses else None,
        "final_loss": losses[-1] if losses else None,
        "best_loss": min(losses) if losses else None,
        "final_val_loss": vals[-1] if vals else None,
        "target_fraction": config.target_fraction,
        "rounds_to_target": rounds_to_target(records, config.target_fraction),
        "total_comm_kwh": comm_j / comm.J_PER_KWH,
        "total_compute_kwh": compute_j / comm.J_PER_KWH,
        "total_time_s": sum(r.t_comp + r.t_comm for r in records),
    }


def run_experiment(config: RunConfig) -> RunReport:
    sim = build_simulation(config)
    state = initial_state(sim)
    records = []
    while state.samples < config.sample_budget and state.round_index < config.max_rounds:
        state, rec = run_round(state, sim, state.round_index)
        records.append(rec)
        if rec.round % 100 == 0:
            log.debug("%s round %d loss %.6g", sim.strategy, rec.round, rec.loss)
    return RunReport(config=config, records=records, summary=summarize(config, records))


def compare_strategies(config: RunConfig, strategies=optimizers.STRATEGIES) -> list[RunReport]:
    return [run_experiment(config_for_strategy(config, s)) for s in strategies]
