from dataclasses import replace

import numpy as np
import pytest

from edgefl import engine, optimizers
from edgefl.engine import OptimizerSpec, RunConfig, TaskSpec
from edgefl.tasks import Shard

from conftest import quadratic_task


def small_config(**kw):
    base = dict(task=TaskSpec(dim=8, n_samples=2000), n_clients=20, clients_per_round=5,
                max_rounds=30, sample_budget=10**9)
    base.update(kw)
    return RunConfig(**base)


def test_all_clients_when_k_equals_k():
    assert list(engine.sample_clients(7, 7, 3, 0)) == list(range(7))


def test_sampling_is_reproducible():
    a = engine.sample_clients(100, 10, 42, 5)
    assert np.array_equal(a, engine.sample_clients(100, 10, 42, 5))
    assert len(set(a.tolist())) == 10


def test_sampling_frequency_is_uniform():
    counts = np.zeros(100)
    for r in range(10_000):
        counts[engine.sample_clients(100, 10, r, 0)] += 1
    assert np.all(np.abs(counts / 10_000 - 0.10) <= 0.015)


def test_zero_gradient_fixed_point():
    cfg = small_config()
    for strategy in optimizers.STRATEGIES:
        c = replace(cfg, optimizer=replace(cfg.optimizer, strategy=strategy, weight_decay=0.0,
                                           momentum=0.9 if strategy == "fedavgm" else 0.0))
        sim = engine.build_simulation(c)
        sim = replace(sim, task=replace(sim.task, optima=np.zeros_like(sim.task.optima)))
        state = engine.initial_state(sim)
        for r in range(3):
            state, rec = engine.run_round(state, sim, r)
            assert np.array_equal(state.params, np.zeros(8))
            assert rec.loss == 0.0


def test_single_client_identity_quadratic_one_round():
    cfg = RunConfig(task=TaskSpec(dim=2, n_samples=5), n_clients=1, clients_per_round=1,
                    local_steps=1, batch_size=5,
                    optimizer=OptimizerSpec(strategy="fedavg", lr=1.0, weight_decay=0.0))
    sim = engine.build_simulation(cfg)
    sim = replace(sim, task=quadratic_task([[3.0, -4.0]], n_samples=5),
                  shards=[Shard(0, np.arange(5))])
    state, rec = engine.run_round(engine.initial_state(sim), sim, 0)
    np.testing.assert_allclose(state.params, [3.0, -4.0])
    assert rec.loss == pytest.approx(12.5)


def test_loss_non_increasing_under_small_step_fedavg():
    cfg = RunConfig(task=TaskSpec(dim=10, heterogeneity=0.0, n_samples=500), n_clients=10,
                    clients_per_round=10, max_rounds=200, sample_budget=10**9,
                    optimizer=OptimizerSpec(strategy="fedavg", lr=1.0, weight_decay=0.0))
    sim = engine.build_simulation(cfg)
    lam_max = max(np.linalg.eigvalsh(a).max() for a in sim.task.curvatures)
    assert cfg.optimizer.lr * cfg.optimizer.client_lr < 2 / lam_max
    losses = [r.loss for r in engine.run_experiment(cfg).records]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_zero_budget_runs_nothing():
    rep = engine.run_experiment(small_config(sample_budget=0))
    assert rep.records == []
    assert rep.summary["rounds"] == 0 and rep.summary["rounds_to_target"] is None


def test_budget_stops_run():
    rep = engine.run_experiment(small_config(sample_budget=500, batch_size=10))
    assert rep.records[-1].samples >= 500
    assert rep.records[-2].samples < 500


def test_runs_are_deterministic():
    a = engine.run_experiment(small_config(task=TaskSpec(kind="logistic", dim=6, n_samples=2000)))
    b = engine.run_experiment(small_config(task=TaskSpec(kind="logistic", dim=6, n_samples=2000)))
    assert a.records == b.records and a.summary == b.summary


def test_threaded_clients_match_serial():
    a = engine.run_experiment(small_config())
    b = engine.run_experiment(small_config(workers=4))
    assert a.records == b.records


def test_round_accounting():
    cfg = small_config(validation_interval=10, batch_size=40)
    sim = engine.build_simulation(cfg)
    rep = engine.run_experiment(cfg)
    total = 0
    for rec in rep.records:
        expected = sum(cfg.local_steps * min(40, sim.shards[c].n_samples) for c in rec.clients)
        assert rec.round_samples == expected
        total += expected
        assert rec.samples == total
        assert rec.granularity == pytest.approx(rec.t_comp / rec.t_comm, rel=1e-15)
        assert rec.t_comp >= 0 and rec.t_comm > 0
        assert (rec.val_loss is not None) == ((rec.round + 1) % 10 == 0)


def test_simulated_clock_uses_slowest_client():
    cfg = small_config(n_clients=4, clients_per_round=4, batch_size=16, max_rounds=1)
    rec = engine.run_experiment(cfg).records[0]
    assert rec.t_comp == pytest.approx(2 * 1.15)
    assert rec.compute_j == pytest.approx(rec.t_comp * 60.0)

    slow = engine.run_experiment(replace(cfg, straggler={2: 3.0})).records[0]
    assert slow.t_comp == pytest.approx(3 * 2 * 1.15)

    mixed = engine.run_experiment(replace(cfg, hardware="a100", hardware_overrides={1: "orin"})).records[0]
    assert mixed.t_comp == pytest.approx(2 * 1.15)
    fast = engine.run_experiment(replace(cfg, hardware="a100")).records[0]
    assert fast.t_comp == pytest.approx(2 * 0.31)
    assert fast.compute_j == pytest.approx(2 * 0.31 * 400.0)


def test_measured_timing_is_positive():
    rec = engine.run_experiment(small_config(timing="measured", max_rounds=2)).records[-1]
    assert 0 < rec.t_comp < 10


def test_rounds_to_target():
    recs = [engine.RoundRecord(i, (), loss, None, 1, 1, 1, 0, 0, 0) for i, loss in enumerate([10, 5, 1.2, 0.9, 2])]
    assert engine.rounds_to_target(recs, 0.1) == 3
    assert engine.rounds_to_target(recs, 0.01) is None
    assert engine.rounds_to_target([], 0.1) is None


def test_divergence_names_round_and_strategy():
    cfg = small_config(task=TaskSpec(dim=4, n_samples=2000, curvature=(50.0, 60.0), scale=1.0),
                       optimizer=OptimizerSpec(strategy="fedavg", lr=1.0, weight_decay=0.0),
                       max_rounds=500)
    with np.errstate(all="ignore"), pytest.raises(optimizers.DivergenceError) as info:
        engine.run_experiment(cfg)
    assert info.value.strategy == "fedavg"
    assert info.value.round_index is not None


def test_config_errors_are_collected():
    cfg = RunConfig(n_clients=5, clients_per_round=9, alpha=0.0, hardware="tpu")
    errs = cfg.errors()
    assert any("clients.per_round" in e and "clients.total" in e for e in errs)
    assert any(e.startswith("partition.alpha") for e in errs)
    assert any(e.startswith("hardware") for e in errs)
    with pytest.raises(engine.ConfigError):
        cfg.validate()


def test_orin_lacks_xl():
    with pytest.raises(engine.ConfigError, match="no step times"):
        RunConfig(model="xl").validate()


def test_compare_uses_grid_hparams():
    reports = engine.compare_strategies(small_config(max_rounds=3))
    assert [r.summary["strategy"] for r in reports] == list(optimizers.STRATEGIES)
    assert reports[1].config.optimizer.momentum == 0.9
    assert reports[0].config.optimizer.lr == 0.01
    assert reports[2].config.optimizer.weight_decay == 0.0
