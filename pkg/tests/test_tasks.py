import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgefl import tasks
from edgefl.tasks import Shard

from conftest import quadratic_task


def full_shard(task, cid=0):
    return Shard(cid, np.arange(task.n_samples))


def test_single_client_optimum_is_client_optimum():
    t = tasks.make_task("quadratic", 2, 1, 0.0, 7)
    np.testing.assert_allclose(tasks.global_optimum(t), t.optima[0], rtol=1e-10, atol=1e-15)


def test_zero_heterogeneity_shares_one_optimum():
    t = tasks.make_task("quadratic", 5, 8, 0.0, 2)
    assert np.all(t.optima == t.optima[0])


def test_same_seed_same_task():
    a = tasks.make_task("quadratic", 4, 100, 1.0, 1)
    b = tasks.make_task("quadratic", 4, 100, 1.0, 1)
    assert a.same_as(b)
    assert not a.same_as(tasks.make_task("quadratic", 4, 100, 1.0, 2))


def test_logistic_determinism():
    a = tasks.make_task("logistic", 6, 5, 1.0, 3, n_samples=200)
    b = tasks.make_task("logistic", 6, 5, 1.0, 3, n_samples=200)
    assert a.same_as(b)
    shard = Shard(2, np.arange(40, 80))
    x = np.linspace(-1, 1, 6)
    assert tasks.loss(a, x, shard, shard.indices) == tasks.loss(b, x, shard, shard.indices)
    assert np.array_equal(tasks.grad(a, x, shard, shard.indices), tasks.grad(b, x, shard, shard.indices))


def test_global_optimum_against_cramer_rule():
    t = tasks.make_task("quadratic", 2, 3, 1.0, 3)
    a = t.curvatures.sum(axis=0)
    b = sum(t.curvatures[i] @ t.optima[i] for i in range(3))
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    expected = np.array([
        (b[0] * a[1, 1] - a[0, 1] * b[1]) / det,
        (a[0, 0] * b[1] - b[0] * a[1, 0]) / det,
    ])
    np.testing.assert_allclose(tasks.global_optimum(t), expected, rtol=1e-9)


def test_curvatures_are_spd():
    t = tasks.make_task("quadratic", 6, 10, 1.0, 0)
    for a in t.curvatures:
        assert np.array_equal(a, a.T)
        assert np.linalg.eigvalsh(a).min() > 0


def test_quadratic_loss_and_grad_examples():
    t = quadratic_task([[1.0, -2.0]])
    shard = full_shard(t)
    opt = t.optima[0]
    assert tasks.loss(t, opt, shard, [0]) == 0.0
    assert np.array_equal(tasks.grad(t, opt, shard, [0]), np.zeros(2))
    x = opt + np.array([3.0, 4.0])
    assert tasks.loss(t, x, shard, [0]) == pytest.approx(12.5)
    np.testing.assert_allclose(tasks.grad(t, x, shard, [0]), [3.0, 4.0])


def test_logistic_zero_weights_give_ln2():
    t = tasks.make_task("logistic", 8, 3, 1.0, 5, n_samples=300)
    shard = Shard(1, np.arange(100, 200))
    assert tasks.loss(t, np.zeros(8), shard, shard.indices) == pytest.approx(np.log(2), abs=1e-12)


def test_batch_outside_shard_rejected():
    t = quadratic_task([[0.0, 0.0]])
    with pytest.raises(ValueError, match="subset"):
        tasks.loss(t, np.zeros(2), Shard(0, np.arange(5)), [7])
    with pytest.raises(ValueError, match="empty"):
        tasks.grad(t, np.zeros(2), Shard(0, np.arange(5)), [])
    with pytest.raises(ValueError, match="shape"):
        tasks.loss(t, np.zeros(3), Shard(0, np.arange(5)), [0])


def test_invalid_arguments():
    with pytest.raises(ValueError):
        tasks.make_task("cubic", 2, 1, 0.0, 0)
    with pytest.raises(ValueError):
        tasks.make_task("quadratic", 0, 1, 0.0, 0)
    with pytest.raises(ValueError):
        tasks.make_task("quadratic", 2, 1, -1.0, 0)
    with pytest.raises(ValueError):
        tasks.make_task("quadratic", 2, 1, 0.0, 0, curvature=(0.0, 1.0))
    with pytest.raises(ValueError, match="duplicate"):
        Shard(0, [1, 1])


def test_population_loss():
    t = quadratic_task([[1.0, 0.0], [-1.0, 0.0]])
    assert tasks.population_loss(t, np.zeros(2)) == pytest.approx(0.5)
    lg = tasks.make_task("logistic", 4, 2, 0.0, 0, n_samples=100)
    assert lg.holdout.size == 10
    assert tasks.population_loss(lg, np.zeros(4)) == pytest.approx(np.log(2))


def fd_grad(task, x, shard, batch, h=1e-5):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (tasks.loss(task, x + e, shard, batch) - tasks.loss(task, x - e, shard, batch)) / (2 * h)
    return g


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(tasks.KINDS),
    dim=st.integers(1, 12),
    seed=st.integers(0, 2**31),
    het=st.floats(0, 3),
)
def test_gradient_matches_finite_differences(kind, dim, seed, het):
    t = tasks.make_task(kind, dim, 4, het, seed, n_samples=120)
    rng = np.random.default_rng(seed)
    cid = int(rng.integers(4))
    shard = Shard(cid, np.arange(cid * 30, cid * 30 + 30))
    batch = rng.choice(shard.indices, size=10, replace=False)
    x = rng.standard_normal(dim)
    g = tasks.grad(t, x, shard, batch)
    fd = fd_grad(t, x, shard, batch)
    assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-12)


@settings(max_examples=30, deadline=None)
@given(dim=st.integers(1, 8), seed=st.integers(0, 2**31),
       x=st.lists(st.floats(-1e6, 1e6), min_size=8, max_size=8))
def test_quadratic_loss_nonnegative_and_finite(dim, seed, x):
    t = tasks.make_task("quadratic", dim, 3, 1.0, seed)
    shard = Shard(1, np.arange(10))
    val = tasks.loss(t, np.array(x[:dim]), shard, [0])
    assert np.isfinite(val) and val >= 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), x=st.lists(st.floats(-1e8, 1e8), min_size=5, max_size=5))
def test_logistic_loss_finite_for_large_params(seed, x):
    t = tasks.make_task("logistic", 5, 2, 1.0, seed, n_samples=50)
    shard = Shard(0, np.arange(25))
    assert np.isfinite(tasks.loss(t, np.array(x), shard, shard.indices))
    assert np.all(np.isfinite(tasks.grad(t, np.array(x), shard, shard.indices)))
