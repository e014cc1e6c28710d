"""The compiled kernels must match the pure-Python twins draw for draw."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collab_topm import _pykernels

compiled = pytest.importorskip("collab_topm._kernels")


def _lucb_inputs(seed, n, m, pulls):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.01, 0.99, size=n)
    counts = np.ones(n, dtype=np.int64)
    sums = (rng.random(n) < theta).astype(np.int64)
    order = np.lexsort((np.arange(n), -(sums / counts)))
    u = rng.random(pulls)
    return theta, counts, sums, order, u


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    n=st.integers(2, 40),
    data=st.data(),
    flip=st.booleans(),
    eps=st.sampled_from([-1.0, 0.05, 0.3]),
    step=st.sampled_from([1, 2]),
)
def test_lucb_twins_agree(seed, n, data, flip, eps, step):
    m = data.draw(st.integers(1, n - 1))
    pulls = data.draw(st.integers(0, 600))
    theta, counts, sums, order, u = _lucb_inputs(seed, n, m, pulls)
    c1, s1, o1 = counts.copy(), sums.copy(), order.copy()
    c2, s2, o2 = counts.copy(), sums.copy(), order.copy()
    r1 = _pykernels.lucb_run(theta, flip, c1, s1, o1, m, float(n), 0.05, n, step, eps, u)
    r2 = compiled.lucb_run(theta, flip, c2, s2, o2, m, float(n), 0.05, n, step, eps, u)
    assert tuple(r1) == tuple(r2)
    assert c1.tolist() == c2.tolist()
    assert s1.tolist() == s2.tolist()
    assert o1.tolist() == o2.tolist()


def _batch(mod, seed, theta, flip, m, K, rounds, budget, beta, copies, normal_var):
    n = theta.size
    gen = np.random.Generator(np.random.Philox(seed))
    counts = np.zeros((rounds + 1, K, n), dtype=np.int64)
    rewards = np.zeros((rounds + 1, n), dtype=np.int64)
    arms, branch = mod.subset_best_arm_batch(
        gen, theta, flip, 1.0 / m, K, rounds, 0.05, budget, beta, copies, normal_var, counts, rewards
    )
    return arms.tolist(), branch.tolist(), counts.tolist(), rewards.tolist(), gen.random()


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    n=st.integers(2, 24),
    data=st.data(),
    K=st.integers(1, 5),
    rounds=st.integers(1, 4),
    flip=st.booleans(),
    budget=st.sampled_from([0, 3, 50, 2_000, 40_000, 10**9]),
    normal_var=st.sampled_from([1e300, 50.0]),
)
def test_batch_twins_agree(seed, n, data, K, rounds, flip, budget, normal_var):
    m = data.draw(st.integers(1, n))
    theta = np.random.default_rng(seed).uniform(0.05, 0.95, size=n)
    a = _batch(_pykernels, seed, theta, flip, m, K, rounds, budget, 3.0, 25, normal_var)
    b = _batch(compiled, seed, theta, flip, m, K, rounds, budget, 3.0, 25, normal_var)
    assert a == b


def test_batch_twins_agree_on_many_ties():
    theta = np.array([0.5] * 6 + [0.2] * 6)
    for seed in range(5):
        a = _batch(_pykernels, seed, theta, False, 3, 3, 3, 900, 2.0, 40, 1e300)
        b = _batch(compiled, seed, theta, False, 3, 3, 3, 900, 2.0, 40, 1e300)
        assert a == b
