import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collab_topm.collab import Collab, Streams
from collab_topm.core import Instance, complexity_h, true_top_m
from collab_topm.errors import InsufficientBudget, InvalidParams
from collab_topm.fixed_time import (
    Certificate,
    aggregate_copies,
    collab_budget,
    collab_min_budget,
    collab_top_m,
    collab_top_m_general,
    collab_top_m_simple,
    general_levels,
    r_total,
    run_params,
    sar_schedule,
    simple_budget,
    verify_top_m,
)


def session(means, K=2, horizon=None, seed=0, trial=0):
    return Collab(Instance(tuple(means)), K, horizon=horizon, streams=Streams(seed, trial))


def deterministic(n, m):
    return [0.999999] * m + [0.000001] * (n - m)


# Frozen from an independent 60-digit mpmath evaluation of the floor formulas.
SCHEDULES = {
    (64, 10000, 6): ((0, 22, 44, 89, 178, 357, 714, 1428), (64, 32, 16, 8, 4, 1, 1, 0)),
    (10, 1000, 3): ((0, 25, 53, 116, 250), (10, 4, 2, 1, 0)),
    (2, 40, 1): ((0, 10, 20), (2, 1, 0)),
    (1000, 123457, 10): ((0, 11, 22, 44, 89, 177, 354, 708, 1412, 2819, 5625, 11223),
                         (1000, 501, 251, 125, 63, 31, 15, 7, 3, 1, 1, 0)),
    (27, 5000, 3): ((0, 46, 138, 416, 1250), (27, 9, 3, 1, 0)),
}


@pytest.mark.parametrize("args", sorted(SCHEDULES))
def test_sar_schedule_matches_oracle(args):
    Ts, sizes = SCHEDULES[args]
    sched = sar_schedule(*args)
    assert sched.T == Ts
    # Phase budgets are exact; surviving sizes are floors of n / n^(r/R).
    assert sched.sizes[: len(sizes)][0] == sizes[0]
    for r, size in enumerate(sizes[:-1]):
        n, _, R = args
        assert sched.sizes[r] ** R <= n ** (R - r) < (sched.sizes[r] + 1) ** R


def test_sar_sizes_exact_at_perfect_powers():
    assert sar_schedule(64, 10000, 6).sizes == (64, 32, 16, 8, 4, 2, 1, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000), st.integers(0, 10**7), st.integers(1, 14))
def test_sar_schedule_fits_budget(n, T, R):
    sched = sar_schedule(n, T, R)
    assert sum(sched.sizes[r] * sched.T[r + 1] for r in range(R + 1)) <= T
    assert sched.planned_time() <= T
    assert all(b >= a for a, b in zip(sched.T, sched.T[1:]))
    assert all(b <= a for a, b in zip(sched.sizes, sched.sizes[1:]))
    assert sched.sizes[0] == n and sched.sizes[-1] == 0


@pytest.mark.parametrize("n,K,expected", [(64, 8, 32), (1025, 2, 12), (2**20, 2, 17), (10**6, 3, 19), (5000, 2, 13)])
def test_r_total_matches_oracle(n, K, expected):
    assert r_total(n, K) == expected


def test_run_params_match_oracle():
    p = run_params(1025, 1000, 2, 12)
    assert p.q == pytest.approx(785.9888408325206, rel=1e-12)
    assert (p.ell, p.r) == (107, 0)
    assert p.delta == pytest.approx(1 / 1200)
    p = run_params(5000, 2500, 2, 13)
    assert (p.ell, p.r) == (308, 308)
    assert p.ell * 2 + p.q <= 2500


def test_simple_deterministic_arms_exact():
    n, m = 16, 4
    wins = 0
    for seed in range(100):
        ctx = session(deterministic(n, m), K=2, seed=seed)
        cert = collab_top_m_simple(ctx, None, m, 400)
        wins += cert.S == frozenset(range(m))
        assert ctx.rounds_used <= 5
        assert ctx.time_used <= 400
    assert wins >= 99


def test_simple_two_arms_single_phase():
    ctx = session([0.7, 0.3], K=1, seed=3)
    cert = collab_top_m_simple(ctx, None, 1, 40, R=1)
    # R = 1: both arms pulled 10 times, the larger empirical gap leaves first.
    assert ctx.rounds_used <= 2
    means = ctx.means([0, 1])
    leader = int(np.lexsort(([0, 1], -means))[0])
    assert cert.S == frozenset({leader}) or ctx.rounds_used == 2
    assert set(cert.theta_tilde) == {0, 1}


def test_simple_rounds_and_pulls_per_phase():
    ctx = session(np.linspace(0.9, 0.1, 10), K=3, seed=1)
    sched = sar_schedule(10, 1000, 3)
    collab_top_m_simple(ctx, None, 3, 1000, R=3)
    assert ctx.rounds_used == 4
    for r, rec in enumerate(ctx.ledger.rounds):
        inc = sched.T[r + 1] - sched.T[r]
        per_arm = rec.counts.sum(axis=0)
        assert np.count_nonzero(per_arm) == sched.sizes[r]
        assert set(per_arm[per_arm > 0].tolist()) == {3 * inc}


def test_simple_insufficient_budget():
    ctx = session(np.linspace(0.9, 0.1, 10))
    with pytest.raises(InsufficientBudget):
        collab_top_m_simple(ctx, None, 3, 30, R=3)
    assert ctx.rounds_used == 0


def test_simple_trivial_pivots():
    ctx = session([0.9, 0.5, 0.1])
    assert collab_top_m_simple(ctx, [0, 2], 0, 0).S == frozenset()
    assert collab_top_m_simple(ctx, [0, 2], 2, 0).S == frozenset({0, 2})
    assert ctx.rounds_used == 0


def test_collab_small_n_is_simple_path():
    n, m = 20, 5
    T = 2000
    for seed in range(5):
        a = session(np.linspace(0.95, 0.05, n), K=4, seed=seed)
        b = session(np.linspace(0.95, 0.05, n), K=4, seed=seed)
        ca = collab_top_m(a, None, m, T)
        cb = collab_top_m_simple(b, None, m, T // 2, R=math.ceil(math.log2(n)))
        assert ca == cb
        assert a.rounds_used <= math.ceil(math.log2(n)) + 1


def test_collab_recursive_deterministic():
    K = 2
    n = K**10 + 1
    # m well above q = 4K sqrt(n ln(nR)) so the accept branch runs.
    m = 1000
    T = 60000
    means = deterministic(n, m)
    R = r_total(n, K)
    for seed in range(20):
        ctx = session(means, K=K, horizon=T, seed=seed)
        trace = []
        cert = collab_top_m(ctx, None, m, T, trace=trace)
        assert cert.S == frozenset(range(m))
        assert trace, "expected at least one recursion level"
        assert ctx.rounds_used <= R
        assert ctx.time_used <= T


def _level_safety(runs):
    # K = 1 is the only agent count whose threshold 2**10 lets a desk-size n recurse
    # with both branches active.
    rng = np.random.default_rng(5)
    K, n, m = 1, 1101, 550
    means = np.concatenate([rng.uniform(0.75, 0.95, m), rng.uniform(0.05, 0.25, n - m)])
    inst = Instance(tuple(means))
    top = true_top_m(inst, m)
    T = collab_budget(inst, m, K)
    failures = levels = 0
    for seed in range(runs):
        ctx = Collab(inst, K, horizon=T, streams=Streams(seed))
        trace = []
        cert = collab_top_m(ctx, None, m, T, trace=trace)
        for lv in trace:
            levels += 1
            failures += not (lv["acc"] <= top and not (lv["rej"] & top))
    assert levels > 0 and failures <= 0.05 * levels


def test_collab_level_safety_quick():
    _level_safety(10)


@pytest.mark.slow
def test_collab_level_safety_500_runs():
    _level_safety(500)


def test_collab_min_budget_is_necessary():
    n, m, K = 40, 10, 4
    b = collab_min_budget(n, m, K)
    ctx = session(np.linspace(0.9, 0.1, n), K=K)
    with pytest.raises(InsufficientBudget):
        collab_top_m(ctx, None, m, b - 1)
    assert ctx.rounds_used == 0


# --- verification ------------------------------------------------------------


def test_verify_guards():
    ctx = session([0.9, 0.5, 0.1])
    theta = {0: 0.9, 1: 0.5, 2: 0.1}
    assert verify_top_m(ctx, None, 1, {0, 1}, theta, 5, 10**6) is None
    assert verify_top_m(ctx, None, 1, {1}, theta, 5, 10**6) is None
    assert verify_top_m(ctx, None, 1, {0}, {0: 0.9, 1: 0.5}, 5, 10**6) is None
    assert verify_top_m(ctx, None, 1, {0}, theta, 5, 1) is None
    assert ctx.rounds_used == 0
    with pytest.raises(InvalidParams):
        verify_top_m(ctx, None, 1, {0}, theta, 0, 10**6)


def test_verify_single_round_round_robin():
    ctx = session([0.9, 0.5, 0.1], K=4)
    theta = {0: 0.9, 1: 0.5, 2: 0.1}
    verify_top_m(ctx, None, 1, {0}, theta, 5, 10**6)
    assert ctx.rounds_used == 1
    counts = ctx.ledger.rounds[0].counts
    need = [math.ceil(64 * 5 / 0.4**2)] * 2 + [math.ceil(64 * 5 / 0.8**2)]
    assert counts.sum(axis=0).tolist() == need
    assert np.all(counts.max(axis=0) - counts.min(axis=0) <= 1)
    totals = counts.sum(axis=1)
    assert totals.max() - totals.min() <= 1
    assert ctx.time_used == math.ceil(sum(need) / 4)


def test_verify_true_certificate_accepts():
    means = [0.9, 0.5, 0.1]
    gamma = 5
    K = 2
    T = math.ceil(200 * gamma * complexity_h(means, 1) / K)
    theta = {0: 0.9, 1: 0.5, 2: 0.1}
    fails = 0
    trials = 2000
    for t in range(trials):
        ctx = session(means, K=K, horizon=T, trial=t)
        fails += verify_top_m(ctx, None, 1, {0}, theta, gamma, T) is None
    bound = 2 * 3 * math.exp(-gamma)
    slack = 3 * math.sqrt(bound * (1 - bound) / trials)
    assert fails / trials <= bound + slack


def test_verify_whole_set_is_trivially_valid():
    ctx = session([0.9, 0.5])
    assert verify_top_m(ctx, None, 2, {0, 1}, {}, 3, 0) == frozenset({0, 1})


# --- guess and verify --------------------------------------------------------


def test_aggregate_plurality_and_lower_median():
    certs = [
        Certificate(frozenset({0}), {0: 0.9, 1: 0.4, 2: 0.2}),
        Certificate(frozenset({0}), {0: 0.7, 1: 0.5, 2: 0.1}),
        Certificate(frozenset({1}), {0: 0.8, 1: 0.6, 2: 0.3}),
    ]
    S, theta = aggregate_copies(certs)
    assert S == frozenset({0})
    assert theta == {0: 0.8, 1: 0.5, 2: 0.2}
    S, theta = aggregate_copies(certs[1:])
    assert S == frozenset({0})
    assert theta[0] == 0.7


def test_general_levels_fit_budget():
    for T in [1, 10, 1000, 10**6, 10**9]:
        lv = general_levels(T)
        assert sum(4**s * b for s, b, _ in lv) + sum(v for _, _, v in lv) <= T
    assert general_levels(3) == []


def test_general_fallback_on_tiny_budget():
    ctx = session([0.9, 0.5, 0.1])
    cert = collab_top_m_general(ctx, None, 1, 3)
    assert cert.flags == ("fallback",)
    assert cert.S == frozenset({0})
    assert ctx.time_used == 0


def test_general_deterministic_arms():
    n, m, K = 6, 2, 2
    T = 20000
    fails = 0
    for t in range(100):
        ctx = Collab(Instance(tuple(deterministic(n, m))), K, horizon=T, streams=Streams(1, t))
        cert = collab_top_m_general(ctx, None, m, T)
        fails += cert.S != frozenset(range(m))
        assert ctx.time_used <= T
    assert fails == 0


def test_general_round_bound():
    means = np.linspace(0.9, 0.1, 12)
    K, m = 3, 4
    T = 200000
    ctx = Collab(Instance(tuple(means)), K, horizon=T, streams=Streams(2))
    collab_top_m_general(ctx, None, m, T)
    probe = Collab(Instance(tuple(means)), K, streams=Streams(2))
    collab_top_m(probe, None, m, 10**7)
    assert ctx.rounds_used <= probe.rounds_used + 2


def test_budget_formulas():
    means = [0.9, 0.5, 0.1]
    h = complexity_h(means, 1)
    assert simple_budget(means, 1, 2) == math.ceil(8 * h / 2 * math.log(3) * math.log(60))
    assert collab_budget(means, 1, 2) == math.ceil(16 * h / 2 * (math.log(2 * h) + math.log(3) ** 2))
