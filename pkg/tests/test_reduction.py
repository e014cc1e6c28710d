import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collab_topm.collab import Collab, Streams
from collab_topm.constants import DEFAULT
from collab_topm.core import Instance, complexity_h, true_top_m
from collab_topm.errors import InsufficientBudget, InvalidParams
from collab_topm.reduction import (
    BudgetFns,
    best_arm_collab,
    best_arm_verified,
    collab_top_m_improved,
    copy_count,
    halving_rounds,
    reduction,
    reduction_budget_threshold,
    reduction_general,
    reduction_levels,
    run_subset_copies,
    select_mth_arm,
    subset_best_arm,
    subset_budget_threshold,
)


def session(means, K=2, horizon=None, seed=0, trial=0, **consts):
    constants = DEFAULT.override(**consts) if consts else DEFAULT
    return Collab(Instance(tuple(means)), K, horizon=horizon, streams=Streams(seed, trial), constants=constants)


def deterministic(n, m):
    return [0.999999] * m + [0.000001] * (n - m)


def spread(n, lo=0.05, hi=0.95):
    return list(np.linspace(hi, lo, n))


# --- best-arm stand-in ------------------------------------------------------


@pytest.mark.parametrize("K,R", [(1, 1), (2, 1), (3, 2), (4, 2), (8, 3), (9, 4), (64, 6)])
def test_halving_rounds(K, R):
    assert halving_rounds(K) == R


def test_best_arm_singleton_needs_no_pulls():
    ctx = session([0.3, 0.7], K=3)
    cert = best_arm_collab(ctx, [1], 0, R=2)
    assert cert.S == {1}
    assert ctx.time_used == 0 and ctx.rounds_used == 0


def test_best_arm_deterministic_pair():
    for trial in range(200):
        ctx = session(deterministic(2, 1)[::-1], K=2, trial=trial)
        assert best_arm_collab(ctx, None, 4, R=2).S == {1}


def test_best_arm_three_arms_success_rate():
    means = [0.9, 0.5, 0.1]
    K = 4
    T = math.ceil(20 * complexity_h(means, 1) / K)
    wins = 0
    for trial in range(1000):
        ctx = session(means, K=K, horizon=T, trial=trial)
        wins += best_arm_collab(ctx, None, T, R=2).S == {0}
        assert ctx.time_used <= T and ctx.rounds_used <= 2
    assert wins >= 900


def test_best_arm_rounds_and_charges():
    ctx = session(spread(10), K=4, horizon=400)
    best_arm_collab(ctx, None, 400, R=3)
    assert ctx.rounds_used == 3
    # Per-agent load per round is at most T // R.
    assert all(rec.agent_totals.max() <= 400 // 3 for rec in ctx.ledger.rounds)


def test_best_arm_insufficient_budget():
    with pytest.raises(InsufficientBudget):
        best_arm_collab(session(spread(10)), None, 9, R=1)


def test_best_arm_rejects_empty_and_bad_rounds():
    with pytest.raises(InvalidParams):
        best_arm_collab(session([0.5, 0.4]), [], 10)
    with pytest.raises(InvalidParams):
        best_arm_collab(session([0.5, 0.4]), None, 10, R=0)


def test_verified_zero_budget_refuses():
    assert best_arm_verified(session([0.9, 0.1]), None, 0.1, 0) is None


def test_verified_empty_set_refuses():
    assert best_arm_verified(session([0.9, 0.1]), [], 0.1, 10**6) is None


def test_verified_deterministic_generous():
    for trial in range(100):
        ctx = session(deterministic(6, 1)[::-1], K=2, trial=trial)
        assert best_arm_verified(ctx, None, 0.1, 100000) == 5


def test_verified_refuses_below_g():
    means = [0.9, 0.5]
    K = 2
    fns = BudgetFns.from_constants(DEFAULT, K)
    eta = int(fns.g(means, 0.1) / 2)
    refused = sum(best_arm_verified(session(means, K=K, trial=t), None, 0.1, eta) is None for t in range(1000))
    assert refused >= 900


# --- budget functions --------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=12, unique=True),
       st.floats(1e-3, 0.4), st.floats(2.0, 1e9), st.integers(1, 64))
def test_budget_ratio_bound(means, delta, eta, K):
    fns = BudgetFns(20.0, 2.0, K)
    ratio = fns.f(means, delta, eta) / fns.g(means, delta)
    assert ratio <= 10.0 * math.log(eta * K) ** 3 * (1 + 1e-12)


@given(st.floats(3.0, 1e18), st.integers(1, 64))
def test_beta_exceeds_one(TK, K):
    fns = BudgetFns(20.0, 2.0, K)
    assert fns.beta(TK / K) > 1.0


# --- subsample copies --------------------------------------------------------


def test_subset_singleton_pool():
    # m = n keeps about one arm; whenever exactly one arm is kept it is returned.
    seen = 0
    for trial in range(300):
        ctx = session([0.2, 0.4, 0.6], K=1, trial=trial)
        arm, _ = subset_best_arm(ctx, None, 3, 0.1, 10**6)
        if arm is not None:
            seen += 1
    assert seen > 0


def test_subset_rejects_large_delta():
    with pytest.raises(InvalidParams):
        subset_best_arm(session([0.5, 0.4]), None, 1, 0.5, 100)


def test_subset_branches_are_balanced():
    branches = [subset_best_arm(session(spread(8), trial=t), None, 4, 0.1, 10**5)[1] for t in range(400)]
    assert 150 <= sum(branches) <= 250


@pytest.mark.parametrize("m,delta,gamma,z", [(8, 1 / 25, 1, 500_000), (1, 1 / 25, 0, 15_625),
                                             (3, 0.04, 2, 750_000), (2, 0.03, 1, 222_223)])
def test_copy_count(m, delta, gamma, z):
    assert copy_count(m, delta, gamma) == z


def test_scalar_and_batch_frequencies_agree():
    means = spread(12)
    m, K, T, copies = 3, 2, 20000, 3000
    fns = BudgetFns.from_constants(DEFAULT, K)
    beta = fns.beta(T)
    scalar = np.zeros(12)
    for c in range(copies):
        arm, _ = subset_best_arm(session(means, K=K, trial=c), None, m, 0.1, T, beta=beta)
        if arm is not None:
            scalar[arm] += 1
    ctx = session(means, K=K, seed=7)
    won, _ = run_subset_copies(ctx, None, m, 0.1, T, copies, beta=beta)
    batch = np.bincount(won[won >= 0], minlength=12).astype(float)
    p1, p2 = scalar / copies, batch / copies
    sigma = np.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / copies)
    assert np.all(np.abs(p1 - p2) <= 4 * sigma + 1e-3)


def test_batch_charges_fit_budget():
    ctx = session(spread(16), K=4, seed=3)
    run_subset_copies(ctx, None, 4, 0.1, 4000, 2000)
    # Co-scheduled copies add their loads round by round.
    assert 0 < ctx.time_used <= 4000 * 2000
    assert ctx.rounds_used <= halving_rounds(4) + 1


@pytest.mark.parametrize("n,m", [(64, 4), (64, 16), (256, 4), (256, 16)])
def test_coupling_inequality(n, m):
    rng = np.random.default_rng(n + m)
    means = list(rng.uniform(0.05, 0.95, n))
    K, delta, copies = 8, 1 / 25, 100_000
    ctx = session(means, K=K, seed=n * m)
    won, _ = run_subset_copies(ctx, None, m, delta, 10**7, copies)
    freq = np.bincount(won[won >= 0], minlength=n) / copies
    top = sorted(true_top_m(means, m))
    rest = [a for a in range(n) if a not in top]
    sigma = math.sqrt(1 / (4 * copies))
    slack = 1 / (2 * math.e * m) + 2 * delta / m + 3 * 2 * sigma
    assert freq[rest].max() <= freq[top].min() + slack


# --- reduction -----------------------------------------------------------------


def test_reduction_all_refusals_refuse():
    # With m = 1 every copy sees all arms, and a tiny budget refuses each one.
    ctx = session(spread(16), K=2)
    res = reduction(ctx, None, 1, 1 / 25, 0, 15625 * 4)
    assert res.output is None and res.refused
    assert not res.freqs.any()


def test_reduction_delta_guard():
    with pytest.raises(InvalidParams):
        reduction(session(spread(4)), None, 1, 1 / 24, 1, 10**9)


def test_reduction_deterministic_superset():
    means = deterministic(12, 2)
    ctx = session(means, K=2, seed=5)
    # Both budget branches must verify, so the small branch needs T / (z beta) in the thousands.
    T = 10**14
    res = reduction(ctx, None, 2, 1 / 25, 0, T)
    assert res.output is not None and {0, 1} <= res.output
    assert len(res.output) <= math.ceil(16 * math.e * 2)
    assert ctx.time_used <= T


@settings(max_examples=8, deadline=None)
@given(st.integers(4, 40), st.integers(1, 4), st.integers(0, 2**32 - 1), st.sampled_from([10**5, 10**7, 10**9]))
def test_reduction_output_size(n, m, seed, T):
    m = min(m, n - 1)
    means = list(np.random.default_rng(seed).uniform(0.01, 0.99, n))
    ctx = session(means, K=2, seed=seed)
    res = reduction(ctx, None, m, 1 / 25, 0, T)
    assert res.freqs.sum() <= 1.0 + 1e-12
    if res.output is not None:
        assert len(res.output) <= math.ceil(16 * math.e * m)
    assert ctx.time_used <= T


def test_reduction_levels():
    levels = reduction_levels(10**9, 2, 4_000_000)
    assert [s for s, _, _ in levels] == [1, 2, 3]
    assert levels[0] == (1, math.floor(6 * 10**9 / math.pi ** 2), 125_000)
    assert reduction_levels(10, 2, 4_000_000) == []


def test_reduction_general_fallback():
    ctx = session(spread(6), K=2)
    cert = reduction_general(ctx, None, 2, 1000)
    assert cert.S == {0, 1}
    assert "fallback" in cert.flags


def test_reduction_general_deterministic():
    means = deterministic(10, 2)
    T = 10**16
    hits = 0
    for trial in range(50):
        ctx = session(means, K=2, horizon=T, trial=trial, max_reduction_copies=500_000)
        cert = reduction_general(ctx, None, 2, T)
        assert len(cert.S) <= math.ceil(16 * math.e * 2)
        assert ctx.time_used <= T
        hits += {0, 1} <= cert.S and "fallback" not in cert.flags
    assert hits >= 50


def test_reduction_general_flags_copy_cap():
    ctx = session(deterministic(6, 1), K=2, max_reduction_copies=70_000)
    cert = reduction_general(ctx, None, 1, 10**12)
    assert "copy-cap" in cert.flags


def test_improved_deterministic():
    means = deterministic(10, 3)
    T = 10**10
    for trial in range(10):
        ctx = session(means, K=2, horizon=T, trial=trial, max_reduction_copies=800_000)
        assert collab_top_m_improved(ctx, None, 3, T).S == {0, 1, 2}
        assert ctx.time_used <= T


def test_improved_best_arm():
    for trial in range(20):
        ctx = session([0.9, 0.1], K=2, trial=trial, max_reduction_copies=100_000)
        assert collab_top_m_improved(ctx, None, 1, 10**9).S == {0}


def test_select_middle_arm():
    hits = 0
    T = 10**9
    for trial in range(1000):
        ctx = session([0.9, 0.5, 0.1], K=4, horizon=T, trial=trial, max_reduction_copies=125_000)
        hits += select_mth_arm(ctx, None, 2, T) == 1
        assert ctx.time_used <= T
    assert hits >= 950


def test_select_first_is_best():
    for trial in range(20):
        ctx = session([0.2, 0.9, 0.5], K=2, trial=trial, max_reduction_copies=100_000)
        assert select_mth_arm(ctx, None, 1, 10**11) == 1


def test_select_last_is_worst():
    for trial in range(50):
        ctx = session([0.2, 0.9, 0.5, 0.7], K=2, trial=trial)
        assert select_mth_arm(ctx, None, 4, 10**5) == 0


def test_select_rank_guard():
    with pytest.raises(InvalidParams):
        select_mth_arm(session([0.5, 0.4]), None, 3, 100)


def test_thresholds_accept_instances():
    means = spread(10)
    inst = Instance(tuple(means))
    assert len(inst) == 10
    assert reduction_budget_threshold(inst, 2, 4, 1 / 25, 0, 1.0) == reduction_budget_threshold(means, 2, 4, 1 / 25, 0, 1.0)
    assert subset_budget_threshold(inst, 2, 4, 0.1, 1.0) == subset_budget_threshold(means, 2, 4, 0.1, 1.0)
    fns = BudgetFns.from_constants(DEFAULT, 4)
    assert fns.f(inst, 0.1, 100) == fns.f(means, 0.1, 100)
