import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collab_topm.central import beta_radius, central_approx_btm, central_approx_top, lucb
from collab_topm.core import Instance, gaps, is_eps_top
from collab_topm.errors import InsufficientBudget, InvalidParams

THREE = Instance([0.9, 0.5, 0.1])
DET = Instance([0.999999, 0.000001])


def rng(seed):
    return np.random.Generator(np.random.Philox(seed))


class TestBetaRadius:
    def test_reference_value(self):
        assert beta_radius(1, 10, 10, 0.1) == pytest.approx(2.649401263425237, rel=1e-12)

    def test_doubling_pulls_halves_square(self):
        r1, r2 = beta_radius(3, 50, 8, 0.05), beta_radius(6, 50, 8, 0.05)
        assert r2 * r2 == pytest.approx(r1 * r1 / 2, rel=1e-12)

    def test_vanishes_with_pulls(self):
        assert beta_radius(10**15, 10, 10, 0.1) < 1e-6

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(2, 1000), st.floats(1e-6, 0.99))
    def test_monotone(self, u, t, n, delta):
        assert beta_radius(u + 1, t, n, delta) <= beta_radius(u, t, n, delta)
        assert beta_radius(u, t + 1, n, delta) >= beta_radius(u, t, n, delta)


class TestLucb:
    def test_near_deterministic_pair(self):
        hits = sum(lucb(DET, 1, 0.1, 0.1, rng(s)).selected == {0} for s in range(1000))
        assert hits >= 990

    def test_everything_is_eps_top_for_large_eps(self):
        inst = Instance([0.3, 0.6, 0.45, 0.2, 0.8])
        res = lucb(inst, 4, 0.9, 0.1, rng(0))
        assert len(res.selected) == 4

    def test_three_arm_success_and_pull_count(self):
        eps, delta = 0.05, 0.05
        ok, pulls = 0, 0
        for s in range(10_000):
            res = lucb(THREE, 1, eps, delta, rng(s))
            ok += all(is_eps_top(THREE, range(3), i, eps, 1) for i in res.selected)
            pulls += res.pulls
        assert ok / 10_000 >= 0.95
        h_eps = 225 / 16
        assert pulls / 10_000 <= 10 * h_eps * math.log(h_eps / delta)

    def test_stops_with_pulls_on_both_contenders(self):
        res = lucb(THREE, 1, 0.05, 0.05, rng(1))
        assert res.counts.sum() == res.pulls
        assert (res.counts >= 1).all()

    def test_rejects_bad_pivot(self):
        with pytest.raises(InvalidParams):
            lucb(THREE, 3, 0.1, 0.1, rng(0))


class TestCentralApproxTop:
    def test_budget_equal_to_arm_count(self):
        res = central_approx_top(THREE, 2, 3, 0.05, rng(2))
        assert res.counts.tolist() == [1, 1, 1]
        ranked = sorted(range(3), key=lambda i: (-res.sums[i], i))
        assert res.selected == frozenset(ranked[:2])

    def test_insufficient_budget(self):
        with pytest.raises(InsufficientBudget):
            central_approx_top(THREE, 1, 2, 0.05, rng(0))

    @pytest.mark.parametrize("T", [3, 4, 5, 100, 101])
    def test_pull_count_is_exact(self, T):
        res = central_approx_top(THREE, 1, T, 0.05, rng(0))
        assert res.counts.sum() == 3 + 2 * ((T - 3) // 2)

    def test_deterministic_arms(self):
        inst = Instance([0.000001, 0.999999, 0.999999, 0.000001, 0.000001])
        hits = sum(central_approx_top(inst, 2, T, 0.05, rng(s)).selected == {1, 2}
                   for s in range(200) for T in (5, 40))
        assert hits >= 0.99 * 400

    def test_calibrated_budget(self):
        T = 635
        hits = sum(central_approx_top(THREE, 1, T, 0.05, rng(s)).selected == {0} for s in range(10_000))
        assert hits / 10_000 >= 0.95

    def test_mean_accuracy_event(self):
        T, delta, N = 635, 0.05, 10_000
        quarter = gaps(THREE, 1) / 4
        bad = 0
        for s in range(N):
            res = central_approx_top(THREE, 1, T, delta, rng(s))
            bad += bool(np.any(np.abs(res.means - THREE.theta) > quarter))
        assert bad / N <= delta + 3 * math.sqrt(delta * (1 - delta) / N)

    def test_subset_indices_are_global(self):
        inst = Instance([0.2, 0.999999, 0.000001, 0.3, 0.999998])
        res = central_approx_top(inst, 2, 60, 0.05, rng(4), arms=[1, 2, 4])
        assert res.arms.tolist() == [1, 2, 4]
        assert res.selected == {1, 4}


class TestCentralApproxBtm:
    def test_two_arms(self):
        res = central_approx_btm(Instance([0.9, 0.1]), 1, 400, 0.05, rng(0))
        assert res.selected == {1}

    def test_budget_equal_to_arm_count_picks_trailers(self):
        res = central_approx_btm(THREE, 2, 3, 0.05, rng(5))
        ranked = sorted(range(3), key=lambda i: (res.sums[i], i))
        assert res.selected == frozenset(ranked[:2])

    def test_means_are_unflipped(self):
        res = central_approx_btm(THREE, 1, 3000, 0.05, rng(6))
        assert np.all(np.abs(res.means - THREE.theta) < 0.25)
        np.testing.assert_allclose(res.means, res.sums / res.counts)

    def test_flip_twice_identity(self):
        for s in range(20):
            top = central_approx_top(THREE, 1, 200, 0.05, rng(s))
            btm = central_approx_btm(THREE.flipped(), 1, 200, 0.05, rng(s))
            assert top.selected == btm.selected
            assert top.counts.tolist() == btm.counts.tolist()
            np.testing.assert_allclose(btm.means, 1.0 - top.means)
