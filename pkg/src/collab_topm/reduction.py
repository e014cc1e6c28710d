"""Reduction of n arms to O(m) candidates by subsampled best-arm runs.

Each copy keeps every arm with probability ``1/m``, picks its budget from
``{T, T / beta}`` at random, finds the best arm of the subsample by
collaborative successive halving and verifies it.  Arms that win often enough
across many copies form the candidate set.  Batched copies run in a compiled
kernel; a scalar path exists for single copies and cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .collab import Collab, RoundRecord
from .constants import Constants
from .core import complexity_h
from .errors import InsufficientBudget, InvalidParams
from .fixed_time import Certificate, _arms, collab_top_m_general, verify_top_m
from .kernels import subset_best_arm_batch


def halving_rounds(K: int) -> int:
    """Rounds of the best-arm stand-in: ``max(1, ceil(log2 K))``."""
    return max(1, (K - 1).bit_length())


# ---------------------------------------------------------------------------
# Budget functions


@dataclass(frozen=True)
class BudgetFns:
    C_f: float
    C_g: float
    K: int

    @classmethod
    def from_constants(cls, constants: Constants, K: int) -> "BudgetFns":
        return cls(constants.C_f, constants.C_g, K)

    def f(self, means, delta: float, eta: float) -> float:
        """Budget above which the verified best-arm routine should succeed."""
        h = complexity_h(means, 1)
        return self.C_f * h / self.K * math.log(eta * self.K) ** 3 * math.log(len(means) / delta)

    def g(self, means, delta: float) -> float:
        """Budget below which the verified best-arm routine should refuse."""
        h = complexity_h(means, 1)
        return self.C_g * h / self.K * math.log(len(means) / delta)

    def f_fixed_point(self, means, delta: float, T: float) -> float:
        """``f`` with its budget argument resolved by one iteration from ``T``."""
        return self.f(means, delta, self.f(means, delta, T))

    def beta(self, T: float) -> float:
        # Floored at 1 so the reduced budget never exceeds the full one.
        tk = T * self.K
        if tk <= 1:
            return 1.0
        return max(1.0, self.C_f / self.C_g * math.log(tk) ** 3)


def _fixed_point(fn, start: float, steps: int = 50) -> float:
    t = float(start)
    for _ in range(steps):
        nxt = fn(t)
        if abs(nxt - t) <= 1e-9 * max(1.0, t):
            return nxt
        t = nxt
    return t


def subset_budget_threshold(means, m: int, K: int, delta: float, c_A: float) -> float:
    """Smallest T with ``T >= c_A H/(delta K m) ln^6(TK) ln(n/delta)`` (fixed point)."""
    h, n = complexity_h(means, m), len(means)
    return _fixed_point(lambda t: c_A * h / (delta * K * m) * math.log(max(t * K, 3)) ** 6
                        * math.log(n / delta), 1.0)


def reduction_budget_threshold(means, m: int, K: int, delta: float, gamma: int, c_R: float) -> float:
    """Smallest T with ``T >= c_R 4^gamma H/(delta^3 K) ln^6(TK) ln(n/delta)`` (fixed point)."""
    h, n = complexity_h(means, m), len(means)
    return _fixed_point(lambda t: c_R * 4 ** gamma * h / (delta ** 3 * K) * math.log(max(t * K, 3)) ** 6
                        * math.log(n / delta), 1.0)


# ---------------------------------------------------------------------------
# Scalar routines


def best_arm_collab(ctx: Collab, arms, T: int, R: int | None = None) -> Certificate:
    """Collaborative successive halving over at most ``R`` rounds.

    Every round spends ``T // R`` per agent, split evenly over the survivors;
    the empirical top half (rounded up) survives.  Raises
    :class:`InsufficientBudget` if some round gives a survivor no pulls.
    """
    arms = _arms(ctx, arms)
    if arms.size == 0:
        raise InvalidParams("need at least one arm")
    if arms.size == 1:
        return Certificate(frozenset({int(arms[0])}), {})
    R = halving_rounds(ctx.K) if R is None else int(R)
    if R < 1:
        raise InvalidParams("R must be at least 1")
    per_round = int(T) // R
    sizes = []
    s = arms.size
    while s > 1 and len(sizes) < R:
        sizes.append(s)
        s = (s + 1) // 2
    if any(per_round // s == 0 for s in sizes):
        raise InsufficientBudget(f"budget {T} over {R} rounds leaves an arm unpulled")
    counts = {int(a): 0 for a in arms}
    sums = {int(a): 0 for a in arms}
    alive = arms
    winner = -1
    for j, s in enumerate(sizes):
        per_agent = per_round // s
        rewards = ctx.pull_all_agents(alive, per_agent)
        ctx.end_round()
        for a, x in zip(alive, rewards):
            counts[int(a)] += ctx.K * per_agent
            sums[int(a)] += int(x)
        ranked = sorted((int(a) for a in alive), key=lambda a: (-(sums[a] / counts[a]), a))
        if j == len(sizes) - 1:
            winner = ranked[0]
        else:
            alive = np.array(sorted(ranked[: (s + 1) // 2]), dtype=np.int64)
    return Certificate(frozenset({winner}), {a: sums[a] / counts[a] for a in counts})


def best_arm_verified(ctx: Collab, arms, delta: float, eta: int, R: int | None = None) -> int | None:
    """Successive halving on half the budget, then a one-round verification."""
    if not 0 < delta < 1:
        raise InvalidParams("delta must lie in (0, 1)")
    arms = _arms(ctx, arms)
    if arms.size == 0:
        return None
    half = int(eta) // 2
    try:
        cert = best_arm_collab(ctx, arms, half, R)
    except InsufficientBudget:
        return None
    out = verify_top_m(ctx, arms, 1, cert.S, cert.theta_tilde, math.log(arms.size / delta), half)
    return None if out is None else next(iter(out))


def subset_best_arm(ctx: Collab, arms, m: int, delta: float, T: int, beta: float | None = None,
                    R: int | None = None) -> tuple[int | None, int]:
    """One subsample copy; returns ``(arm or None, budget branch)``.

    Branch 0 ran with ``T`` and branch 1 with ``floor(T / beta)``.
    """
    if not 0 < delta < 0.5:
        raise InvalidParams("delta must lie in (0, 1/2)")
    arms = _arms(ctx, arms)
    if beta is None:
        beta = BudgetFns.from_constants(ctx.constants, ctx.K).beta(T)
    coord = ctx.streams.coordinator()
    keep = coord.random(arms.size) < 1.0 / m
    V = arms[keep]
    branch = int(coord.random() >= 0.5)
    tau = int(T) if branch == 0 else math.floor(T / beta)
    return best_arm_verified(ctx, V, delta, tau, R), branch


# ---------------------------------------------------------------------------
# Batched reduction


@dataclass(frozen=True)
class ReductionResult:
    output: frozenset[int] | None
    freqs: np.ndarray
    copies: int
    copy_budget: int
    branch_counts: tuple[int, int]
    branch_hits: np.ndarray

    @property
    def refused(self) -> bool:
        return self.output is None


def copy_count(m: int, delta: float, gamma: int) -> int:
    """``ceil(25 m 4^gamma / delta^2)`` in exact arithmetic."""
    d = Fraction(delta).limit_denominator(10**9)
    return math.ceil(Fraction(25 * m * 4 ** gamma) / (d * d))


def run_subset_copies(ctx: Collab, arms, m: int, delta: float, copy_budget: int, copies: int,
                      R: int | None = None, beta: float | None = None):
    """Run ``copies`` co-scheduled subsample copies in the batch kernel.

    The per-round charges are added to ``ctx`` as parallel rounds.  Returns
    ``(arm per copy with -1 for none, branch per copy)`` over global indices.
    """
    arms = _arms(ctx, arms)
    K = ctx.K
    R = halving_rounds(K) if R is None else int(R)
    if beta is None:
        beta = BudgetFns.from_constants(ctx.constants, K).beta(copy_budget)
    theta = np.ascontiguousarray(ctx.instance.base_theta[arms])
    counts = np.zeros((R + 1, K, arms.size), dtype=np.int64)
    rewards = np.zeros((R + 1, arms.size), dtype=np.int64)
    gen = ctx.streams.batch()
    local, branch = subset_best_arm_batch(
        gen, theta, bool(ctx.instance.flip), 1.0 / m, K, R, float(delta), int(copy_budget), float(beta),
        int(copies), float(ctx.constants.normal_approx_var), counts, rewards,
    )
    records = []
    for j in range(R + 1):
        if not counts[j].any():
            continue
        full_c = np.zeros((K, ctx.n), dtype=np.int64)
        full_r = np.zeros(ctx.n, dtype=np.int64)
        full_c[:, arms] = counts[j]
        full_r[arms] = rewards[j]
        records.append(RoundRecord(full_c, full_r))
    ctx.absorb(records)
    out = np.where(local >= 0, arms[np.maximum(local, 0)], -1)
    return out, branch


def reduction(ctx: Collab, arms, m: int, delta: float, gamma: int, T: int,
              R: int | None = None) -> ReductionResult:
    """Candidate superset of the top ``m`` from ``z`` subsample copies, or a refusal.

    Refuses when the m-th largest win frequency is below ``3/(4em)``;
    otherwise returns every arm with frequency at least ``1/(16em)``.
    """
    if not 0 < delta < 1 / 24:
        raise InvalidParams("delta must lie in (0, 1/24)")
    arms = _arms(ctx, arms)
    if not 1 <= m <= arms.size:
        raise InvalidParams(f"pivot m={m} outside 1..{arms.size}")
    z = copy_count(m, delta, gamma)
    if z > ctx.constants.max_reduction_copies:
        raise InvalidParams(f"{z} copies exceed the cap {ctx.constants.max_reduction_copies}")
    b = int(T) // z
    won, branch = run_subset_copies(ctx, arms, m, delta, b, z, R)
    hits = np.bincount(won[won >= 0], minlength=ctx.n)
    freqs = hits / z
    branch_hits = np.stack([np.bincount(won[(won >= 0) & (branch == k)], minlength=ctx.n) for k in (0, 1)])
    n1 = int(branch.sum())
    mth = np.sort(freqs[arms])[::-1][m - 1]
    out = None
    if mth >= 3 / (4 * math.e * m):
        out = frozenset(int(a) for a in arms if freqs[a] >= 1 / (16 * math.e * m))
    return ReductionResult(out, freqs, z, b, (z - n1, n1), branch_hits)


def reduction_levels(T: int, m: int, cap: int) -> list[tuple[int, int, int]]:
    """``(s, level budget, copies)`` while the per-copy budget stays positive and copies fit the cap."""
    out = []
    s = 1
    while True:
        Ts = math.floor(6 * T / (math.pi ** 2 * s * s))
        z = copy_count(m, 1 / 25, s)
        if z > cap or Ts // z < 1:
            return out
        out.append((s, Ts, z))
        s += 1


def reduction_general(ctx: Collab, arms, m: int, T: int) -> Certificate:
    """Reductions at ``gamma = s`` with budget ``6T/(pi^2 s^2)``, run in parallel.

    Returns the output of the largest accepted level, or the first ``m`` arms
    flagged ``fallback``.  Levels stop once copies would get no budget or
    their count exceeds ``constants.max_reduction_copies`` (flagged
    ``copy-cap`` when that cut a level with positive budget).
    """
    arms = _arms(ctx, arms)
    if not 1 <= m <= arms.size:
        raise InvalidParams(f"pivot m={m} outside 1..{arms.size}")
    cap = ctx.constants.max_reduction_copies
    levels = reduction_levels(T, m, cap)
    flags: tuple[str, ...] = ()
    s_next = len(levels) + 1
    z_next = copy_count(m, 1 / 25, s_next)
    if z_next > cap and math.floor(6 * T / (math.pi ** 2 * s_next ** 2)) // z_next >= 1:
        flags = ("copy-cap",)
    children = []
    best = None
    for s, Ts, _ in levels:
        ch = ctx.fork(Ts, 1000 + s)
        res = reduction(ch, arms, m, 1 / 25, s, Ts)
        children.append(ch)
        if res.output is not None:
            best = res.output
    ctx.join(children)
    if best is None:
        return Certificate(frozenset(int(a) for a in arms[:m]), {}, flags + ("fallback",))
    return Certificate(best, {}, flags)


def collab_top_m_improved(ctx: Collab, arms, m: int, T: int) -> Certificate:
    """Reduce to O(m) candidates with half the budget, then guess-and-verify on them."""
    arms = _arms(ctx, arms)
    first = ctx.fork(T // 2, 1)
    cand = reduction_general(first, arms, m, T // 2)
    ctx.join([first])
    second = ctx.fork(T // 2, 2)
    cert = collab_top_m_general(second, sorted(cand.S), m, T // 2)
    ctx.join([second])
    return Certificate(cert.S, cert.theta_tilde, cand.flags + cert.flags)


def select_mth_arm(ctx: Collab, arms, m: int, T: int) -> int:
    """Arm of rank ``m``: the worst of the identified top ``m``.

    The top-m set uses half the budget; the other half runs the best-arm
    stand-in on reward-flipped arms restricted to that set.
    """
    arms = _arms(ctx, arms)
    if not 1 <= m <= arms.size:
        raise InvalidParams(f"rank m={m} outside 1..{arms.size}")
    if m == arms.size:
        top = [int(a) for a in arms]
    else:
        top = sorted(collab_top_m_improved(ctx, arms, m, T // 2).S)
    child = ctx.fork(T // 2, 3, instance=ctx.instance.flipped())
    cert = best_arm_collab(child, top, T // 2)
    ctx.join([child])
    return next(iter(cert.S))
