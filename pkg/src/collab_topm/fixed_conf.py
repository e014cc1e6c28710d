"""Fixed-confidence collaborative top-m identification by rounds of elimination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collab import Collab
from .errors import InvalidParams, RoundCapExceeded
from .fixed_time import _arms


def fc_eps(r: int) -> float:
    return 2.0 ** -(r + 1)


def fc_target(r: int, n: int, K: int, delta: float) -> int:
    """Cumulative per-agent pulls of each active arm after round ``r``."""
    eps = fc_eps(r)
    return math.ceil(8.0 * math.log(4.0 * n * (r + 1) ** 2 / delta) / (K * eps * eps))


@dataclass(frozen=True)
class FcRound:
    """State at the end of one round; ``active`` are the arms pulled in it."""

    r: int
    eps: float
    pivot: int
    active: tuple[int, ...]
    accepted: tuple[int, ...]
    rejected: tuple[int, ...]
    means: dict[int, float]


@dataclass(frozen=True)
class FcResult:
    S: frozenset[int]
    rounds: tuple[FcRound, ...]


def collab_top_m_fixed_conf(ctx: Collab, arms, m: int, delta: float, round_cap: int | None = None) -> FcResult:
    """Pull every active arm to the round's target, accept or reject by an ``eps_r`` margin, repeat.

    An arm is accepted when its mean beats the ``(m_r + 1)``-th best by more
    than ``eps_r`` and rejected when it trails the ``m_r``-th best by more
    than ``eps_r``; ties in the ranking break by index.  Once the residual
    pivot is 0 (or equals the active count) the rest is rejected (accepted)
    without further pulls.
    """
    if not 0 < delta < 1:
        raise InvalidParams("delta must lie in (0, 1)")
    arms = _arms(ctx, arms)
    n = arms.size
    if not 1 <= m <= n:
        raise InvalidParams(f"pivot m={m} outside 1..{n}")
    cap = ctx.constants.fixed_conf_round_cap if round_cap is None else int(round_cap)
    active = [int(a) for a in arms]
    pivot = m
    accepted: list[int] = []
    counts = {a: 0 for a in active}
    sums = {a: 0 for a in active}
    trace = []
    prev = 0
    r = 0
    while active:
        if pivot == 0 or pivot == len(active):
            if pivot:
                accepted.extend(active)
            break
        if r >= cap:
            raise RoundCapExceeded(f"no decision on {len(active)} arms after {cap} rounds")
        target = fc_target(r, n, ctx.K, delta)
        inc = target - prev
        prev = target
        rewards = ctx.pull_all_agents(active, inc)
        ctx.end_round()
        for a, x in zip(active, rewards):
            counts[a] += ctx.K * inc
            sums[a] += int(x)
        means = {a: sums[a] / counts[a] for a in active}
        ranked = sorted(active, key=lambda a: (-means[a], a))
        eps = fc_eps(r)
        above, below = means[ranked[pivot]], means[ranked[pivot - 1]]
        acc = tuple(a for a in active if means[a] > above + eps)
        rej = tuple(a for a in active if means[a] < below - eps)
        trace.append(FcRound(r, eps, pivot, tuple(active), acc, rej, means))
        accepted.extend(acc)
        gone = set(acc) | set(rej)
        active = [a for a in active if a not in gone]
        pivot -= len(acc)
        r += 1
    return FcResult(frozenset(accepted), tuple(trace))


def fc_round_bound(min_gap: float) -> int:
    """``ceil(log2(4 / min_gap))``."""
    return math.ceil(math.log2(4.0 / min_gap))


def fc_time_bound(h: float, n: int, K: int, delta: float, factor: float = 10.0) -> float:
    """``factor * (H / K) * ln((n / delta) ln H)``."""
    return factor * h / K * math.log(n / delta * math.log(h))


def induction_failures(result: FcResult, top: frozenset[int], gaps: np.ndarray | dict) -> list[str]:
    """Per-round checks that hold on the good concentration event.

    Returns a list of failure descriptions; empty when every round keeps the
    residual pivot equal to the remaining top arms, never accepts a non-top
    arm or rejects a top arm, and drops every arm whose gap is at least
    ``4 eps_r``.
    """
    bad = []
    for rd in result.rounds:
        live = set(rd.active)
        if rd.pivot != len(top & live):
            bad.append(f"round {rd.r}: pivot {rd.pivot} != {len(top & live)}")
        if not set(rd.accepted) <= top or set(rd.rejected) & top:
            bad.append(f"round {rd.r}: wrong decision")
        survivors = live - set(rd.accepted) - set(rd.rejected)
        for a in survivors:
            if gaps[a] >= 4 * rd.eps:
                bad.append(f"round {rd.r}: arm {a} with gap {gaps[a]:.4g} survives")
    return bad
