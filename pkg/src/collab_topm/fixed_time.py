"""Fixed-time collaborative top-m identification.

All algorithms run inside a :class:`~collab_topm.collab.Collab` session over a
subset ``arms`` of global arm indices.  The session enforces the per-agent
budget; ``T`` is the budget the algorithm plans with.  Callers that need
logically parallel copies fork child sessions and join them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .central import central_approx_btm, central_approx_top
from .collab import Collab
from .core import Instance, complexity_h
from .errors import InsufficientBudget, InvalidParams, RoundCapExceeded

# Subset sizes at or below K_eff**10 are handed to the simple algorithm.
_BASE_EXPONENT = 10


@dataclass(frozen=True)
class Certificate:
    """A candidate top-m set with per-arm mean estimates."""

    S: frozenset[int]
    theta_tilde: dict[int, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def derived_gaps(self, arms: Sequence[int]) -> dict[int, float] | None:
        """Gaps implied by the estimates, or None when some estimate is missing."""
        return certificate_gaps(arms, self.S, self.theta_tilde)


def certificate_gaps(arms: Sequence[int], S, theta_tilde: dict[int, float]) -> dict[int, float] | None:
    arms = sorted(int(a) for a in arms)
    S = frozenset(int(a) for a in S)
    comp = [a for a in arms if a not in S]
    if not S or not comp or any(a not in theta_tilde for a in arms):
        return None
    low = min(theta_tilde[a] for a in S)
    high = max(theta_tilde[a] for a in comp)
    return {a: (theta_tilde[a] - high if a in S else low - theta_tilde[a]) for a in arms}


def _arms(ctx: Collab, arms) -> np.ndarray:
    if arms is None:
        return np.arange(ctx.n, dtype=np.int64)
    out = np.unique(np.asarray(arms, dtype=np.int64))
    if out.size and (out[0] < 0 or out[-1] >= ctx.n):
        raise InvalidParams("arm index out of range")
    return out


def _ceil_log2(n: int) -> int:
    return max(1, (int(n) - 1).bit_length())


# ---------------------------------------------------------------------------
# Simple successive accepts and rejects with R + 1 rounds


@dataclass(frozen=True)
class SarSchedule:
    R: int
    T: tuple[int, ...]
    sizes: tuple[int, ...]

    def increments(self) -> list[int]:
        return [self.T[r + 1] - self.T[r] for r in range(self.R + 1)]

    def planned_time(self) -> int:
        return sum(self.sizes[r] * (self.T[r + 1] - self.T[r]) for r in range(self.R + 1))


def _floor_root_power(n: int, r: int, R: int) -> int:
    # Largest k with k**R <= n**(R - r).
    target = n ** (R - r)
    k = int(round(n ** ((R - r) / R)))
    while k ** R > target:
        k -= 1
    while (k + 1) ** R <= target:
        k += 1
    return k


def _phase_budget(n: int, T: int, R: int, r: int) -> int:
    # Largest t with (t (R+1))**R * n**(R+1-r) <= T**R.
    rhs = T ** R
    scale = n ** (R + 1 - r)
    t = int(T / ((R + 1) * n ** ((R + 1 - r) / R)))
    t = max(t, 0)
    while t > 0 and (t * (R + 1)) ** R * scale > rhs:
        t -= 1
    while ((t + 1) * (R + 1)) ** R * scale <= rhs:
        t += 1
    return t


def sar_schedule(n: int, T: int, R: int) -> SarSchedule:
    """Exact integer phase budgets and surviving-set sizes."""
    if n < 1 or R < 1 or T < 0:
        raise InvalidParams("need n >= 1, R >= 1, T >= 0")
    Ts = (0,) + tuple(_phase_budget(n, int(T), R, r) for r in range(1, R + 2))
    sizes = tuple(_floor_root_power(n, r, R) for r in range(R + 1)) + (0,)
    return SarSchedule(R, Ts, sizes)


def simple_min_budget(n: int, R: int | None = None) -> int:
    """A necessary budget for the simple algorithm: the first phase must be non-empty."""
    R = _ceil_log2(n) if R is None else R
    return (R + 1) * n


def collab_top_m_simple(ctx: Collab, arms, m: int, T: int, R: int | None = None) -> Certificate:
    """Successive accepts and rejects in ``R + 1`` rounds.

    In phase r every agent pulls each surviving arm ``T_{r+1} - T_r`` times; the
    arms with the largest empirical gaps are then accepted or rejected.
    """
    arms = _arms(ctx, arms)
    n = arms.size
    if not 0 <= m <= n:
        raise InvalidParams(f"pivot m={m} outside 0..{n}")
    if m == 0 or m == n:
        return Certificate(frozenset(int(a) for a in arms[:m]), {})
    R = _ceil_log2(n) if R is None else int(R)
    sched = sar_schedule(n, T, R)
    if any(inc <= 0 for inc, size in zip(sched.increments(), sched.sizes) if size > 0):
        raise InsufficientBudget(f"budget {T} leaves an empty phase for {n} arms over {R + 1} rounds")
    assert sched.planned_time() <= T
    alive = arms.copy()
    counts = np.zeros(n, dtype=np.int64)
    sums = np.zeros(n, dtype=np.int64)
    pos = {int(a): k for k, a in enumerate(arms)}
    accepted: list[int] = []
    estimates: dict[int, float] = {}
    for r in range(R + 1):
        if alive.size == 0:
            break
        inc = sched.T[r + 1] - sched.T[r]
        rewards = ctx.pull_all_agents(alive, inc)
        ctx.end_round()
        idx = np.array([pos[int(a)] for a in alive], dtype=np.int64)
        counts[idx] += ctx.K * inc
        sums[idx] += rewards
        means = sums[idx] / counts[idx]
        order = np.lexsort((alive, -means))
        m_r = m - len(accepted)
        upper = means[order[m_r - 1]] if m_r >= 1 else math.inf
        lower = means[order[m_r]] if m_r < alive.size else -math.inf
        gaps = np.where(means >= upper, means - lower, upper - means)
        drop = sched.sizes[r] - sched.sizes[r + 1]
        elim = np.lexsort((alive, -gaps))[:drop]
        for k in elim:
            a = int(alive[k])
            estimates[a] = float(means[k])
            if means[k] >= upper:
                accepted.append(a)
        keep = np.ones(alive.size, dtype=bool)
        keep[elim] = False
        alive = alive[keep]
    return Certificate(frozenset(accepted), estimates)


# ---------------------------------------------------------------------------
# Recursive accept/reject with random partitions


@dataclass(frozen=True)
class RunParams:
    R: int
    delta: float
    q: float
    ell: int
    r: int
    a: float
    b: float

    @property
    def accept_on(self) -> bool:
        return self.ell >= 1

    @property
    def reject_on(self) -> bool:
        return self.r >= 1


def _base_rounds(K: int) -> int:
    # Rounds reserved for the simple algorithm on at most K_eff**10 arms.
    return _ceil_log2(max(K, 2) ** _BASE_EXPONENT) + 1


def r_total(n: int, K: int) -> int:
    """Global round bound of the recursive algorithm."""
    ratio = math.log(n) / (_BASE_EXPONENT * math.log(max(K, 2)))
    return max(1, math.ceil(math.log(ratio) / math.log(8 / 7))) + _base_rounds(K)


def run_params(n: int, m: int, K: int, R: int) -> RunParams:
    q = 4 * K * math.sqrt(n * math.log(n * R))
    ell = math.floor((m - q) / K) if m > q else 0
    r = math.floor((n - m - q) / K) if n - m > q else 0
    return RunParams(R, 1.0 / (100 * R), q, max(ell, 0), max(r, 0), m - q / 2, (n - m) - q / 2)


def collab_min_budget(n: int, m: int, K: int) -> int:
    """A budget below which the recursive algorithm raises before pulling."""
    if m == 0 or m == n:
        return 0
    if n <= max(K, 2) ** _BASE_EXPONENT:
        return 2 * simple_min_budget(n)
    p = run_params(n, m, K, r_total(n, K))
    if not (p.accept_on or p.reject_on):
        return 2 * simple_min_budget(n)
    # The agent holding the most arms always runs an active branch.
    return 4 * p.R * math.ceil(n / K)


def collab_top_m(ctx: Collab, arms, m: int, T: int, R: int | None = None,
                 trace: list | None = None) -> Certificate:
    """Recursive accept/reject over random arm partitions, then the simple algorithm.

    Each level is one round: arms are assigned to agents independently and
    uniformly, and every agent runs a local fixed-budget LUCB to accept its
    top arms and another to reject its bottom arms.  When ``trace`` is a list,
    one dict per level is appended with the accepted and rejected sets.
    """
    arms = _arms(ctx, arms)
    n0 = arms.size
    if not 0 <= m <= n0:
        raise InvalidParams(f"pivot m={m} outside 0..{n0}")
    K = ctx.K
    R = r_total(max(n0, 2), K) if R is None else int(R)
    delta = 1.0 / (100 * R)
    per_branch = T // (4 * R)
    base = max(K, 2) ** _BASE_EXPONENT
    coord = ctx.streams.coordinator()
    alive = arms
    m_cur = m
    accepted: list[int] = []
    estimates: dict[int, float] = {}
    level = 0
    while True:
        n = alive.size
        if m_cur == 0 or m_cur == n:
            accepted.extend(int(a) for a in alive[:m_cur])
            return Certificate(frozenset(accepted), estimates)
        if n <= base:
            break
        p = run_params(n, m_cur, K, R)
        if not (p.accept_on or p.reject_on):
            break
        level += 1
        if level > R:
            raise RoundCapExceeded(f"recursion deeper than {R} levels")
        owner = coord.integers(0, K, size=n)
        parts = [alive[owner == i] for i in range(K)]
        for part in parts:
            runs = (p.accept_on and part.size > p.ell) or (p.reject_on and part.size > p.r)
            if runs and per_branch < part.size:
                raise InsufficientBudget(f"local budget {per_branch} below {part.size} arms")
        acc: set[int] = set()
        rej: set[int] = set()
        for i, part in enumerate(parts):
            rng = ctx.streams.agent(i)
            if p.accept_on and part.size > p.ell:
                res = central_approx_top(ctx.instance, p.ell, per_branch, delta / (2 * K), rng, arms=part)
                ctx.record(i, res.arms, res.counts, res.sums)
                acc |= res.selected
                estimates.update(res.mean_map())
            if p.reject_on and part.size > p.r:
                res = central_approx_btm(ctx.instance, p.r, per_branch, delta / (2 * K), rng, arms=part)
                ctx.record(i, res.arms, res.counts, res.sums)
                rej |= res.selected
                estimates.update(res.mean_map())
        ctx.end_round()
        both = acc & rej
        acc -= both
        rej -= both
        if trace is not None:
            trace.append({"level": level, "n": n, "m": m_cur, "acc": frozenset(acc), "rej": frozenset(rej)})
        accepted.extend(sorted(acc))
        m_cur -= len(acc)
        gone = acc | rej
        alive = np.array([a for a in alive if int(a) not in gone], dtype=np.int64)
    cert = collab_top_m_simple(ctx, alive, m_cur, T // 2, R=_ceil_log2(alive.size))
    estimates.update(cert.theta_tilde)
    return Certificate(frozenset(accepted) | cert.S, estimates)


# ---------------------------------------------------------------------------
# Verification and guess-and-verify


def verify_top_m(ctx: Collab, arms, m: int, S, theta_tilde: dict[int, float], gamma: float,
                 T: int) -> frozenset[int] | None:
    """One-round check of a candidate certificate; returns ``S`` or None.

    Arm i is pulled ``ceil(64 gamma / gap_i**2)`` times in total, split
    round-robin across agents.
    """
    if not gamma > 0:
        raise InvalidParams("gamma must be positive")
    arms = _arms(ctx, arms)
    S = frozenset(int(a) for a in S)
    if len(S) != m or not S <= set(arms.tolist()):
        return None
    if len(S) == arms.size:
        return S
    gaps = certificate_gaps(arms, S, theta_tilde)
    if gaps is None or any(not g > 0.0 for g in gaps.values()):
        return None
    need = {a: float(math.ceil(64.0 * gamma / (g * g))) for a, g in gaps.items()}
    if sum(need.values()) > float(ctx.K) * float(T):
        return None
    K = ctx.K
    per_agent = np.zeros((K, arms.size), dtype=np.int64)
    off = 0
    for k, a in enumerate(arms):
        c = int(need[int(a)])
        base, rem = divmod(c, K)
        per_agent[:, k] = base
        per_agent[(off + np.arange(rem)) % K, k] += 1
        off = (off + c) % K
    sums = np.zeros(arms.size, dtype=np.int64)
    for ag in range(K):
        sums += ctx.pull_many(ag, arms, per_agent[ag])
    ctx.end_round()
    hat = {int(a): float(s) / need[int(a)] for a, s in zip(arms, sums)}
    lhs = min(hat[a] - gaps[a] / 4 for a in S)
    rhs = max(hat[a] + gaps[a] / 4 for a in gaps if a not in S)
    return S if lhs > rhs else None


def aggregate_copies(certs: Sequence[Certificate]) -> tuple[frozenset[int], dict[int, float]]:
    """Plurality set (ties to the lexicographically smallest) and per-arm lower medians."""
    if not certs:
        raise InvalidParams("no certificates to aggregate")
    votes = Counter(c.S for c in certs)
    top = max(votes.values())
    S = min((s for s, v in votes.items() if v == top), key=lambda s: sorted(s))
    arms = sorted(set().union(*(c.theta_tilde.keys() for c in certs)))
    theta = {}
    for a in arms:
        vals = sorted(c.theta_tilde[a] for c in certs if a in c.theta_tilde)
        theta[a] = vals[(len(vals) - 1) // 2]
    return S, theta


def general_levels(T: int) -> list[tuple[int, int, int]]:
    """``(s, per-copy budget, verify budget)`` for every level with a positive copy budget."""
    out = []
    s = 1
    while True:
        b = math.floor(3 * T / (math.pi ** 2 * s * s * 4 ** s))
        if b < 1:
            return out
        out.append((s, b, math.floor(3 * T / (math.pi ** 2 * s * s))))
        s += 1


def collab_top_m_general(ctx: Collab, arms, m: int, T: int) -> Certificate:
    """Guess-and-verify over doubling complexity guesses.

    Level s runs ``4**s`` parallel copies of :func:`collab_top_m`; the plurality
    answer is verified with confidence exponent ``4**s``.  The answer of the
    largest verified level wins.  Copies whose budget is below
    :func:`collab_min_budget` would raise before pulling and are not run.
    """
    arms = _arms(ctx, arms)
    n = arms.size
    if not 1 <= m <= n:
        raise InvalidParams(f"pivot m={m} outside 1..{n}")
    if m == n:
        return Certificate(frozenset(int(a) for a in arms), {})
    levels = general_levels(T)
    floor_budget = collab_min_budget(n, m, ctx.K)
    children = []
    results: dict[int, list[Certificate]] = {}
    for s, b, _ in levels:
        certs = []
        if b >= floor_budget:
            for c in range(4 ** s):
                ch = ctx.fork(b, s, c)
                try:
                    certs.append(collab_top_m(ch, arms, m, b))
                except (InsufficientBudget, RoundCapExceeded):
                    ch.flush()
                children.append(ch)
        results[s] = certs
    ctx.join(children)
    verifiers = []
    answers: dict[int, frozenset[int] | None] = {}
    for s, _, vb in levels:
        if not results[s]:
            answers[s] = None
            continue
        S, theta = aggregate_copies(results[s])
        ch = ctx.fork(vb, s, 4 ** s)
        answers[s] = verify_top_m(ch, arms, m, S, theta, 4 ** s, vb)
        verifiers.append(ch)
    ctx.join(verifiers)
    good = [s for s, a in answers.items() if a is not None]
    if good:
        return Certificate(answers[max(good)], {})
    return Certificate(frozenset(int(a) for a in arms[:m]), {}, ("fallback",))


# ---------------------------------------------------------------------------
# Budget formulas


def _ln_ln(n: int) -> float:
    # ln ln n is below 1 for n < 16; floored at 1 so budgets stay positive.
    return max(1.0, math.log(math.log(n)))


def simple_budget(means: Instance | Sequence[float], m: int, K: int, delta: float = 0.05,
                  c2: float = 8.0) -> int:
    """Budget for the simple algorithm: c2 (H/K) ln n ln(n/delta)."""
    h = complexity_h(means, m)
    n = len(means.theta) if isinstance(means, Instance) else len(means)
    return math.ceil(c2 * h / K * math.log(n) * math.log(n / delta))


def collab_budget(means: Instance | Sequence[float], m: int, K: int, c0: float = 16.0) -> int:
    """Budget for the recursive algorithm: c0 (H/K)(ln(HK) + ln^2 n) ln ln n."""
    h = complexity_h(means, m)
    n = len(means.theta) if isinstance(means, Instance) else len(means)
    return math.ceil(c0 * h / K * (math.log(h * K) + math.log(n) ** 2) * _ln_ln(n))


def general_budget(means: Instance | Sequence[float], m: int, K: int, c0: float = 16.0,
                   c_general: float = 16.0) -> int:
    """Budget for guess-and-verify: ``c_general`` times the recursive budget."""
    return math.ceil(c_general * collab_budget(means, m, K, c0))
