"""Single-agent PAC routines: LUCB and its fixed-budget variants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Instance
from .errors import InsufficientBudget, InvalidParams
from .kernels import lucb_run

_CHUNK = 1 << 20


def beta_radius(u: int, t: int, n: int, delta: float) -> float:
    """Confidence radius after ``u`` pulls at step ``t`` among ``n`` arms."""
    tt = float(t)
    tt = tt * tt
    return math.sqrt(math.log(5.0 * float(n) * tt * tt / (4.0 * delta))) * math.sqrt(0.5 / u)


@dataclass(frozen=True)
class LocalResult:
    """Output of a single-agent run over ``arms`` (global indices, ascending).

    ``counts``, ``sums`` and ``means`` are aligned with ``arms``; reward sums
    are expressed in the caller's view of the instance.
    """

    selected: frozenset[int]
    arms: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    steps: int

    @property
    def means(self) -> np.ndarray:
        return self.sums / self.counts

    @property
    def pulls(self) -> int:
        return int(self.counts.sum())

    def mean_map(self) -> dict[int, float]:
        return {int(a): float(x) for a, x in zip(self.arms, self.means)}


def _local(instance: Instance, arms) -> np.ndarray:
    if arms is None:
        return np.arange(instance.n, dtype=np.int64)
    arms = np.unique(np.asarray(arms, dtype=np.int64))
    if arms.size and (arms[0] < 0 or arms[-1] >= instance.n):
        raise InvalidParams("arm index out of range")
    return arms


def _init_pulls(instance: Instance, theta: np.ndarray, rng: np.random.Generator):
    u = rng.random(theta.size)
    sums = ((u < theta).astype(np.int64)) ^ int(instance.flip)
    counts = np.ones(theta.size, dtype=np.int64)
    order = np.lexsort((np.arange(theta.size), -(sums / counts)))
    return counts, sums, order


def _result(arms, m, counts, sums, steps) -> LocalResult:
    order = np.lexsort((np.arange(arms.size), -(sums / counts)))
    return LocalResult(frozenset(int(a) for a in arms[order[:m]]), arms, counts, sums, steps)


def lucb(instance: Instance, m: int, eps: float, delta: float, rng: np.random.Generator,
         arms=None, max_steps: int = 10**9) -> LocalResult:
    """Fixed-confidence LUCB: returns ``m`` arms that are (eps, m)-top w.p. >= 1 - delta.

    Stops as soon as the best lower-set upper bound is within ``eps / 2`` of the
    worst upper-set lower bound; the rule is checked before every pull pair.
    """
    arms = _local(instance, arms)
    n = arms.size
    if not 1 <= m <= n - 1:
        raise InvalidParams(f"pivot m={m} outside 1..{n - 1}")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise InvalidParams("eps and delta must lie in (0, 1)")
    theta = np.ascontiguousarray(instance.base_theta[arms])
    counts, sums, order = _init_pulls(instance, theta, rng)
    t = n + 1
    chunk = 1024
    while True:
        u = rng.random(chunk)
        chunk = min(2 * chunk, _CHUNK)
        t, _, stopped = lucb_run(theta, instance.flip, counts, sums, order, m, float(n), delta, t, 1, eps, u)
        if stopped:
            break
        if t - n > max_steps:
            raise RuntimeError(f"LUCB did not stop within {max_steps} steps")
    return _result(arms, m, counts, sums, t - n - 1)


def central_approx_top(instance: Instance, m: int, T: int, delta: float, rng: np.random.Generator,
                       arms=None) -> LocalResult:
    """Fixed-budget LUCB: at most ``T`` pulls, two per iteration after one pull per arm."""
    arms = _local(instance, arms)
    n = arms.size
    if not 1 <= m <= n - 1:
        raise InvalidParams(f"pivot m={m} outside 1..{n - 1}")
    T = int(T)
    if T < n:
        raise InsufficientBudget(f"budget {T} below the {n} initial pulls")
    theta = np.ascontiguousarray(instance.base_theta[arms])
    counts, sums, order = _init_pulls(instance, theta, rng)
    remaining = 2 * ((T - n) // 2)
    t = n
    steps = 0
    while remaining > 0:
        size = min(remaining, _CHUNK)
        u = rng.random(size)
        t, used, _ = lucb_run(theta, instance.flip, counts, sums, order, m, float(n), delta, t, 2, -1.0, u)
        remaining -= used
        steps += used // 2
    return _result(arms, m, counts, sums, steps)


def central_approx_btm(instance: Instance, m: int, T: int, delta: float, rng: np.random.Generator,
                       arms=None) -> LocalResult:
    """Mirror of :func:`central_approx_top`: picks ``m`` arms from the bottom."""
    res = central_approx_top(instance.flipped(), m, T, delta, rng, arms)
    return LocalResult(res.selected, res.arms, res.counts, res.counts - res.sums, res.steps)
