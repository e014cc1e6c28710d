"""Arm models, sampling, and the instance-complexity calculus.

Every function that takes ``means`` accepts either an :class:`Instance` or a
plain sequence of Bernoulli means.  Ranking is by mean, descending, with ties
broken by the smaller index.  Pivots are 1-based ranks: ``m = 1`` separates the
best arm from the rest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import DegeneratePivot, InvalidParams

# Means closer than this to 0 or 1 are rejected.
BOUNDARY_TOL = 1e-9


class RewardModel(Protocol):
    """What an algorithm may do with an instance: draw reward sums."""

    n: int

    def sample_sums(self, rng: np.random.Generator, arms: np.ndarray, counts: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True)
class Instance:
    """Bernoulli arms with fixed means, optionally viewed with rewards flipped.

    The flipped view returns ``1 - x`` for every sample ``x``.  It reuses the
    draws of the base view, so flipping twice gives back identical samples.
    """

    means: tuple[float, ...]
    m: int | None = None
    flip: bool = False
    _base: np.ndarray = field(init=False, repr=False, compare=False)
    _theta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        base = np.array(self.means, dtype=np.float64)
        if base.ndim != 1 or base.size < 2:
            raise InvalidParams("an instance needs at least two arms")
        if not np.all((base >= BOUNDARY_TOL) & (base <= 1.0 - BOUNDARY_TOL)):
            raise InvalidParams("every mean must lie strictly inside (0, 1)")
        if self.m is not None and not 1 <= self.m <= base.size:
            raise InvalidParams(f"pivot m={self.m} outside 1..{base.size}")
        object.__setattr__(self, "means", tuple(float(x) for x in base))
        base.setflags(write=False)
        theta = 1.0 - base if self.flip else base.copy()
        theta.setflags(write=False)
        object.__setattr__(self, "_base", base)
        object.__setattr__(self, "_theta", theta)

    @property
    def n(self) -> int:
        return self._base.size

    def __len__(self) -> int:
        return self._base.size

    @property
    def theta(self) -> np.ndarray:
        """Effective means of this view (read-only)."""
        return self._theta

    @property
    def base_theta(self) -> np.ndarray:
        """Means of the unflipped view; samplers draw against these."""
        return self._base

    def flipped(self) -> "Instance":
        return Instance(self.means, self.m, not self.flip)

    def with_pivot(self, m: int | None) -> "Instance":
        return Instance(self.means, m, self.flip)

    def sample_sums(self, rng: np.random.Generator, arms: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """Reward sums of ``counts[k]`` pulls of arm ``arms[k]``, drawn in order."""
        counts = np.asarray(counts, dtype=np.int64)
        sums = rng.binomial(counts, self._base[np.asarray(arms, dtype=np.int64)])
        sums = np.asarray(sums, dtype=np.int64)
        return counts - sums if self.flip else sums

    def to_json(self) -> str:
        return json.dumps({"means": [float(x) for x in self._theta], "m": self.m})

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        obj = json.loads(text)
        return cls(tuple(obj["means"]), obj.get("m"))


def _as_means(means: Instance | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(means, Instance):
        return means.theta
    return np.asarray(means, dtype=np.float64)


def ranking(means: Instance | Sequence[float] | np.ndarray) -> np.ndarray:
    """Arm indices sorted by mean descending, ties by smaller index."""
    theta = _as_means(means)
    return np.lexsort((np.arange(theta.size), -theta))


def _pivot_values(theta: np.ndarray, m: int) -> tuple[float, float]:
    n = theta.size
    if not 1 <= m <= n - 1:
        raise InvalidParams(f"pivot m={m} outside 1..{n - 1}")
    order = ranking(theta)
    upper, lower = float(theta[order[m - 1]]), float(theta[order[m]])
    if not upper > lower:
        raise DegeneratePivot(f"mean at rank {m} ties rank {m + 1}")
    return upper, lower


def gaps(means: Instance | Sequence[float] | np.ndarray, m: int) -> np.ndarray:
    """All gaps at pivot ``m``: distance from each mean to the pivot boundary."""
    theta = _as_means(means)
    upper, lower = _pivot_values(theta, m)
    return np.where(theta >= upper, theta - lower, upper - theta)


def gap(means: Instance | Sequence[float] | np.ndarray, i: int, m: int) -> float:
    theta = _as_means(means)
    if not 0 <= i < theta.size:
        raise InvalidParams(f"arm {i} out of range")
    return float(gaps(theta, m)[i])


def complexity_h(means: Instance | Sequence[float] | np.ndarray, m: int) -> float:
    """Sum of inverse squared gaps at pivot ``m``."""
    g = gaps(means, m)
    return float(np.sum(1.0 / (g * g)))


def complexity_h_trunc(means: Instance | Sequence[float] | np.ndarray, m: int, eps: float) -> float:
    """Like :func:`complexity_h` but with every gap floored at ``eps``."""
    if not 0.0 < eps <= 1.0:
        raise InvalidParams("eps must lie in (0, 1]")
    g = np.maximum(gaps(means, m), eps)
    return float(np.sum(1.0 / (g * g)))


def complexity_h_bar(means: Instance | Sequence[float] | np.ndarray, m: int) -> float:
    """Complexity of selecting the arm of rank ``m``: distances to that arm's mean."""
    theta = _as_means(means)
    n = theta.size
    if not 1 <= m <= n:
        raise InvalidParams(f"rank m={m} outside 1..{n}")
    order = ranking(theta)
    target = theta[order[m - 1]]
    if (m > 1 and not theta[order[m - 2]] > target) or (m < n and not target > theta[order[m]]):
        raise DegeneratePivot(f"mean at rank {m} is not unique")
    d = np.delete(theta, order[m - 1]) - target
    return float(np.sum(1.0 / (d * d)))


def true_top_m(means: Instance | Sequence[float] | np.ndarray, m: int) -> frozenset[int]:
    """Ground-truth answer; for scoring and tests only."""
    theta = _as_means(means)
    _pivot_values(theta, m)
    return frozenset(int(i) for i in ranking(theta)[:m])


def _subset_rank_value(theta: np.ndarray, subset: Iterable[int], i: int, j: int) -> tuple[np.ndarray, float]:
    v = np.asarray(sorted(set(int(a) for a in subset)), dtype=np.int64)
    if i not in set(v.tolist()):
        raise InvalidParams(f"arm {i} not in the subset")
    if not 1 <= j <= v.size:
        raise InvalidParams(f"rank j={j} outside 1..{v.size}")
    return v, theta[v]


def is_eps_top(means, subset: Iterable[int], i: int, eps: float, j: int) -> bool:
    """True iff arm ``i`` is within ``eps`` of the ``j``-th largest mean of the subset."""
    theta = _as_means(means)
    _, vals = _subset_rank_value(theta, subset, i, j)
    jth = np.sort(vals)[::-1][j - 1]
    return bool(theta[i] >= jth - eps)


def is_eps_bottom(means, subset: Iterable[int], i: int, eps: float, j: int) -> bool:
    """Mirror of :func:`is_eps_top`: within ``eps`` of the ``j``-th smallest mean."""
    theta = _as_means(means)
    _, vals = _subset_rank_value(theta, subset, i, j)
    jth = np.sort(vals)[j - 1]
    return bool(theta[i] <= jth + eps)


@dataclass(frozen=True)
class ComplexityReport:
    m: int
    gaps: tuple[float, ...]
    h: float
    eps: float | None = None
    h_eps: float | None = None
    h_bar: float | None = None


def complexity_report(means, m: int, eps: float | None = None) -> ComplexityReport:
    """Gaps and complexity measures at pivot ``m``.

    ``h_bar`` is filled in when the arm of rank ``m`` has a unique mean.
    """
    g = gaps(means, m)
    h_eps = complexity_h_trunc(means, m, eps) if eps is not None else None
    try:
        h_bar = complexity_h_bar(means, m)
    except DegeneratePivot:
        h_bar = None
    return ComplexityReport(m, tuple(float(x) for x in g), float(np.sum(1.0 / (g * g))), eps, h_eps, h_bar)
