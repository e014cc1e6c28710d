"""Instance families: random benchmarks, the recursive hard family, and bias problems."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .core import Instance
from .errors import InfeasibleSpec, InvalidParams

CLAMP = 1e-6


# ---------------------------------------------------------------------------
# Random benchmark instances


def _raw_means(n: int, spec: str, rng: np.random.Generator) -> np.ndarray:
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        return rng.uniform(CLAMP, 1 - CLAMP, n)
    if kind == "clustered":
        parts = [p for p in rest.split(":") if p]
        k = int(parts[0]) if parts else 4
        width = float(parts[1]) if len(parts) > 1 else 0.02
        if k < 1 or width < 0:
            raise InfeasibleSpec("clustered spec needs k >= 1 and width >= 0")
        centers = rng.uniform(0.05, 0.95, k)
        which = rng.integers(0, k, n)
        return np.clip(centers[which] + rng.uniform(-width, width, n), CLAMP, 1 - CLAMP)
    raise InfeasibleSpec(f"unknown cluster spec {spec!r}")


def _enforce_gap(theta: np.ndarray, m: int, gap_min: float) -> np.ndarray:
    lo, hi = CLAMP, 1 - CLAMP
    # A zero target still needs a strict gap so the pivot is untied.
    gap_min = max(gap_min, CLAMP)
    order = np.lexsort((np.arange(theta.size), -theta))
    top, bottom = order[:m], order[m:]
    u, l = theta[order[m - 1]], theta[order[m]]
    if u - l >= gap_min and u > l:
        return theta
    up = theta[top] - u
    down = l - theta[bottom]
    span_up, span_down = float(up.max()), float(down.max())
    room = hi - lo - gap_min
    if room <= 0:
        raise InfeasibleSpec(f"gap {gap_min} does not fit in [{lo}, {hi}]")
    if span_up + span_down > room:
        scale = room / (span_up + span_down)
        up, down = up * scale, down * scale
        span_up, span_down = span_up * scale, span_down * scale
    centre = min(max((u + l) / 2, lo + span_down + gap_min / 2), hi - span_up - gap_min / 2)
    out = theta.copy()
    out[top] = centre + gap_min / 2 + up
    out[bottom] = centre - gap_min / 2 - down
    return np.clip(out, lo, hi)


def gen_random(n: int, m: int, gap_min: float, cluster_spec: str = "uniform",
               rng: np.random.Generator | int | None = None) -> Instance:
    """Random means with the pivot gap pushed up to at least ``gap_min``.

    ``cluster_spec`` is ``"uniform"`` or ``"clustered:k:width"``.  When the
    gap is short the top side is shifted up and the bottom side down,
    compressing the spreads if the result would leave ``[1e-6, 1 - 1e-6]``.
    """
    if n < 2 or not 1 <= m <= n - 1:
        raise InfeasibleSpec(f"need n >= 2 and 1 <= m < n, got n={n}, m={m}")
    if not 0 <= gap_min < 1:
        raise InfeasibleSpec("gap_min must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    theta = _enforce_gap(_raw_means(n, cluster_spec, rng), m, gap_min)
    order = np.lexsort((np.arange(n), -theta))
    gap = theta[order[m - 1]] - theta[order[m]]
    if not (gap > 0 and gap >= gap_min - 1e-12):
        raise InfeasibleSpec(f"could not realise gap {gap_min}")
    return Instance(tuple(theta), m)


# ---------------------------------------------------------------------------
# Recursive hard family


@dataclass
class HardNode:
    """Structure of one level of a hard instance (arm indices are global)."""

    C: float
    mu: float
    n: int
    m: int
    arms: list[int]
    xi: int | None = None
    eta: int | None = None
    top: list[int] = field(default_factory=list)
    bottom: list[int] = field(default_factory=list)
    blocks: list["HardNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "C": self.C, "mu": self.mu, "n": self.n, "m": self.m, "xi": self.xi, "eta": self.eta,
            "arms": self.arms, "top": self.top, "bottom": self.bottom,
            "blocks": [b.to_dict() for b in self.blocks],
        }


def smallest_odd_above_fourth_root(n: int) -> int:
    eta = math.isqrt(math.isqrt(n))
    while eta ** 4 <= n:
        eta += 1
    return eta if eta % 2 == 1 else eta + 1


def block_params(C: float, mu: float, n: int, eta: int, j: int) -> tuple[float, float]:
    """Gap and centre of block ``j`` (1-based) of a level with ``n`` arms."""
    return C * math.sqrt(eta / n), mu + (j - eta - 1) / 8 * C * n ** -0.25


def _check_level(C: float, mu: float, n: int, eta: int | None) -> None:
    if n % 2 != 1 or n < 3:
        raise InvalidParams(f"n={n} must be odd and at least 3")
    if not 0 < C < 0.25:
        raise InvalidParams(f"C={C} outside (0, 1/4)")
    if not 0.375 < mu < 0.625:
        raise InvalidParams(f"mu={mu} outside (3/8, 5/8)")
    if eta is not None:
        rest = n - eta * (2 * eta + 1)
        if rest % 2 or rest // 2 < eta * eta:
            raise InvalidParams(f"n={n} too small for eta={eta}")


def _sandwich_ok(C: float, mu: float, n: int, eta: int, j: int, lo: float, hi: float) -> bool:
    # Block j must sit within mu + C n^(-1/4) ((j - eta - 1)/8 +- 1/100).
    centre = (j - eta - 1) / 8
    scale = C * n ** -0.25
    return mu + scale * (centre - 0.01) <= lo and hi <= mu + scale * (centre + 0.01)


def _build(C, mu, n, K, rng, offset, strict) -> tuple[list[float], HardNode]:
    base = max(K, 2) ** 10
    if n <= base:
        _check_level(C, mu, n, None)
        half = (n - 1) // 2
        means = [mu + C / 2] * half + [mu] + [mu - C / 2] * half
        node = HardNode(C, mu, n, half, list(range(offset, offset + n)))
        node.top = node.arms[:half]
        node.bottom = node.arms[half + 1:]
        return means, node
    eta = smallest_odd_above_fourth_root(n)
    _check_level(C, mu, n, eta)
    xi = int(rng.integers(-eta, eta + 1))
    rest = (n - eta * (2 * eta + 1)) // 2
    n_top, n_bottom = rest + xi * eta, rest - xi * eta
    node = HardNode(C, mu, n, (n - 1) // 2, list(range(offset, offset + n)), xi=xi, eta=eta)
    means = [mu + C / 2] * n_top
    node.top = list(range(offset, offset + n_top))
    pos = offset + n_top
    for j in range(2 * eta + 1, 0, -1):
        cj, mj = block_params(C, mu, n, eta, j)
        sub, child = _build(cj, mj, eta, K, rng, pos, strict)
        if strict and not _sandwich_ok(C, mu, n, eta, j, min(sub), max(sub)):
            raise InvalidParams(f"block {j} of the n={n} level leaves its sandwich interval")
        means.extend(sub)
        node.blocks.append(child)
        pos += eta
    node.blocks.reverse()
    node.bottom = list(range(pos, pos + n_bottom))
    means.extend([mu - C / 2] * n_bottom)
    if strict:
        block_vals = [x for x in means[n_top:n_top + eta * (2 * eta + 1)]]
        if not (mu - C / 2 < min(block_vals) and max(block_vals) < mu + C / 2):
            raise InvalidParams("blocks are not strictly inside the top/bottom values")
    return means, node


def _relabel(node: HardNode, perm: np.ndarray) -> None:
    node.arms = [int(perm[a]) for a in node.arms]
    node.top = [int(perm[a]) for a in node.top]
    node.bottom = [int(perm[a]) for a in node.bottom]
    for b in node.blocks:
        _relabel(b, perm)


def gen_hard(C: float, mu: float, n: int, K: int, rng: np.random.Generator | int | None = None,
             strict: bool = True, shuffle: bool = True) -> tuple[Instance, HardNode]:
    """Sample from the recursive hard family; the pivot is ``(n - 1) / 2``.

    With ``strict`` every level must keep each block inside its sandwich
    interval and strictly between the top and bottom values; otherwise
    :class:`InvalidParams` is raised.  ``strict=False`` only checks the
    parameter ranges, for exploring small ``n``.
    """
    if K < 1:
        raise InvalidParams("K must be at least 1")
    rng = np.random.default_rng(rng)
    means, node = _build(C, mu, n, K, rng, 0, strict)
    theta = np.array(means)
    if shuffle:
        perm = rng.permutation(n)
        theta_out = np.empty(n)
        theta_out[perm] = theta
        _relabel(node, perm)
        theta = theta_out
    return Instance(tuple(theta), (n - 1) // 2), node


def median_arm(means, arms: Iterable[int]) -> int:
    """Arm of rank (|arms|+1)/2 among ``arms`` (ties by index)."""
    arms = sorted(arms)
    vals = np.asarray(means)[arms]
    order = np.lexsort((np.asarray(arms), -vals))
    return arms[int(order[(len(arms) - 1) // 2])]


def _h_exact(values: Iterable[float], m: int) -> Fraction:
    vals = [Fraction(v) for v in values]
    ranked = sorted(vals, reverse=True)
    upper, lower = ranked[m - 1], ranked[m]
    if upper == lower:
        raise InvalidParams("tied pivot")
    total = Fraction(0)
    for v, c in Counter(vals).items():
        g = v - lower if v >= upper else upper - v
        total += Fraction(c) / (g * g)
    return total


@dataclass(frozen=True)
class ComplexityCheck:
    n: int
    h: Fraction
    sub: Fraction
    low: Fraction
    high: Fraction

    @property
    def ok(self) -> bool:
        return self.low <= self.h - self.sub <= self.high


def complexity_recursion(instance: Instance, node: HardNode) -> list[ComplexityCheck]:
    """Exact rational check, level by level, that H(level) - H(median block) lies in
    ``[n / (4 C^2), 17 n / C^2]``; the base level has no sub-term."""
    theta = instance.theta
    out = []
    while True:
        C = Fraction(node.C)
        h = _h_exact(theta[node.arms], node.m)
        sub = Fraction(0)
        nxt = None
        if node.blocks:
            nxt = node.blocks[node.xi + node.eta]
            sub = _h_exact(theta[nxt.arms], nxt.m)
        out.append(ComplexityCheck(node.n, h, sub, Fraction(node.n) / (4 * C * C), 17 * Fraction(node.n) / (C * C)))
        if nxt is None:
            return out
        node = nxt


def sandwich_violations(instance: Instance, node: HardNode) -> list[tuple[int, int]]:
    """``(level n, arm)`` pairs whose mean leaves its block's sandwich interval."""
    bad = []
    theta = instance.theta
    stack = [node]
    while stack:
        nd = stack.pop()
        for j, blk in enumerate(nd.blocks, start=1):
            centre = (j - nd.eta - 1) / 8
            scale = nd.C * nd.n ** -0.25
            lo, hi = nd.mu + scale * (centre - 0.01), nd.mu + scale * (centre + 0.01)
            bad.extend((nd.n, a) for a in blk.arms if not lo <= theta[a] <= hi)
            stack.append(blk)
    return bad


def middle_mass(instance: Instance, node: HardNode) -> float:
    """Complexity contributed by the non-median blocks of the top level."""
    if not node.blocks:
        return 0.0
    theta = instance.theta
    ranked = np.sort(theta[node.arms])[::-1]
    upper, lower = ranked[node.m - 1], ranked[node.m]
    total = 0.0
    for j, blk in enumerate(node.blocks):
        if j == node.xi + node.eta:
            continue
        v = theta[blk.arms]
        g = np.where(v >= upper, v - lower, upper - v)
        total += float(np.sum(1.0 / (g * g)))
    return total


# ---------------------------------------------------------------------------
# Learning the bias


@dataclass(frozen=True)
class BiasInstance:
    instance: Instance
    b: tuple[int, ...]
    eps: float
    mu: float
    allowed: tuple[int, ...] | None = None

    @property
    def bias(self) -> int:
        return int(sum(self.b))

    @property
    def plus_count(self) -> int:
        return sum(1 for x in self.b if x > 0)


def gen_bias(n: int, eps: float, mu: float, mode: str | Iterable[int] = "uniform",
             rng: np.random.Generator | int | None = None) -> BiasInstance:
    """Arms with means ``mu + b_i eps`` for a hidden sign vector ``b``.

    ``mode="uniform"`` draws every sign independently; an iterable of allowed
    ``+1`` counts draws one count uniformly and then a uniform subset.
    """
    if n < 2:
        raise InvalidParams("need at least two arms")
    if not 0 < eps < 0.125:
        raise InvalidParams(f"eps={eps} outside (0, 1/8)")
    if not 0.375 < mu < 0.625:
        raise InvalidParams(f"mu={mu} outside (3/8, 5/8)")
    rng = np.random.default_rng(rng)
    if isinstance(mode, str):
        if mode != "uniform":
            raise InvalidParams(f"unknown mode {mode!r}")
        b = np.where(rng.random(n) < 0.5, 1, -1)
        allowed = None
    else:
        allowed = tuple(sorted(set(int(s) for s in mode)))
        if not allowed or allowed[0] < 0 or allowed[-1] > n:
            raise InvalidParams("allowed counts must lie in 0..n")
        s = allowed[int(rng.integers(len(allowed)))]
        b = -np.ones(n, dtype=np.int64)
        b[rng.permutation(n)[:s]] = 1
    theta = mu + b * eps
    return BiasInstance(Instance(tuple(theta)), tuple(int(x) for x in b), eps, mu, allowed)


def hard_bias_counts(n: int, eta: int) -> tuple[int, ...]:
    """Top-arm counts a hard level can take: ``n'/2 + z eta`` with ``n' = n - eta(2 eta + 1)``."""
    rest = n - eta * (2 * eta + 1)
    return tuple(rest // 2 + z * eta for z in range(-eta, eta + 1))
