"""Randomized property suites for the complexity measures.

Each suite draws instances with distinct means and checks an inequality
between complexity sums.  Comparisons allow a relative slack of ``1e-9`` for
float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import complexity_h, complexity_h_trunc, gaps, ranking

REL = 1e-9


@dataclass
class SuiteReport:
    name: str
    cases: int
    violations: int = 0
    examples: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _le(a: float, b: float) -> bool:
    return a <= b * (1 + REL)


def _instance(rng: np.random.Generator, n_max: int) -> np.ndarray:
    n = int(rng.integers(2, n_max + 1))
    while True:
        theta = rng.uniform(0.001, 0.999, n)
        if np.unique(theta).size == n:
            return theta


def sandwich_case(rng: np.random.Generator, n_max: int = 20) -> dict | None:
    """One subset-versus-whole comparison; None when the draw admits no valid ``k``."""
    theta = _instance(rng, n_max)
    n = theta.size
    size = int(rng.integers(2, n + 1))
    V = np.sort(rng.choice(n, size, replace=False))
    j = int(rng.integers(1, n))
    order = ranking(theta)
    jth, next_ = theta[order[j - 1]], theta[order[j]]
    # With distinct means the only candidate is the count of subset arms at or above rank j.
    k = int(np.sum(theta[V] >= jth))
    if not 1 <= k <= size - 1:
        return None
    sub = np.sort(theta[V])[::-1]
    if not (sub[k - 1] >= jth >= next_ >= sub[k]):
        return None
    eps = float(rng.uniform(0.001, 0.5))
    g_whole = gaps(theta, j)
    return {
        "theta": theta.tolist(), "V": V.tolist(), "j": j, "k": k, "eps": eps,
        "h_sub": complexity_h(theta[V], k),
        "mid": float(np.sum(g_whole[V] ** -2.0)),
        "h_whole": complexity_h(theta, j),
        "h_sub_eps": complexity_h_trunc(theta[V], k, eps),
        "mid_eps": float(np.sum(np.maximum(g_whole[V], eps) ** -2.0)),
        "h_whole_eps": complexity_h_trunc(theta, j, eps),
    }


def sandwich_holds(case: dict) -> bool:
    return (_le(case["h_sub"], case["mid"]) and _le(case["mid"], case["h_whole"])
            and _le(case["h_sub_eps"], case["mid_eps"]) and _le(case["mid_eps"], case["h_whole_eps"]))


def pivot_change_case(rng: np.random.Generator, n_max: int = 20) -> dict:
    """Truncated complexity at every other pivot against four times the complexity at ``m``."""
    theta = _instance(rng, n_max)
    n = theta.size
    m = int(rng.integers(1, n))
    g = gaps(theta, m)
    order = ranking(theta)
    h = complexity_h(theta, m)
    worst = 0.0
    for t in range(1, n):
        worst = max(worst, complexity_h_trunc(theta, t, float(g[order[t - 1]])))
    return {"theta": theta.tolist(), "m": m, "h": h, "worst": worst}


def pivot_change_holds(case: dict) -> bool:
    return _le(case["worst"], 4 * case["h"])


def far_arm_case(rng: np.random.Generator, n_max: int = 20) -> dict:
    """Largest ``z`` times the inverse squared gap of rank ``t``, over every far rank."""
    theta = _instance(rng, n_max)
    n = theta.size
    m = int(rng.integers(1, n))
    g = gaps(theta, m)
    order = ranking(theta)
    worst = 0.0
    for t in range(1, n + 1):
        z = max(m - t, t - m)
        if z >= 1:
            worst = max(worst, z * float(g[order[t - 1]]) ** -2)
    return {"theta": theta.tolist(), "m": m, "h": complexity_h(theta, m), "worst": worst}


def far_arm_holds(case: dict) -> bool:
    return _le(case["worst"], case["h"])


SUITES = {
    "sandwich": (sandwich_case, sandwich_holds),
    "pivot-change": (pivot_change_case, pivot_change_holds),
    "far-arm": (far_arm_case, far_arm_holds),
}


def run_suite(name: str, cases: int = 10_000, seed: int = 0, n_max: int = 20, keep: int = 5) -> SuiteReport:
    """Check ``cases`` valid random cases; up to ``keep`` violations are kept as examples."""
    make, holds = SUITES[name]
    rng = np.random.default_rng(seed)
    report = SuiteReport(name, 0)
    while report.cases < cases:
        case = make(rng, n_max)
        if case is None:
            continue
        report.cases += 1
        if not holds(case):
            report.violations += 1
            if len(report.examples) < keep:
                report.examples.append(case)
    return report


def run_all(cases: int = 10_000, seed: int = 0) -> list[SuiteReport]:
    return [run_suite(name, cases, seed + i) for i, name in enumerate(SUITES)]
