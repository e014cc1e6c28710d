"""Compare the compiled kernels with the pure-Python fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.  Both backends
consume identical inputs and the script checks that their outputs agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from collab_topm import _pykernels

try:
    from collab_topm import _kernels as compiled
except ImportError:
    compiled = None


def lucb_case(mod, n=40, m=8, pulls=20_000, seed=0):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.05, 0.95, n)
    counts = np.ones(n, dtype=np.int64)
    sums = (rng.random(n) < theta).astype(np.int64)
    order = np.lexsort((np.arange(n), -(sums / counts)))
    u = rng.random(pulls)
    out = mod.lucb_run(theta, False, counts, sums, order, m, float(n), 0.05, n, 2, -1.0, u)
    return tuple(out), counts.tolist()


def batch_case(mod, n=128, m=8, K=8, rounds=3, copies=2_000, budget=10**6, seed=0):
    theta = np.random.default_rng(seed).uniform(0.05, 0.95, n)
    gen = np.random.Generator(np.random.Philox(seed))
    counts = np.zeros((rounds + 1, K, n), dtype=np.int64)
    rewards = np.zeros((rounds + 1, n), dtype=np.int64)
    arms, branch = mod.subset_best_arm_batch(gen, theta, False, 1.0 / m, K, rounds, 0.05, budget, 3.0, copies,
                                             1e6, counts, rewards)
    return arms.tolist(), branch.tolist(), counts.tolist()


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':<24}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, case in (("lucb_run", lucb_case), ("subset_best_arm_batch", batch_case)):
        t_py, r_py = best_of(lambda: case(_pykernels), args.repeat)
        t_c, r_c = best_of(lambda: case(compiled), args.repeat)
        if r_py != r_c:
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<24}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
