"""Monte-Carlo experiment harness: single runs, sweeps, and constant calibration."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .collab import Collab, ExperimentReport, Streams
from .constants import DEFAULT, Constants
from .core import Instance, complexity_h, complexity_h_bar, ranking, true_top_m
from .errors import BanditError, InvalidParams
from .fixed_conf import collab_top_m_fixed_conf
from .fixed_time import (
    _ceil_log2,
    collab_budget,
    collab_top_m,
    collab_top_m_general,
    collab_top_m_simple,
    general_budget,
    r_total,
    simple_budget,
)
from .instances import gen_hard, gen_random
from .reduction import collab_top_m_improved, select_mth_arm

# ---------------------------------------------------------------------------
# Algorithms


def _simple(ctx, m, T, delta, R):
    return collab_top_m_simple(ctx, None, m, T, R)


def _collab(ctx, m, T, delta, R):
    return collab_top_m(ctx, None, m, T, R)


def _general(ctx, m, T, delta, R):
    return collab_top_m_general(ctx, None, m, T)


def _improved(ctx, m, T, delta, R):
    return collab_top_m_improved(ctx, None, m, T)


def _fixed_conf(ctx, m, T, delta, R):
    return collab_top_m_fixed_conf(ctx, None, m, delta)


def _select(ctx, m, T, delta, R):
    return frozenset({select_mth_arm(ctx, None, m, T)})


ALGORITHMS: dict[str, Callable] = {
    "simple": _simple,
    "collab": _collab,
    "general": _general,
    "improved": _improved,
    "fixed-conf": _fixed_conf,
    "select": _select,
}


def round_bound(algo: str, n: int, K: int, R: int | None = None, constants: Constants = DEFAULT) -> int | None:
    """Rounds an algorithm may use, or None when it has no closed-form bound."""
    if algo == "simple":
        return (_ceil_log2(n) if R is None else R) + 1
    if algo == "collab":
        return r_total(n, K) if R is None else R
    if algo == "general":
        return r_total(n, K) + 2
    if algo == "fixed-conf":
        return constants.fixed_conf_round_cap
    return None


def formula_budget(algo: str, instance: Instance, m: int, K: int, constants: Constants = DEFAULT) -> int:
    """The calibrated budget formula of a fixed-time algorithm."""
    if algo == "simple":
        return simple_budget(instance, m, K, c2=constants.c2)
    if algo == "collab":
        return collab_budget(instance, m, K, c0=constants.c0)
    if algo in ("general", "improved", "select"):
        return general_budget(instance, m, K, c0=constants.c0, c_general=constants.c_general)
    raise InvalidParams(f"no budget formula for {algo!r}")


# ---------------------------------------------------------------------------
# Instance sources


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise InvalidParams(f"expected key=value, got {part!r}")
        out[key.strip()] = value.strip()
    return out


def load_instance(source: str) -> Instance:
    """Instance from a JSON file path or a generator spec.

    Specs: ``random:n=64,m=8,gap=0.1,spec=uniform,seed=0``,
    ``hard:C=0.1,mu=0.5,n=101,K=2,seed=0`` and ``means:0.9/0.5/0.1,m=1``.
    """
    kind, sep, rest = source.partition(":")
    if not sep or kind not in ("random", "hard", "means"):
        return Instance.from_json(Path(source).read_text())
    if kind == "means":
        head, _, tail = rest.partition(",")
        kv = _parse_kv(tail)
        m = int(kv["m"]) if "m" in kv else None
        return Instance(tuple(float(x) for x in head.split("/")), m)
    kv = _parse_kv(rest)
    seed = int(kv.get("seed", 0))
    if kind == "random":
        return gen_random(int(kv["n"]), int(kv["m"]), float(kv.get("gap", 0.1)), kv.get("spec", "uniform"), seed)
    inst, _ = gen_hard(float(kv["C"]), float(kv["mu"]), int(kv["n"]), int(kv.get("K", 2)), seed)
    return inst


# ---------------------------------------------------------------------------
# Configuration and aggregation


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment point.

    Exactly one budget mode is set: an absolute ``T``; a multiplier ``lam``
    with ``T = ceil(lam * H / K**power)`` (``power`` defaults to ``(R-1)/R``
    when ``R`` is given, else 1); ``formula=True`` for the algorithm's
    calibrated budget; or ``delta`` for fixed confidence.
    """

    algo: str
    instance: str
    K: int
    m: int | None = None
    T: int | None = None
    lam: float | None = None
    power: float | None = None
    formula: bool = False
    delta: float | None = None
    R: int | None = None
    trials: int = 100
    seed: int = 0
    constants: tuple[tuple[str, float], ...] = ()
    workers: int = 1

    def validate(self) -> None:
        if self.algo not in ALGORITHMS:
            raise InvalidParams(f"unknown algorithm {self.algo!r}")
        if self.trials < 1 or self.K < 1:
            raise InvalidParams("trials and K must be at least 1")
        modes = sum(x is not None for x in (self.T, self.lam, self.delta)) + int(self.formula)
        if modes != 1:
            raise InvalidParams("exactly one of T, lam, formula, delta must be set")
        if (self.algo == "fixed-conf") != (self.delta is not None):
            raise InvalidParams("fixed-conf takes delta and the other algorithms take a budget")

    def resolved_constants(self) -> Constants:
        return DEFAULT.override(**dict(self.constants)) if self.constants else DEFAULT

    def echo(self) -> dict:
        d = asdict(self)
        d["constants"] = ";".join(f"{k}={v}" for k, v in self.constants)
        d.pop("workers")
        return d

    def row_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode()).hexdigest()[:16]


def wilson(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


CSV_COLUMNS = (
    "row_hash", "algo", "instance", "n", "m", "K", "T", "delta", "R", "trials", "seed", "constants",
    "success_rate", "ci_low", "ci_high", "mean_rounds", "max_rounds", "mean_time", "max_time",
    "complexity", "speedup", "errors",
)


@dataclass(frozen=True)
class AggregateRow:
    row_hash: str
    algo: str
    instance: str
    n: int
    m: int
    K: int
    T: int | None
    delta: float | None
    R: int | None
    trials: int
    seed: int
    constants: str
    success_rate: float
    ci_low: float
    ci_high: float
    mean_rounds: float
    max_rounds: int
    mean_time: float
    max_time: int
    complexity: float
    speedup: float
    errors: int

    def as_csv_row(self) -> list[str]:
        return ["" if v is None else (repr(v) if isinstance(v, float) else str(v))
                for v in (getattr(self, c) for c in CSV_COLUMNS)]


@dataclass
class Prepared:
    config: ExperimentConfig
    instance: Instance
    m: int
    T: int | None
    constants: Constants = field(default=DEFAULT)


def prepare(config: ExperimentConfig) -> Prepared:
    config.validate()
    inst = load_instance(config.instance)
    m = config.m if config.m is not None else inst.m
    if m is None:
        raise InvalidParams("the pivot m must come from the config or the instance")
    constants = config.resolved_constants()
    T = None
    if config.T is not None:
        T = int(config.T)
    elif config.lam is not None:
        power = config.power
        if power is None:
            power = (config.R - 1) / config.R if config.R else 1.0
        T = math.ceil(config.lam * _complexity(config.algo, inst, m) / config.K ** power)
    elif config.formula:
        T = formula_budget(config.algo, inst, m, config.K, constants)
    return Prepared(config, inst, m, T, constants)


def _complexity(algo: str, inst: Instance, m: int) -> float:
    return complexity_h_bar(inst, m) if algo == "select" else complexity_h(inst, m)


def _truth(algo: str, inst: Instance, m: int) -> frozenset[int]:
    if algo == "select":
        return frozenset({int(ranking(inst)[m - 1])})
    return true_top_m(inst, m)


def run_trial(prep: Prepared, trial: int) -> ExperimentReport:
    cfg = prep.config
    ctx = Collab(prep.instance, cfg.K, horizon=prep.T,
                 round_cap=round_bound(cfg.algo, prep.instance.n, cfg.K, cfg.R, prep.constants),
                 streams=Streams(cfg.seed, trial), constants=prep.constants)
    returned, flags, error = None, (), None
    try:
        out = ALGORITHMS[cfg.algo](ctx, prep.m, prep.T, cfg.delta, cfg.R)
        returned = frozenset(out) if isinstance(out, frozenset) else out.S
        flags = tuple(getattr(out, "flags", ()))
    except BanditError as exc:
        error = f"{type(exc).__name__}: {exc}"
    correct = returned is not None and returned == _truth(cfg.algo, prep.instance, prep.m)
    return ExperimentReport(trial, cfg.algo, returned, ctx.rounds_used, ctx.time_used,
                            tuple(int(x) for x in ctx.ledger.agent_pulls), correct, cfg.seed,
                            prep.T, ctx.ledger.round_cap, flags, error)


def _run_chunk(args) -> list[ExperimentReport]:
    config, trials = args
    prep = prepare(config)
    return [run_trial(prep, t) for t in trials]


def aggregate(prep: Prepared, reports: list[ExperimentReport]) -> AggregateRow:
    cfg = prep.config
    k = sum(r.correct for r in reports)
    n = len(reports)
    lo, hi = wilson(k, n)
    rounds = [r.rounds_used for r in reports]
    times = [r.time_used for r in reports]
    h = _complexity(cfg.algo, prep.instance, prep.m)
    mean_time = float(np.mean(times))
    return AggregateRow(
        cfg.row_hash(), cfg.algo, cfg.instance, prep.instance.n, prep.m, cfg.K, prep.T, cfg.delta, cfg.R,
        n, cfg.seed, cfg.echo()["constants"], k / n, lo, hi, float(np.mean(rounds)), int(max(rounds)),
        mean_time, int(max(times)), h, h / mean_time if mean_time > 0 else math.inf,
        sum(r.error is not None for r in reports),
    )


def run_experiment(config: ExperimentConfig) -> tuple[list[ExperimentReport], AggregateRow]:
    """All trials of one point plus their aggregate; trial errors count as failures."""
    prep = prepare(config)
    trials = list(range(config.trials))
    if config.workers > 1 and config.trials > 1:
        chunks = [trials[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            reports = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks]) for r in part]
    else:
        reports = [run_trial(prep, t) for t in trials]
    reports.sort(key=lambda r: r.trial)
    return reports, aggregate(prep, reports)


# ---------------------------------------------------------------------------
# Output


def csv_text(rows: Iterable[AggregateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow(row.as_csv_row())
    return buf.getvalue()


def report_dict(r: ExperimentReport) -> dict:
    d = asdict(r)
    d["returned"] = None if r.returned is None else sorted(r.returned)
    d["flags"] = list(r.flags)
    d["agent_pulls"] = list(r.agent_pulls)
    return d


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _read_rows(path: Path) -> list[list[str]]:
    if not path.exists():
        return []
    with path.open(newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise InvalidParams(f"{path} does not carry the expected CSV header")
    return rows[1:]


def grid(base: ExperimentConfig, axes: dict[str, list]) -> list[ExperimentConfig]:
    """Cross product of ``axes`` applied to ``base``; an empty axis gives an empty grid."""
    names = list(axes)
    return [replace(base, **dict(zip(names, values))) for values in product(*(axes[n] for n in names))]


def sweep(configs: list[ExperimentConfig], out: str | Path) -> list[list[str]]:
    """Run every config, appending one CSV row each; rows already present (by hash) are skipped.

    The file is rewritten atomically after each row, so an interrupted sweep
    leaves a valid CSV and resumes where it stopped.  A JSON mirror is written
    next to it.
    """
    path = Path(out)
    rows = _read_rows(path)
    done = {r[0] for r in rows}
    header = ",".join(CSV_COLUMNS) + "\n"
    if not path.exists():
        _atomic_write(path, header)
    for cfg in configs:
        h = cfg.row_hash()
        if h in done:
            continue
        _, agg = run_experiment(cfg)
        rows.append(agg.as_csv_row())
        done.add(h)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(rows)
        _atomic_write(path, buf.getvalue())
    _atomic_write(path.with_suffix(".json"), json.dumps([dict(zip(CSV_COLUMNS, r)) for r in rows], indent=1))
    return rows


# ---------------------------------------------------------------------------
# Calibration


@dataclass(frozen=True)
class CalibrationStep:
    value: float
    success_rate: float
    ci_low: float


def calibrate(config: ExperimentConfig, name: str, target: float, start: float = 1.0,
              max_doublings: int = 12, refine: int = 4) -> tuple[float | None, list[CalibrationStep]]:
    """Smallest value of constant ``name`` whose success rate reaches ``target``.

    Doubles from ``start`` until the target is met, then bisects ``refine``
    times between the last failing and first passing value.  Returns
    ``(value or None, steps)``.
    """
    if name not in asdict(DEFAULT):
        raise InvalidParams(f"unknown constant {name!r}")
    base = dict(config.constants)
    steps: list[CalibrationStep] = []

    def rate(v: float) -> float:
        cfg = replace(config, constants=tuple(sorted({**base, name: v}.items())))
        _, agg = run_experiment(cfg)
        steps.append(CalibrationStep(v, agg.success_rate, agg.ci_low))
        return agg.success_rate

    lo, hi = None, start
    for _ in range(max_doublings):
        if rate(hi) >= target:
            break
        lo, hi = hi, hi * 2
    else:
        return None, steps
    if lo is None:
        return hi, steps
    for _ in range(refine):
        mid = (lo + hi) / 2
        if rate(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi, steps
