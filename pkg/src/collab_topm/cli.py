"""Command-line entry point: ``collab-topm {gen,run,sweep,calibrate,verify-props}``.

Config files are flat ``key = value`` lines (``#`` starts a comment).  Keys
match the command-line options: ``algo``, ``instance``, ``K``, ``m``, ``T``,
``lam``, ``power``, ``formula``, ``delta``, ``R``, ``trials``, ``seed``,
``workers``, ``out``, and ``const.<name>`` for constant overrides.  The
environment variable ``BANDIT_SEED`` overrides the master seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from .experiment import (
    ALGORITHMS,
    ExperimentConfig,
    calibrate,
    csv_text,
    grid,
    report_dict,
    run_experiment,
    sweep,
)
from .instances import gen_bias, gen_hard, gen_random
from .props import run_all

_INT_KEYS = {"K", "m", "T", "R", "trials", "seed", "workers"}
_FLOAT_KEYS = {"lam", "power", "delta"}


def read_config(path: str | Path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SystemExit(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def _convert(key: str, value: str):
    if key in _INT_KEYS:
        return int(float(value))
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "formula":
        return value.lower() in ("1", "true", "yes")
    return value


def build_config(args: argparse.Namespace) -> tuple[ExperimentConfig, str | None]:
    values: dict = {}
    consts: dict[str, float] = {}
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            if k.startswith("const."):
                consts[k[6:]] = float(v)
            else:
                values[k] = v
    for k in ("algo", "instance", "K", "m", "T", "lam", "power", "delta", "R", "trials", "seed", "workers", "out"):
        v = getattr(args, k, None)
        if v is not None:
            values[k] = str(v)
    if getattr(args, "formula", False):
        values["formula"] = "true"
    for item in getattr(args, "set", None) or []:
        k, _, v = item.partition("=")
        consts[k.strip()] = float(v)
    if "BANDIT_SEED" in os.environ:
        values["seed"] = os.environ["BANDIT_SEED"]
    out = values.pop("out", None)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(values) - known
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    missing = {"algo", "instance", "K"} - set(values)
    if missing:
        raise SystemExit(f"missing config keys: {sorted(missing)}")
    kwargs = {k: _convert(k, v) for k, v in values.items()}
    kwargs["constants"] = tuple(sorted(consts.items()))
    return ExperimentConfig(**kwargs), out


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--algo", choices=sorted(ALGORITHMS))
    p.add_argument("--instance", help="JSON file or generator spec such as random:n=64,m=8,gap=0.1,seed=0")
    p.add_argument("--K", type=int)
    p.add_argument("--m", type=int)
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--T", type=int, help="absolute per-agent budget")
    budget.add_argument("--lam", type=float, help="budget multiplier of H / K**power")
    budget.add_argument("--formula", action="store_true", help="the algorithm's calibrated budget formula")
    budget.add_argument("--delta", type=float, help="confidence for fixed-conf")
    p.add_argument("--power", type=float)
    p.add_argument("--R", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a constant")
    p.add_argument("--out", help="output CSV path (default stdout)")


def cmd_gen(args: argparse.Namespace) -> int:
    annotation = None
    if args.kind == "random":
        inst = gen_random(args.n, args.m, args.gap, args.spec, args.seed)
    elif args.kind == "hard":
        inst, node = gen_hard(args.C, args.mu, args.n, args.K, args.seed, strict=not args.loose)
        annotation = node.to_dict()
    else:
        bias = gen_bias(args.n, args.eps, args.mu, "uniform" if args.counts is None else args.counts, args.seed)
        inst = bias.instance
        annotation = {"b": list(bias.b), "bias": bias.bias, "allowed": bias.allowed}
    out = Path(args.out)
    out.write_text(inst.to_json() + "\n")
    if annotation is not None:
        out.with_suffix(".annotation.json").write_text(json.dumps(annotation) + "\n")
    print(f"wrote {out} ({inst.n} arms)")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg, out = build_config(args)
    reports, row = run_experiment(cfg)
    text = csv_text([row])
    if out:
        Path(out).write_text(text)
        Path(out).with_suffix(".json").write_text(json.dumps(
            {"aggregate": dict(zip(text.splitlines()[0].split(","), row.as_csv_row())),
             "trials": [report_dict(r) for r in reports]}, indent=1))
    else:
        sys.stdout.write(text)
    return 0


def _parse_axis(item: str) -> tuple[str, list]:
    name, _, values = item.partition("=")
    name = name.strip()
    vals = [v for v in values.split(",") if v.strip()]
    return name, [_convert(name, v.strip()) for v in vals]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg, out = build_config(args)
    if not out:
        raise SystemExit("sweep needs --out")
    axes = dict(_parse_axis(a) for a in args.axis or [])
    rows = sweep(grid(cfg, axes), out)
    print(f"{len(rows)} rows in {out}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg, _ = build_config(args)
    value, steps = calibrate(cfg, args.constant, args.target, args.start)
    for s in steps:
        print(f"{args.constant}={s.value:.6g} success={s.success_rate:.4f} ci_low={s.ci_low:.4f}")
    print("calibrated:", "none" if value is None else f"{args.constant}={value:.6g}")
    return 0 if value is not None else 1


def cmd_verify_props(args: argparse.Namespace) -> int:
    reports = run_all(args.cases, args.seed)
    for r in reports:
        print(f"{r.name}: {r.cases} cases, {r.violations} violations -> {'PASS' if r.ok else 'FAIL'}")
    return 0 if all(r.ok for r in reports) else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collab-topm", description="Collaborative top-m arm identification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write an instance JSON (plus annotation for structured families)")
    g.add_argument("kind", choices=["random", "hard", "bias"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--gap", type=float, default=0.1)
    g.add_argument("--spec", default="uniform")
    g.add_argument("--C", type=float, default=0.1)
    g.add_argument("--mu", type=float, default=0.5)
    g.add_argument("--K", type=int, default=2)
    g.add_argument("--eps", type=float, default=0.05)
    g.add_argument("--counts", type=int, nargs="+", help="allowed +1 counts for the bias family")
    g.add_argument("--loose", action="store_true", help="skip the hard family's interval checks")
    g.add_argument("--seed", type=int, default=int(os.environ.get("BANDIT_SEED", 0)))
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one experiment point")
    _add_run_options(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a grid of points into a resumable CSV")
    _add_run_options(s)
    s.add_argument("--axis", action="append", metavar="NAME=V1,V2", help="grid axis over a config key")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="search the smallest constant reaching a success target")
    _add_run_options(c)
    c.add_argument("--constant", required=True)
    c.add_argument("--target", type=float, default=0.9)
    c.add_argument("--start", type=float, default=1.0)
    c.set_defaults(func=cmd_calibrate)

    v = sub.add_parser("verify-props", help="run the complexity property suites")
    v.add_argument("--cases", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify_props)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
