"""``stochgreedy`` command line: sweep, curve, matchp (and a hidden verify)."""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bench, refcheck
from .core import InvalidInputError
from .dataio import random_coverage
from .objectives import WeightedCoverage
from .solvers import SolverConfig, lazy_greedy, naive_greedy, stochastic_greedy, stochastic_greedy_lazy


def _sweep(args) -> int:
    spec = bench.SweepSpec.from_file(args.config)
    output = Path(args.output) if args.output else spec.output
    if output is None:
        raise InvalidInputError("no output path: set run.output in the config or pass -o")
    records = bench.run_sweep(spec, output)
    print(f"wrote {len(records)} runs to {output}")
    return 0


def _curve(args) -> int:
    records = bench.read_records(args.records)
    out = args.output or sys.stdout
    if out is sys.stdout:
        rows = bench.emit_curve(records, args.x)
        print(",".join(bench.CURVE_FIELDS))
        for r in rows:
            print(",".join(bench._fmt(r[f]) for f in bench.CURVE_FIELDS))
    else:
        bench.emit_curve(records, args.x, out)
    return 0


def _matchp(args) -> int:
    spec = bench.SweepSpec.from_file(args.config)
    _, obj = bench.build_objective(spec.dataset, spec.objective, spec.base_dir)
    seeds = range(args.seed_base, args.seed_base + args.seeds)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = bench.match_p_to_cost(obj, args.k, args.epsilon, seeds, algorithm=args.algorithm)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(repr(p))
    return 0


def _verify(args) -> int:
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")

    for m in (1, 5, 10):
        q = refcheck.hit_probability_probe(100, 10, 0.1, m, args.trials, seed=m)
        bound = refcheck.hit_probability_bound(10, 0.1, m) - refcheck.three_se(q, args.trials)
        report(f"hit-probability m={m}", q >= bound, f"freq={q:.4f} bound={bound:.4f}")

    mismatches = 0
    ratio_ok = True
    for i in range(args.instances):
        covers, weights = random_coverage(12, 20, seed=i, density=0.25)
        obj = WeightedCoverage(covers, weights, 20)
        cfg = SolverConfig(k=4, epsilon=0.1, seed=i)
        naive = naive_greedy(obj, cfg)
        mismatches += lazy_greedy(obj, cfg).selected != naive.selected
        mismatches += stochastic_greedy(obj, cfg).selected != stochastic_greedy_lazy(obj, cfg).selected
        opt = refcheck.brute_force_opt(obj, 4).opt_value
        ratio_ok &= naive.final_utility >= (1 - np.exp(-1)) * opt - 1e-9
    report("lazy exactness", mismatches == 0, f"mismatches={mismatches}")
    report("greedy (1-1/e) bound", bool(ratio_ok))
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochgreedy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="{sweep,curve,matchp}")

    p = sub.add_parser("sweep", help="run a benchmark sweep from a TOML config")
    p.add_argument("config", type=Path)
    p.add_argument("-o", "--output", type=Path, help="records CSV (overrides run.output)")
    p.set_defaults(func=_sweep)

    p = sub.add_parser("curve", help="aggregate a records CSV into a utility curve")
    p.add_argument("records", type=Path)
    p.add_argument("--x", choices=["cost", "k"], default="k")
    p.add_argument("-o", "--output", type=Path, help="curve CSV (default: stdout)")
    p.set_defaults(func=_curve)

    p = sub.add_parser("matchp", help="find the sample-greedy p whose cost matches stochastic greedy")
    p.add_argument("config", type=Path, help="sweep config naming the dataset and objective")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--algorithm", default="stochastic_greedy",
                   choices=["stochastic_greedy", "stochastic_greedy_lazy"])
    p.set_defaults(func=_matchp)

    p = sub.add_parser("verify", help=argparse.SUPPRESS)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, ArithmeticError, OSError, KeyError) as exc:
        print(f"stochgreedy: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
