"""Command line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

from ..numerics import InvalidInputError
from .config import EXPERIMENTS, default_config, dump_config, load_config, parse_seeds
from .runners import run

_HELP = {
    "fig1": "XOR/AND/OR geometry on torus and plane, rotated boundary",
    "depth": "one vs two hidden layers on XOR",
    "richlazy": "rich vs lazy initialisation with a held-out square",
    "noise": "training noise sweep: curvature, metric slices, posterior",
    "robustness": "embedding-noise and task-noise robustness across embedding dims",
    "lindyn": "linear learning dynamics vs the closed-form trajectory",
    "bayes": "analytic posterior curves and Monte-Carlo check",
    "curvature-oracle": "Brioschi curvature on surfaces with known curvature",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discretegeom", description="Run geometry experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", help="INI file layered over the built-in defaults")
        sp.add_argument("--out", help="output directory (default runs/<experiment>)")
        sp.add_argument("--seed", type=int, help="run a single seed")
        sp.add_argument("--seeds", help="seed list, e.g. 0..9 or 1,3,5")
        sp.add_argument("--grid", type=int, help="geometry grid resolution")
        sp.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    return parser


def resolve_config(args):
    cfg = load_config(args.config, args.experiment) if args.config else default_config(args.experiment)
    changes = {}
    if args.out:
        changes["out_dir"] = args.out
    if args.seeds:
        changes["seeds"] = parse_seeds(args.seeds)
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.grid is not None:
        changes["grid_resolution"] = args.grid
    return dataclasses.replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (InvalidInputError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.dump_config:
        print(dump_config(cfg), end="")
        return 0
    t0 = time.perf_counter()
    try:
        rep = run(cfg)
    except (InvalidInputError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for g in rep.gates:
        print(g.line())
    for f in rep.failures:
        print(f"seed {f['seed']} failed: {f['error']}")
    print(f"{cfg.name}: {'PASS' if rep.passed else 'FAIL'} in {time.perf_counter() - t0:.1f}s, "
          f"report in {cfg.out_dir}/report.json")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
