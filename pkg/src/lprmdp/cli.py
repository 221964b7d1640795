"""``lprmdp`` command line: gen, eval, improve, normbench.

Exit codes: 0 success, 2 invalid input, 3 a method failed.
"""
from __future__ import annotations

import argparse
import json
import sys

from .bench import (METHODS, MODES, ExperimentConfig, cmd_eval, cmd_gen, cmd_improve, cmd_normbench,
                    format_rows)
from .gradient import RpgInterrupted
from .lp import parse_order
from .mdp import (MdpFormatError, MdpValidationError, load_mdp, load_policy, mdp_to_dict, save_mdp, uniform_policy,
                  validate_policy)

EXIT_OK, EXIT_INVALID, EXIT_METHOD = 0, 2, 3


def _csv_list(cast):
    return lambda text: tuple(cast(t) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--states", type=int, default=20)
    common.add_argument("--actions", type=int, default=8)
    common.add_argument("--gamma", type=float, default=0.9)
    common.add_argument("--beta", type=float, default=0.01)
    common.add_argument("--p", type=parse_order, default=2.0, help="norm order, a number >= 1 or 'inf'")
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("--budget-ms", type=float, default=None)
    common.add_argument("--samples", type=int, default=10_000)
    common.add_argument("--methods", type=_csv_list(str), default=METHODS,
                        help="comma-separated subset of " + ",".join(METHODS))
    common.add_argument("--out", default=None, help="output path (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="lprmdp", description="Robust evaluation for non-rectangular L_p MDPs")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write a random MDP file")

    ev = sub.add_parser("eval", parents=[common], help="compare robust evaluation methods")
    ev.add_argument("mdp")
    ev.add_argument("--policy", default="uniform", help="policy file or 'uniform'")
    ev.add_argument("--mode", choices=MODES, default="equal_budget")
    ev.add_argument("--restarts", type=int, default=5, help="local_bk restarts in equal-budget mode")

    im = sub.add_parser("improve", parents=[common], help="robust policy gradient run")
    im.add_argument("mdp")
    im.add_argument("--policy", default="uniform")
    im.add_argument("--iters", type=int, default=100)
    im.add_argument("--step0", type=float, default=None, help="initial step size (default 0.1(1-gamma))")

    nb = sub.add_parser("normbench", parents=[common], help="constrained-norm solver benchmark")
    nb.add_argument("--sizes", type=_csv_list(int), default=(50, 200, 500))
    nb.add_argument("--trials", type=int, default=1)
    return parser


def _config(args) -> ExperimentConfig:
    keys = ("seed", "states", "actions", "gamma", "beta", "p", "tol", "samples", "methods", "out", "format",
            "mode", "restarts", "iters", "step0", "sizes", "trials")
    kw = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    return ExperimentConfig(budget_ms=args.budget_ms, **kw)


def _policy(arg, m):
    if arg == "uniform":
        return uniform_policy(m.num_states, m.num_actions)
    pi = load_policy(arg)
    bad = validate_policy(pi, m.num_states, m.num_actions)
    if bad:
        raise MdpValidationError(bad)
    return pi


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as f:
            f.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        if args.command in ("eval", "improve"):
            m = load_mdp(args.mdp)
            pi = _policy(args.policy, m)
    except (MdpFormatError, MdpValidationError, ValueError, OSError) as exc:
        print(f"lprmdp: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "gen":
        m = cmd_gen(config)
        if config.out is None:
            sys.stdout.write(json.dumps(mdp_to_dict(m)) + "\n")
        else:
            save_mdp(m, config.out)
        return EXIT_OK

    if args.command == "eval":
        rows = cmd_eval(m, pi, config)
        _emit(format_rows(rows, config.format), config.out)
        failed = [r for r in rows if r["error"]]
        for r in failed:
            print(f"lprmdp: {r['method']} failed: {r['error']}", file=sys.stderr)
        return EXIT_METHOD if failed else EXIT_OK

    if args.command == "improve":
        try:
            trace = cmd_improve(m, pi, config)
            code = EXIT_OK
        except RpgInterrupted as exc:
            print(f"lprmdp: {exc}", file=sys.stderr)
            trace, code = exc.trace, EXIT_METHOD
        if config.format == "json":
            _emit(format_rows(trace.rows, "json"), config.out)
        else:
            _emit(trace.to_csv(), config.out)
        return code

    rows = cmd_normbench(config)
    _emit(format_rows(rows, config.format), config.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
