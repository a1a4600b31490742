"""Command-line entry point.

``simulate``, ``analytic``, ``compare`` and ``sweep`` all evaluate the
experiment described by ``--config`` (plus ``CFOP_*`` environment
overrides and command-line flags); they differ only in which methods run.
``verify`` runs the consistency battery.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import ConfigError
from .experiment import METHODS, format_report, load_spec, run_experiment
from .verify import LEVELS, verify_suite

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _methods_for(command: str, configured: frozenset) -> frozenset:
    """Methods a subcommand runs when ``--methods`` is not given."""
    if command == "simulate":
        return frozenset({"mc"})
    if command == "analytic":
        return (configured - {"mc"}) or frozenset({"lognormal"})
    if command == "compare":
        return configured | {"mc"}
    return configured


def _method_list(raw: str) -> list:
    names = [p.strip() for p in raw.split(",") if p.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfop", description="Outage and rate of cell-free massive MIMO uplinks.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    common.add_argument("--out", help="output directory (overrides output_path)")
    common.add_argument("--methods", type=_method_list, help=f"comma list from {', '.join(METHODS)}")
    common.add_argument("--deployments", type=int, help="random deployments per sweep point")
    common.add_argument("--iters", type=int, help="channel realizations per deployment")
    common.add_argument("--threads", type=int, help="worker processes")

    helps = {
        "simulate": "Monte-Carlo outage curves and rates only",
        "analytic": "analytic approximations only (no simulation)",
        "compare": "simulation plus analytic methods, with deviation report",
        "sweep": "run the experiment exactly as configured",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)

    v = sub.add_parser("verify", help="run the cross-method consistency battery")
    v.add_argument("--level", choices=LEVELS, default="fast")
    v.add_argument("--seed", type=int, default=20240601)
    return parser


def _overrides(args) -> dict:
    out = {
        "master_seed": args.seed,
        "output_path": args.out,
        "mc_deployments": args.deployments,
        "mc_iters": args.iters,
        "threads": args.threads,
    }
    if args.methods:
        out["methods"] = ",".join(args.methods)
    return {k: str(v) for k, v in out.items() if v is not None}


def _run(args) -> int:
    overrides = _overrides(args)
    spec = load_spec(args.config, overrides=overrides)
    if args.methods is None:
        spec = dataclasses.replace(spec, methods=_methods_for(args.command, spec.methods))
    results = run_experiment(spec)
    print(format_report(spec, results), end="")
    print(f"wrote {len(results)} point CSV(s), summary.csv and report.txt to {spec.output_path}")
    return EXIT_PARTIAL if any(r.errors for r in results) else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        report = verify_suite(args.level, seed=args.seed)
        print(report.table())
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"cfop: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cfop: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
