"""Command-line entry point.

Subcommands map onto the experiment kinds:

    route             one seeded route, ledger CSV + hop trace
    sweep-coverage    reflector usage vs coverage radius
    sweep-density     reflector usage vs IU density
    validate-traffic  idle/busy-duration estimators vs Monte Carlo
    compare           policy variants across the coverage grid
    mobility          throughput vs maximum waypoint speed

Exit status: 0 success, 1 configuration error, 2 experiment failure.
Every run writes a manifest JSON capturing the resolved configuration;
feeding that manifest back through --config reproduces the outputs
byte for byte.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from . import experiments
from .config import ConfigError, SimConfig, load_config

_SUBCOMMAND_KINDS = {
    "route": "trajectory",
    "sweep-coverage": "coverage_sweep",
    "sweep-density": "density_sweep",
    "validate-traffic": "traffic_validation",
    "compare": "comparison",
    "mobility": "mobility",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risroute",
        description="Deterministic RIS-assisted multihop routing simulator",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, kind in _SUBCOMMAND_KINDS.items():
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        p.add_argument("--config", help="flat key=value file or run-manifest JSON")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--seed", type=int, default=1, help="master seed (default: 1)")
        p.add_argument(
            "--replications",
            type=int,
            default=None,
            help="replications per grid point (default: 1 for route, 500 otherwise)",
        )
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--quiet", action="store_true", help="suppress the summary line")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    kind = _SUBCOMMAND_KINDS[args.subcommand]
    try:
        cfg = load_config(args.config) if args.config else SimConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    replications = args.replications
    if replications is None:
        replications = 1 if kind == "trajectory" else 500
    try:
        plan = experiments.ExperimentPlan(
            kind=kind, seed=args.seed, replications=replications, threads=args.threads
        )
        result = experiments.run(plan, cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        print("experiment failed:", file=sys.stderr)
        traceback.print_exc()
        return 2
    if not args.quiet:
        if kind == "trajectory":
            for trace in result.traces:
                print(trace)
        files = ", ".join(str(p) for p in result.files)
        print(
            f"{args.subcommand}: {result.attempted} routes attempted, "
            f"success rate {result.success_rate:.3f}, outputs: {files}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
