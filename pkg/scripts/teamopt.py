#!/usr/bin/env python3
"""
Team Optimization Toolkit
=========================

Command-line entry point for stochastic team problems with decentralized
information:

1. simulate          - controlled ensembles and their payoff
2. check-martingale  - likelihood-ratio martingale diagnostics
3. static-compare    - static (reference-measure) reduction vs direct Monte Carlo
4. solve-bsde        - adjoint process by backward regression
5. optimize          - person-by-person optimization with residual certificates
6. value             - agent value processes and the sufficiency check
7. equivalence       - payoff under the reference and the original measure
8. validate          - spec audit and policy measurability fuzzing

Exit status: 0 all checks pass, 1 a check failed, 2 error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from benchmarks.benchmark_library import list_benchmarks
from config.experiment_config import load_config
from execution.experiment_runner import SUBCOMMANDS, ExperimentRunner
from utils.exceptions import TeamOptError

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def setup_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Setup command line arguments"""
    parser = argparse.ArgumentParser(prog="teamopt", description="Stochastic team optimization toolkit")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    subparsers.add_parser("list-benchmarks", help="Print the built-in benchmark catalog")

    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", type=Path, required=True, help="JSON run configuration")
        sub.add_argument("--seed", type=int, help="Run seed (run.seed)")
        sub.add_argument("--paths", type=int, help="Monte Carlo paths (run.paths)")
        sub.add_argument("--out", type=str, help="Output directory (output.directory)")
        sub.add_argument("--checkpoints", type=float, nargs="+", help="Checkpoint times (run.checkpoints)")
        sub.add_argument("--order", type=int, help="Gauss-Hermite order (run.quadrature_order)")
        sub.add_argument("--mc-paths", type=int, help="Monte Carlo paths of static checks (run.mc_paths)")
        sub.add_argument("--tol", type=float, help="Residual tolerance (run.tol)")
        sub.add_argument("--max-cycles", type=int, help="PbP cycle limit (run.max_cycles)")
        sub.add_argument("--override", action="append", default=[], metavar="KEY.PATH=VALUE",
                         help="Patch the configuration before validation (repeatable)")
        sub.add_argument("--verbose", action="store_true", help="Debug logging and progress bars")

    return parser.parse_args(argv)


def flag_overrides(args: argparse.Namespace) -> List[str]:
    """Translate dedicated flags into key.path=value overrides"""
    pairs = [
        ("run.seed", args.seed), ("run.paths", args.paths), ("output.directory", args.out),
        ("run.checkpoints", args.checkpoints), ("run.quadrature_order", args.order),
        ("run.mc_paths", args.mc_paths), ("run.tol", args.tol), ("run.max_cycles", args.max_cycles),
    ]
    return [f"{key}={json.dumps(value)}" for key, value in pairs if value is not None]


def run(config_path: Path, subcommand: str, overrides: List[str], verbose: bool = False) -> int:
    """Load, validate and execute one subcommand; returns the exit status"""
    config = load_config(config_path, overrides)
    outcome = ExperimentRunner(config, verbose=verbose).run(subcommand)
    return EXIT_PASS if outcome.passed else EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    args = setup_args(argv)

    if args.subcommand == "list-benchmarks":
        print("📚 BUILT-IN BENCHMARKS")
        print("=" * 50)
        for entry in list_benchmarks():
            print(f"  • {entry['name']} [{entry['family']}] oracle: {entry['oracle']}")
            print(f"      {entry['description']}")
        return EXIT_PASS

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args.config, args.subcommand, args.override + flag_overrides(args), args.verbose)
    except KeyboardInterrupt:
        print("\n❌ Run interrupted by user")
        return EXIT_ERROR
    except (TeamOptError, OSError, ValueError) as e:
        print(f"\n❌ Error during {args.subcommand}: {e}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
