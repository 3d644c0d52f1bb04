"""Command-line entry point: ``fracgraph {solve,trace,validate,convergence}``.

Exit codes: 0 success, 1 validation or monotonicity failure, 2 invalid
configuration, 3 solver failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import List, Optional

from . import drivers
from .assembly import AssemblyError, CoefficientError
from .config import ConfigError, load_config
from .eigen import EigenError, NotPositiveDefinite
from .graph import GraphError
from .kernel import DENOMINATORS

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config output.dir)")
    common.add_argument("--k", type=int, help="number of eigenpairs")
    common.add_argument("--kernel-denominator", choices=DENOMINATORS, help="K2 normalization variant")
    common.add_argument("--seed", type=int, help="seed for randomized suites")

    parser = argparse.ArgumentParser(prog="fracgraph", description="Fractional Sturm-Liouville spectra on metric graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="eigenvalues and eigenfunctions")
    sub.add_parser("trace", parents=[common], help="kernel trace versus reciprocal eigenvalue sums")
    sub.add_parser("validate", parents=[common], help="run the invariant suites")
    conv = sub.add_parser("convergence", parents=[common], help="eigenvalues across nested meshes")
    conv.add_argument("--levels", type=int, nargs="+", metavar="N", help="mesh sizes (default: config mesh.levels)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.k is not None:
            if args.k < 1:
                raise ConfigError("--k must be >= 1", source="argv")
            cfg = replace(cfg, k=args.k)
        if args.kernel_denominator:
            cfg = replace(cfg, kernel_denominator=args.kernel_denominator)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = args.out or cfg.out_dir
        os.makedirs(out, exist_ok=True)
        if args.command == "solve":
            return drivers.cmd_solve(cfg, out)
        if args.command == "trace":
            return drivers.cmd_trace(cfg, out)
        if args.command == "validate":
            return drivers.cmd_validate(cfg, out)
        return drivers.cmd_convergence(cfg, out, args.levels)
    except ConfigError as exc:
        where = args.config if exc.source == "config" else exc.source
        line = f":{exc.line}" if exc.line is not None else ""
        print(f"error: {where}{line}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphError, CoefficientError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotPositiveDefinite, EigenError, AssemblyError, drivers.SolverFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (drivers.ValidationFailed, drivers.NotMonotone) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
