"""Command-line entry point: ``solve``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .geometry import GeometryError
from .harness import (HarnessError, emit_csv, emit_fields, emit_json, emit_stencil_debug,
                      refinement_study)
from .problem import ProblemFileError, builtin, load_problem
from .solver import SolverError
from .stencils import StencilDerivationError


def parse_levels(text: str) -> list[int]:
    """'3..7' -> [3, 4, 5, 6, 7]; '5' -> [5]; '3,5' -> [3, 5]."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level range {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="solve", description="Fourth-order compact interface solver")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--case", help="builtin:N with N in 1..10")
    src.add_argument("--problem", type=Path, help="problem file (key = value format)")
    p.add_argument("--levels", type=parse_levels, default=None,
                   help="refinement levels, e.g. 3..7 (default 3..7, or 3..6 without exact solution)")
    p.add_argument("--solver", choices=("direct", "iterative"), default="direct")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--emit-fields", action="store_true", help="write fields_J*.csv")
    p.add_argument("--include-coarse", action="store_true",
                   help="report the order of the coarsest pair")
    p.add_argument("--debug-stencils", action="store_true",
                   help="write per-node irregular stencil records")
    p.add_argument("--no-condition", action="store_true", help="skip the condition estimate")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args):
    if args.case:
        kind, _, num = args.case.partition(":")
        if kind != "builtin" or not num.isdigit():
            raise ProblemFileError(f"unknown case {args.case!r}; expected builtin:N")
        return builtin(int(num))
    return load_problem(args.problem)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        problem = _load(args)
        levels = args.levels or (list(range(3, 8)) if problem.has_exact else list(range(3, 7)))
        report = refinement_study(problem, levels, solver=args.solver,
                                  include_coarse=args.include_coarse,
                                  condition=not args.no_condition,
                                  debug=args.debug_stencils)
    except (ProblemFileError, GeometryError, StencilDerivationError, SolverError,
            HarnessError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    emit_csv([report], args.out / "results.csv")
    emit_json([report], args.out / "results.json")
    for lv in report.levels:
        if args.emit_fields:
            emit_fields(lv, args.out / f"fields_J{lv.J}.csv")
        if args.debug_stencils:
            emit_stencil_debug(lv, args.out / f"stencils_J{lv.J}.json")
    _print_summary(report)
    return 0


def _print_summary(report) -> None:
    keys = report.error_keys()[:3]
    print(f"{report.name} ({report.kind}, {report.solver})")
    print("  J " + "".join(f"{k:>12} {'ord':>6}" for k in keys) + f"{'kappa':>12}")
    for lv in report.levels:
        line = f"{lv.J:>3} "
        for k in keys:
            e, o = lv.errors.get(k), lv.orders.get(k)
            line += f"{e:12.4e} " if e is not None else f"{'-':>12} "
            line += f"{o:6.3f}" if o is not None else f"{'-':>6}"
        line += f"{lv.kappa:12.4e}" if lv.kappa is not None else f"{'-':>12}"
        print(line)


if __name__ == "__main__":
    sys.exit(main())
