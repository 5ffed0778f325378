"""Experiment runner: iteration-count tables and analysis CSV export.

Two subcommands: ``table`` sweeps (smoother, regularization, level) cells
of one model problem and prints the iteration-count table; ``analysis``
writes the smoothing-curve and stability CSVs for the small dense levels
and fails (exit code 2) if the proven smoothing bound is violated.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

from .analysis import (check_smoothing_bound, smoothing_norm,
                       stability_row, write_smoothing_csv,
                       write_stability_csv)
from .multigrid import CycleConfig, Multigrid, assemble_hierarchy
from .smoothers import SMOOTHER_NAMES, SmootherKind, check_applicability

DEFAULT_SMOOTHERS = {
    "poisson": ("normal", "lsgs", "slsgs", "cgs"),
    "stokes": ("normal", "lsgs", "slsgs", "vanka"),
}
DEFAULT_LEVELS = {"poisson": (5, 8), "stokes": (4, 7)}
DEFAULT_ALPHAS = (1.0, 1e-6, 1e-12)
ANALYSIS_LEVELS = {"poisson": (2, 3), "stokes": (1, 2)}


class UsageError(ValueError):
    """Bad experiment configuration; maps to exit code 1."""


@dataclass
class ExperimentSpec:
    """One table run: problem, smoothers, level range, alphas, overrides."""

    problem: str
    smoothers: tuple = ()
    levels: tuple = ()
    alphas: tuple = DEFAULT_ALPHAS
    cycle: str = "w"
    nu: tuple | None = None          # None: 2+2, symmetrized sweep 1+1
    tau: float | None = None
    tolerance: float = 1e-6
    seed: int = 1234
    max_iterations: int = 200
    coarsest_level: int = 1
    fmt: str = "markdown"

    def __post_init__(self):
        if self.problem not in ("poisson", "stokes"):
            raise UsageError(f"unknown problem '{self.problem}'")
        if not self.smoothers:
            self.smoothers = DEFAULT_SMOOTHERS[self.problem]
        if not self.levels:
            self.levels = DEFAULT_LEVELS[self.problem]
        if not (self.coarsest_level < self.levels[0] <= self.levels[1]):
            raise UsageError("level range must be increasing and above the "
                             "coarsest level")
        if not self.alphas:
            raise UsageError("need at least one regularization parameter")
        if self.fmt not in ("markdown", "csv", "json"):
            raise UsageError(f"unknown format '{self.fmt}'")
        for name in self.smoothers:
            try:
                check_applicability(SmootherKind(name, self.tau), self.problem)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc

    def smoother_nu(self, name):
        if self.nu is not None:
            return self.nu
        return (1, 1) if name == "slsgs" else (2, 2)


@dataclass
class TableCell:
    smoother: str
    alpha: float
    level: int
    iterations: int | None    # None: failed or diverged
    converged: bool
    error: str | None = None

    @property
    def text(self):
        return str(self.iterations) if self.converged else "div"


@dataclass
class TableResult:
    spec: ExperimentSpec
    cells: list = field(default_factory=list)

    def cell(self, smoother, alpha, level):
        for c in self.cells:
            if (c.smoother, c.alpha, c.level) == (smoother, alpha, level):
                return c
        raise KeyError((smoother, alpha, level))


def run_table(spec: ExperimentSpec):
    """Run every (smoother, alpha, level) cell of the sweep.

    A diverging or failing cell is recorded and rendered as "div"; it
    never aborts the remaining cells.  Output is deterministic for a
    fixed spec and seed.
    """
    result = TableResult(spec=spec)
    k_lo, k_hi = spec.levels
    for alpha in spec.alphas:
        systems, transfers = assemble_hierarchy(
            spec.problem, spec.coarsest_level, k_hi, alpha)
        for name in spec.smoothers:
            nu_pre, nu_post = spec.smoother_nu(name)
            for k in range(k_lo, k_hi + 1):
                n_levels = k - spec.coarsest_level + 1
                try:
                    config = CycleConfig(
                        smoother=SmootherKind(name, spec.tau),
                        cycle=spec.cycle, nu_pre=nu_pre, nu_post=nu_post,
                        coarsest_level=spec.coarsest_level,
                        max_iterations=spec.max_iterations,
                        tolerance=spec.tolerance, rng_seed=spec.seed)
                    solver = Multigrid(systems[:n_levels],
                                       transfers[:n_levels - 1], config)
                    report = solver.solve()
                    result.cells.append(TableCell(
                        smoother=name, alpha=alpha, level=k,
                        iterations=report.iterations,
                        converged=report.converged and not report.diverged))
                except Exception as exc:  # keep sibling cells running
                    result.cells.append(TableCell(
                        smoother=name, alpha=alpha, level=k,
                        iterations=None, converged=False, error=str(exc)))
    return result


def render_markdown(result: TableResult):
    spec = result.spec
    lines = [f"# {spec.problem} control: iterations per (smoother, alpha), "
             f"{spec.cycle.upper()}-cycle, tol {spec.tolerance:g}, "
             f"seed {spec.seed}"]
    cols = [(s, a) for s in spec.smoothers for a in spec.alphas]
    header = "| level | " + " | ".join(f"{s} a={a:g}" for s, a in cols) + " |"
    sep = "|" + "---|" * (len(cols) + 1)
    lines.extend([header, sep])
    for k in range(spec.levels[0], spec.levels[1] + 1):
        row = [f"| {k} "]
        for s, a in cols:
            row.append(f"| {result.cell(s, a, k).text} ")
        lines.append("".join(row) + "|")
    return "\n".join(lines) + "\n"


def render_csv(result: TableResult):
    lines = ["problem,smoother,alpha,level,iterations,converged"]
    for c in result.cells:
        iters = "" if c.iterations is None else c.iterations
        lines.append(f"{result.spec.problem},{c.smoother},{c.alpha:g},"
                     f"{c.level},{iters},{str(c.converged).lower()}")
    return "\r\n".join(lines) + "\r\n"


def render_json(result: TableResult):
    payload = {
        "problem": result.spec.problem,
        "cycle": result.spec.cycle,
        "seed": result.spec.seed,
        "cells": [
            {"smoother": c.smoother, "alpha": c.alpha, "level": c.level,
             "iterations": c.iterations, "converged": c.converged}
            for c in result.cells
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


RENDERERS = {"markdown": render_markdown, "csv": render_csv,
             "json": render_json}


def render_table(result: TableResult):
    return RENDERERS[result.spec.fmt](result)


def run_analysis(problems, alphas, nu_max, out_dir, smoothers=None):
    """Write smoothing-curve and stability CSVs; verify the proven bound.

    Returns (reports, curve_path, stability_path); the run fails overall
    if any symmetrized-sweep bound check fails.
    """
    import os
    from .assembly import build_poisson_system, build_stokes_system
    from .mesh import build_mesh_level

    builders = {"poisson": build_poisson_system,
                "stokes": build_stokes_system}
    curves, rows, reports = [], [], []
    for problem in problems:
        build = builders[problem]
        names = smoothers or DEFAULT_SMOOTHERS[problem]
        for level in ANALYSIS_LEVELS[problem]:
            mesh = build_mesh_level(level)
            for alpha in alphas:
                system = build(mesh, alpha)
                rows.append(stability_row(system))
                for name in names:
                    curves.append(smoothing_norm(system, name, nu_max))
                reports.append(check_smoothing_bound(system,
                                                     nu_max=nu_max))
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, "smoothing_curves.csv")
    stability_path = os.path.join(out_dir, "stability.csv")
    write_smoothing_csv(curve_path, curves)
    write_stability_csv(stability_path, rows)
    return reports, curve_path, stability_path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_levels(text):
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError as exc:
        raise UsageError(f"bad level range '{text}', expected LO:HI") from exc


def _parse_alphas(text):
    try:
        return tuple(float(a) for a in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad alpha list '{text}'") from exc


def _parse_nu(text):
    try:
        pre, post = text.split(",")
        return int(pre), int(post)
    except ValueError as exc:
        raise UsageError(f"bad smoothing-step pair '{text}', expected "
                         f"PRE,POST") from exc


def build_parser():
    parser = _Parser(prog="ocmg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    table = sub.add_parser("table", help="run an iteration-count table")
    table.add_argument("--problem", required=True,
                       choices=("poisson", "stokes"))
    table.add_argument("--smoother",
                       help=f"comma list from {','.join(SMOOTHER_NAMES)}; "
                            f"default depends on the problem")
    table.add_argument("--levels", help="finest-level range LO:HI")
    table.add_argument("--alpha", help="comma list, default 1,1e-6,1e-12")
    table.add_argument("--cycle", choices=("v", "w"), default="w")
    table.add_argument("--nu", help="smoothing steps PRE,POST (default 2,2; "
                                    "symmetrized sweep 1,1)")
    table.add_argument("--tau", type=float,
                       help="damping override where one applies")
    table.add_argument("--tol", type=float, default=1e-6)
    table.add_argument("--seed", type=int, default=1234)
    table.add_argument("--max-iter", type=int, default=200)
    table.add_argument("--coarsest", type=int, default=1)
    table.add_argument("--format", dest="fmt", default="markdown",
                       choices=("markdown", "csv", "json"))

    analysis = sub.add_parser("analysis",
                              help="write analysis CSVs, check the bound")
    analysis.add_argument("--problem", choices=("poisson", "stokes", "both"),
                          default="both")
    analysis.add_argument("--alpha", help="comma list, default 1,1e-6,1e-12")
    analysis.add_argument("--nu-max", type=int, default=30)
    analysis.add_argument("--out-dir", default=".")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "table":
            spec = ExperimentSpec(
                problem=args.problem,
                smoothers=tuple(args.smoother.split(","))
                if args.smoother else (),
                levels=_parse_levels(args.levels) if args.levels else (),
                alphas=_parse_alphas(args.alpha)
                if args.alpha else DEFAULT_ALPHAS,
                cycle=args.cycle,
                nu=_parse_nu(args.nu) if args.nu else None,
                tau=args.tau, tolerance=args.tol, seed=args.seed,
                max_iterations=args.max_iter, coarsest_level=args.coarsest,
                fmt=args.fmt)
            sys.stdout.write(render_table(run_table(spec)))
            return 0
        problems = (("poisson", "stokes") if args.problem == "both"
                    else (args.problem,))
        alphas = _parse_alphas(args.alpha) if args.alpha else DEFAULT_ALPHAS
        reports, curve_path, stability_path = run_analysis(
            problems, alphas, args.nu_max, args.out_dir)
        for report in reports:
            sys.stdout.write(report.summary() + "\n")
        sys.stdout.write(f"wrote {curve_path}\nwrote {stability_path}\n")
        if not all(r.passed for r in reports):
            sys.stderr.write("smoothing bound violated\n")
            return 2
        return 0
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
