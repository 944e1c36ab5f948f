"""Command-line interface: ``polytraj gen|solve|cma|bench|verify``.

Exit codes: 0 success, 1 infeasible or failed solve, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, cma, conic, heuristics
from .errors import PolytrajError, ProblemParseError
from .problem import GeneratorConfig, as_proportions, from_json, generate, to_json

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read_problem(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    try:
        return from_json(text)
    except ProblemParseError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def solution_to_dict(sol: conic.Solution, s, report=None) -> dict:
    doc = {
        "status": sol.status,
        "T": sol.T,
        "y": sol.y,
        "alpha": sol.alpha,
        "objective": sol.objective,
        "proportions": [float(v) for v in np.asarray(s, dtype=float)],
        "control_points": None if sol.control_points is None else sol.control_points.tolist(),
        "wall_time_ms": sol.wall_time * 1e3,
    }
    if report is not None:
        doc["verify"] = report.as_dict()
    return doc


def solution_from_dict(doc) -> tuple[conic.Solution, object]:
    try:
        pts = doc["control_points"]
        T = doc["T"]
        s = doc["proportions"]
    except (KeyError, TypeError) as exc:
        raise UsageError(f"solution document lacks field {exc}") from exc
    if pts is None or T is None:
        raise UsageError("solution has no control points or time to verify")
    try:
        sol = conic.Solution(doc.get("status", conic.OPTIMAL),
                             control_points=np.array(pts, dtype=float), T=float(T),
                             y=doc.get("y"), alpha=doc.get("alpha"))
        return sol, as_proportions(s)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"malformed solution: {exc}") from exc


def _proportions(problem, spec: str):
    if spec == "even":
        return heuristics.even_proportions(problem.n_polytopes - 1)
    if spec == "distance":
        return heuristics.distance_proportions(problem)
    try:
        vals = [float(v) for v in spec.split(",")]
        return as_proportions(vals)
    except ValueError as exc:
        raise UsageError(f"--proportions: {exc}") from exc


def cmd_gen(args) -> int:
    try:
        cfg = GeneratorConfig(dim=args.dim, n_polytopes=args.polytopes, degree=args.degree,
                              points_per_polytope=args.points,
                              decel_impossible_prob=args.decel_prob, seed=args.seed,
                              start_at_rest=not args.free_start, end_at_rest=not args.free_end)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(to_json(generate(cfg), indent=2) + "\n", args.out)
    return EXIT_OK


_BUILDERS = {
    "relaxation": lambda p, s, a: conic.build_relaxation(p, s),
    "slack": lambda p, s, a: conic.build_slack_relaxation(p, s, a.weight),
    "naive": lambda p, s, a: conic.build_naive_lp(p, s, a.naive_time),
    "no_accel": lambda p, s, a: conic.build_lp_special(p, s, conic.LP_NO_ACCEL),
    "no_velocity": lambda p, s, a: conic.build_lp_special(p, s, conic.LP_NO_VELOCITY),
}


def cmd_solve(args) -> int:
    problem = _read_problem(args.problem)
    s = _proportions(problem, args.proportions)
    if len(s) != problem.n_polytopes:
        raise UsageError(f"--proportions has {len(s)} entries for {problem.n_polytopes} polytopes")
    sol = conic.solve(_BUILDERS[args.program](problem, s, args), args.backend)
    report = conic.verify(problem, s, sol) if sol.optimal else None
    _emit(json.dumps(solution_to_dict(sol, s, report), indent=2) + "\n", args.out)
    return EXIT_OK if sol.optimal and report.ok else EXIT_FAILED


def cmd_cma(args) -> int:
    problem = _read_problem(args.problem)
    try:
        cfg = cma.CmaConfig(population=args.population, sigma0=args.sigma0,
                            max_evals=args.max_evals, mode=args.mode, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    res = cma.run(problem, cfg)
    doc = {"feasible": res.feasible, "evals": res.evals, "fitness": res.fitness,
           "solution": solution_to_dict(res.solution, res.proportions)}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK if res.feasible else EXIT_FAILED


def _parse_cells(text):
    cells = []
    for item in str(text).split(","):
        try:
            a, b = item.lower().split("x")
            cells.append((int(a), int(b)))
        except ValueError as exc:
            raise UsageError(f"bad cell {item!r}; expected POLYTOPESxDEGREE") from exc
    return cells


def cmd_bench(args) -> int:
    opts = {}
    if args.config:
        try:
            opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: {exc}") from exc
        if isinstance(opts.get("cells"), str):
            opts["cells"] = _parse_cells(opts["cells"])
    flags = {"cells": _parse_cells(args.cells) if args.cells else None,
             "methods": args.methods.split(",") if args.methods else None,
             "problems_per_cell": args.problems, "seed": args.seed, "reps": args.reps,
             "workers": args.workers, "max_evals": args.max_evals,
             "dims": [int(d) for d in args.dims.split(",")] if args.dims else None}
    opts.update({k: v for k, v in flags.items() if v is not None})
    out_dir = args.out or opts.pop("out_dir", None) or "bench_out"
    opts.pop("out_dir", None)
    try:
        config = bench.BenchConfig(out_dir=out_dir, **opts)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bench configuration: {exc}") from exc
    report = bench.run_bench(config)
    if not report.records:
        for msg in report.abandoned.values():
            print(msg, file=sys.stderr)
        return EXIT_FAILED
    summary = bench.summarize(report.records, config.methods)
    paths = bench.write_outputs(report, summary, out_dir)
    for row in summary.success:
        print(f"{row[0]}x{row[1]} {row[2]:6s} {row[3]}/{row[4]} = {row[5]:.2f}")
    for msg in report.abandoned.values():
        print(msg, file=sys.stderr)
    print(f"wrote {', '.join(sorted(str(p) for p in paths.values()))}")
    return EXIT_OK


def cmd_verify(args) -> int:
    problem = _read_problem(args.problem)
    try:
        doc = json.loads(Path(args.solution).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{args.solution}: {exc}") from exc
    sol, s = solution_from_dict(doc)
    if len(s) != problem.n_polytopes:
        raise UsageError("solution proportions do not match the problem")
    report = conic.verify(problem, s, sol, n_samples=args.samples, tol=args.tol)
    _emit(json.dumps(report.as_dict(), indent=2) + "\n", args.out)
    return EXIT_OK if report.ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polytraj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random problem as JSON")
    g.add_argument("--dim", type=int, default=2, choices=(2, 3))
    g.add_argument("--polytopes", type=int, default=2)
    g.add_argument("--degree", type=int, default=5)
    g.add_argument("--points", type=int, default=10, help="samples per polytope")
    g.add_argument("--decel-prob", type=float, default=0.4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--free-start", action="store_true", help="leave the start velocity free")
    g.add_argument("--free-end", action="store_true", help="leave the end velocity free")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one program at fixed proportions")
    s.add_argument("problem")
    s.add_argument("--proportions", default="even",
                   help="'even', 'distance' or a comma-separated list")
    s.add_argument("--program", default="relaxation", choices=sorted(_BUILDERS))
    s.add_argument("--weight", type=float, default=conic.DEFAULT_SLACK_WEIGHT)
    s.add_argument("--naive-time", type=float, default=conic.DEFAULT_NAIVE_TIME)
    s.add_argument("--backend", default=conic.AUTO,
                   choices=(conic.AUTO, conic.IPM, conic.CLARABEL))
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("cma", help="search proportions with CMA-ES")
    c.add_argument("problem")
    c.add_argument("--mode", default=cma.FEASIBILITY, choices=(cma.FEASIBILITY, cma.OPTIMIZE))
    c.add_argument("--max-evals", type=int, default=5000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--population", type=int)
    c.add_argument("--sigma0", type=float, default=0.3)
    c.add_argument("--out")
    c.set_defaults(func=cmd_cma)

    b = sub.add_parser("bench", help="run the success-rate and timing benchmark")
    b.add_argument("--cells", help="comma-separated POLYTOPESxDEGREE pairs, e.g. 2x5,3x10")
    b.add_argument("--methods", help=f"subset of {','.join(bench.METHODS)}")
    b.add_argument("--problems", type=int, help="certified problems per cell")
    b.add_argument("--seed", type=int)
    b.add_argument("--reps", type=int, help="timing repetitions per solve")
    b.add_argument("--workers", type=int)
    b.add_argument("--max-evals", type=int)
    b.add_argument("--dims", help="problem dimensions cycled over candidates, e.g. 2,3")
    b.add_argument("--config", help="JSON file with BenchConfig fields; flags override it")
    b.add_argument("--out", help="output directory (default bench_out)")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="check a solution by dense sampling")
    v.add_argument("problem")
    v.add_argument("solution")
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"polytraj {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PolytrajError, ValueError) as exc:
        print(f"polytraj {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
