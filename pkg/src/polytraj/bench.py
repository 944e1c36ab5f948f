"""Benchmark harness: success rates, minimum times and solve timings per cell.

A cell is a ``(n_polytopes, degree)`` pair.  Candidate problems are generated
from seeds derived from the configured base seed; a candidate joins the cell
only once CMA-ES in feasibility mode certifies it, so every success rate is a
fraction of certified problems.
"""
from __future__ import annotations

import csv
import io
import math
import os
import statistics
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cma, conic, heuristics
from .errors import CellAbandonedError, GenerationError, InvalidProblemError
from .problem import GeneratorConfig, PTProblem, generate

NAIVE = "N"
EVEN = "O"
DISTANCE = "Oh"
CMA_FEAS = "C-feas"
CMA_OPT = "C-opt"
METHODS = (NAIVE, EVEN, DISTANCE, CMA_FEAS, CMA_OPT)

OVERSAMPLING = 100
CSV_HEADER = ["cell_polytopes", "cell_degree", "seed", "method", "status", "T", "y",
              "alpha", "success"]
TIMING_HEADER = ["cell_polytopes", "cell_degree", "seed", "method", "wall_ms_median",
                 "wall_ms_mean"]


@dataclass(frozen=True)
class BenchConfig:
    cells: tuple
    problems_per_cell: int = 100
    methods: tuple = METHODS
    seed: int = 0
    reps: int = 20
    out_dir: str | None = None
    dims: tuple = (2, 3)
    max_evals: int = 5000
    workers: int | None = None
    start_at_rest: bool = False
    end_at_rest: bool = False
    decel_impossible_prob: float = 0.4

    def __post_init__(self):
        cells = tuple((int(a), int(b)) for a, b in self.cells)
        if not cells:
            raise ValueError("at least one cell is required")
        object.__setattr__(self, "cells", cells)
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.problems_per_cell < 1:
            raise ValueError("problems_per_cell must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass
class BenchRecord:
    cell_polytopes: int
    cell_degree: int
    seed: int
    method: str
    status: str
    T: float | None
    y: float | None
    alpha: float | None
    success: bool
    wall_ms_median: float
    wall_ms_mean: float
    # kept in memory so summarize can re-check successes
    problem: PTProblem | None = field(default=None, repr=False, compare=False)
    proportions: np.ndarray | None = field(default=None, repr=False, compare=False)
    solution: conic.Solution | None = field(default=None, repr=False, compare=False)

    def row(self) -> list[str]:
        return [str(self.cell_polytopes), str(self.cell_degree), str(self.seed), self.method,
                self.status, _fmt(self.T), _fmt(self.y), _fmt(self.alpha),
                "1" if self.success else "0"]


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def problem_seed(base_seed: int, cell, index: int) -> int:
    """64-bit seed of candidate ``index`` in ``cell``, independent of scheduling."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(cell[0], cell[1], index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def candidate(config: BenchConfig, cell, index: int) -> tuple[int, PTProblem]:
    seed = problem_seed(config.seed, cell, index)
    gen = GeneratorConfig(dim=config.dims[index % len(config.dims)], n_polytopes=cell[0],
                          degree=cell[1], seed=seed, start_at_rest=config.start_at_rest,
                          end_at_rest=config.end_at_rest,
                          decel_impossible_prob=config.decel_impossible_prob)
    return seed, generate(gen)


def _timed(program, reps):
    times, sol = [], None
    for _ in range(reps):
        sol = conic.solve(program)
        times.append(sol.wall_time * 1e3)
    return sol, statistics.median(times), statistics.fmean(times)


def _certified(problem, s):
    """Strict relaxation at the CMA proportions, checked by sampling."""
    strict = conic.solve_relaxation(problem, s)
    ok = strict.optimal and conic.verify(problem, s, strict).ok
    return strict, ok


def evaluate(config: BenchConfig, cell, index: int) -> list[BenchRecord] | None:
    """Records for one candidate, or ``None`` when CMA-ES cannot certify it."""
    try:
        seed, problem = candidate(config, cell, index)
    except GenerationError:
        return None
    base = dict(cell_polytopes=cell[0], cell_degree=cell[1], seed=seed, problem=problem)

    cma_cfg = cma.CmaConfig(max_evals=config.max_evals, seed=seed % 2**32, mode=cma.FEASIBILITY)
    t0 = time.perf_counter()
    feas = cma.run(problem, cma_cfg)
    feas_ms = (time.perf_counter() - t0) * 1e3
    if not feas.feasible:
        return None
    s_feas = np.asarray(feas.proportions)
    strict, ok = _certified(problem, s_feas)
    if not ok:
        return None

    records = []
    if CMA_FEAS in config.methods:
        records.append(BenchRecord(method=CMA_FEAS, status=strict.status, T=strict.T,
                                   y=strict.y, alpha=feas.solution.alpha, success=True,
                                   wall_ms_median=feas_ms, wall_ms_mean=feas_ms,
                                   proportions=s_feas, solution=strict, **base))
    if CMA_OPT in config.methods:
        t0 = time.perf_counter()
        opt = cma.run(problem, replace(cma_cfg, mode=cma.OPTIMIZE))
        opt_ms = (time.perf_counter() - t0) * 1e3
        s_opt = np.asarray(opt.proportions)
        sol, ok = _certified(problem, s_opt) if opt.feasible else (opt.solution, False)
        alpha = opt.solution.alpha
        # the optimum may sit where alpha is tiny but the strict program is
        # infeasible; the feasibility certificate is then the best proven point
        if not ok or sol.T > strict.T:
            s_opt, sol, ok, alpha = s_feas, strict, True, feas.solution.alpha
        records.append(BenchRecord(method=CMA_OPT, status=sol.status, T=sol.T, y=sol.y,
                                   alpha=alpha, success=ok,
                                   wall_ms_median=opt_ms, wall_ms_mean=opt_ms,
                                   proportions=s_opt, solution=sol, **base))

    m = cell[0] - 1
    even = np.asarray(heuristics.even_proportions(m))
    programs = []
    if NAIVE in config.methods:
        programs.append((NAIVE, even, conic.build_naive_lp(problem, even)))
    if EVEN in config.methods:
        programs.append((EVEN, even, conic.build_relaxation(problem, even)))
    if DISTANCE in config.methods:
        try:
            dist = np.asarray(heuristics.distance_proportions(problem))
            programs.append((DISTANCE, dist, conic.build_relaxation(problem, dist)))
        except InvalidProblemError:
            records.append(BenchRecord(method=DISTANCE, status=conic.NUMERICAL_FAILURE,
                                       T=None, y=None, alpha=None, success=False,
                                       wall_ms_median=0.0, wall_ms_mean=0.0, **base))
    for method, s, program in programs:
        sol, med, mean = _timed(program, config.reps)
        ok = sol.optimal and conic.verify(problem, s, sol).ok
        records.append(BenchRecord(method=method, status=sol.status,
                                   T=sol.T if sol.optimal else None,
                                   y=sol.y if sol.optimal else None, alpha=None, success=ok,
                                   wall_ms_median=med, wall_ms_mean=mean, proportions=s,
                                   solution=sol, **base))
    return sorted(records, key=lambda r: METHODS.index(r.method))


def _evaluate_star(args):
    return evaluate(*args)


def worker_count(config: BenchConfig) -> int:
    n = config.workers or os.cpu_count() or 1
    cap = os.environ.get("POLYTRAJ_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_cell(config: BenchConfig, cell, executor=None) -> list[BenchRecord]:
    """Certified records for one cell, in candidate order.

    Candidates are evaluated in batches; the first ``problems_per_cell``
    certified ones in index order are kept, so the result does not depend on
    how many workers took part.
    """
    cell = (int(cell[0]), int(cell[1]))
    target = config.problems_per_cell
    limit = OVERSAMPLING * target
    kept: list[list[BenchRecord]] = []
    index = 0
    while len(kept) < target:
        if index >= limit:
            raise CellAbandonedError(
                f"cell {cell[0]}x{cell[1]}: only {len(kept)} of {target} problems certified "
                f"after {limit} candidates")
        batch = min(max(target - len(kept), 1) * 2, limit - index)
        jobs = [(config, cell, i) for i in range(index, index + batch)]
        results = executor.map(_evaluate_star, jobs) if executor else map(_evaluate_star, jobs)
        for res in results:
            if res is not None and len(kept) < target:
                kept.append(res)
        index += batch
    return [r for recs in kept for r in recs]


@dataclass
class BenchReport:
    records: list
    abandoned: dict = field(default_factory=dict)


def run_bench(config: BenchConfig) -> BenchReport:
    workers = worker_count(config)
    report = BenchReport([])
    executor = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for cell in config.cells:
            try:
                report.records.extend(run_cell(config, cell, executor))
            except CellAbandonedError as exc:
                report.abandoned[cell] = str(exc)
    finally:
        if executor is not None:
            executor.shutdown()
    report.records.sort(key=lambda r: (r.cell_polytopes, r.cell_degree, r.seed,
                                       METHODS.index(r.method)))
    return report


# ---------------------------------------------------------------------------
# summaries

@dataclass
class Summary:
    success: list          # (n_polytopes, degree, method, successes, certified, rate)
    by_polytopes: list     # (n_polytopes, method, mean rate over degrees)
    mean_time: list        # (method, mean T on common successes, n, mean T own, n own)
    timing: list           # (n_polytopes, degree, method, median of medians, mean of means)
    omitted: list          # requested methods without any record
    recheck_failures: int = 0


def _mean(xs):
    return statistics.fmean(xs) if xs else math.nan


def summarize(records, methods=METHODS, recheck=True) -> Summary:
    """Aggregate records into the success, minimum-time and timing tables.

    Successful records that still carry their solution are verified again;
    any that fail are counted as unsuccessful.
    """
    if not records:
        raise ValueError("summarize needs at least one record")
    records = list(records)
    rechecked = 0
    if recheck:
        for r in records:
            if r.success and r.solution is not None and r.problem is not None:
                if not conic.verify(r.problem, r.proportions, r.solution).ok:
                    r.success = False
                    rechecked += 1
        if rechecked:
            warnings.warn(f"{rechecked} successful records failed re-verification", stacklevel=2)

    present = [m for m in methods if any(r.method == m for r in records)]
    omitted = [m for m in methods if m not in present]
    cells = sorted({(r.cell_polytopes, r.cell_degree) for r in records})

    success = []
    for cell in cells:
        in_cell = [r for r in records if (r.cell_polytopes, r.cell_degree) == cell]
        certified = len({r.seed for r in in_cell})
        for m in present:
            wins = sum(r.success for r in in_cell if r.method == m)
            success.append((cell[0], cell[1], m, wins, certified, wins / certified))

    by_polytopes = []
    for npol in sorted({c[0] for c in cells}):
        for m in present:
            rates = [row[5] for row in success if row[0] == npol and row[2] == m]
            by_polytopes.append((npol, m, _mean(rates)))

    by_problem: dict = {}
    for r in records:
        by_problem.setdefault((r.cell_polytopes, r.cell_degree, r.seed), {})[r.method] = r
    timed = [m for m in present if m != NAIVE]
    common = [p for p in by_problem.values()
              if all(m in p and p[m].success for m in timed)]
    mean_time = []
    for m in timed:
        own = [r.T for r in records if r.method == m and r.success]
        mean_time.append((m, _mean([p[m].T for p in common]), len(common), _mean(own), len(own)))

    timing = []
    for cell in cells:
        for m in present:
            rs = [r for r in records if (r.cell_polytopes, r.cell_degree) == cell and r.method == m]
            timing.append((cell[0], cell[1], m, statistics.median(r.wall_ms_median for r in rs),
                           _mean([r.wall_ms_mean for r in rs])))
    return Summary(success, by_polytopes, mean_time, timing, omitted, rechecked)


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def timing_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_HEADER)
    for r in records:
        w.writerow([r.cell_polytopes, r.cell_degree, r.seed, r.method,
                    f"{r.wall_ms_median:.6f}", f"{r.wall_ms_mean:.6f}"])
    return buf.getvalue()


def _table(header, rows, footer=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    if footer:
        w.writerow([footer])
    return buf.getvalue()


def write_outputs(report: BenchReport, summary: Summary, out_dir) -> dict:
    """Write every CSV and SVG; returns ``{name: path}``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    footer = f"# omitted (no records): {' '.join(summary.omitted)}" if summary.omitted else None
    abandoned = ("# abandoned cells: " + "; ".join(report.abandoned.values())
                 if report.abandoned else None)
    files = {
        "results.csv": records_csv(report.records),
        "timing.csv": timing_csv(report.records),
        "success_rates.csv": _table(
            ["cell_polytopes", "cell_degree", "method", "successes", "certified", "rate"],
            summary.success, " | ".join(f for f in (footer, abandoned) if f) or None),
        "success_by_polytopes.csv": _table(["cell_polytopes", "method", "mean_rate"],
                                           summary.by_polytopes, footer),
        "mean_time.csv": _table(["method", "mean_T_common", "n_common", "mean_T_own", "n_own"],
                                summary.mean_time, footer),
        "timing_summary.csv": _table(
            ["cell_polytopes", "cell_degree", "method", "wall_ms_median", "wall_ms_mean"],
            summary.timing, footer),
    }
    paths = {}
    for name, text in files.items():
        (out / name).write_text(text)
        paths[name] = out / name

    rate_series: dict = {}
    for npol, m, rate in summary.by_polytopes:
        rate_series.setdefault(m, []).append((npol, rate))
    (out / "success_by_polytopes.svg").write_text(
        line_chart(rate_series, "Success rate by number of polytopes", "polytopes", "rate"))
    time_series: dict = {}
    for npol in sorted({row[0] for row in summary.timing}):
        for m in {row[2] for row in summary.timing}:
            vals = [row[3] for row in summary.timing if row[0] == npol and row[2] == m]
            if vals:
                time_series.setdefault(m, []).append((npol, statistics.median(vals)))
    for m in time_series:
        time_series[m].sort()
    (out / "timing.svg").write_text(
        line_chart(dict(sorted(time_series.items())), "Median solve time", "polytopes", "ms"))
    paths["success_by_polytopes.svg"] = out / "success_by_polytopes.svg"
    paths["timing.svg"] = out / "timing.svg"
    return paths


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_chart(series: dict, title: str, xlabel: str, ylabel: str,
               width: int = 480, height: int = 320) -> str:
    """Minimal SVG line plot: one polyline per series plus axes and a legend."""
    pts = [(x, y) for vals in series.values() for x, y in vals if np.isfinite(y)]
    left, right, top, bottom = 56, 110, 30, 44
    pw, ph = width - left - right, height - top - bottom
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(0.0, min(p[1] for p in pts)), max(p[1] for p in pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{xv:g}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">{ylabel}</text>')
    for k, (name, vals) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in vals if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        for x, y in vals:
            if np.isfinite(y):
                out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
        ly = top + 14 * k + 8
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
