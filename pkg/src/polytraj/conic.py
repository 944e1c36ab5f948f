"""Convex programs over control points and time, their solution and checking.

Variable layout is fixed: the ``(n + 1) * d`` stacked control points first,
then ``T``, then ``y`` (the squared-time surrogate), then the slack ``alpha``.
Variables a program does not use are simply absent; ``ConicProgram.index``
records where each one lives.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from . import assemble, ipm
from .assemble import CONSTANT, TIME, TIME_SQUARED
from .curves import bernstein
from .errors import ProgramMisuseError
from .problem import EQUALITY, INEQUALITY, PTProblem, as_proportions

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

DEFAULT_SLACK_WEIGHT = 1e4
DEFAULT_NAIVE_TIME = 1000.0
FEAS_TOL = 1e-7

RELAXATION = "relaxation"
SLACK = "slack"
LP_NO_ACCEL = "no_accel"
LP_NO_VELOCITY = "no_velocity"
NAIVE = "naive"


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """``min c.v`` subject to ``A_eq v = b_eq``, ``A_ub v <= b_ub`` and
    optionally ``T^2 <= y`` encoded as ``||(2T, y - 1)|| <= y + 1``."""

    kind: str
    degree: int
    dim: int
    num_vars: int
    index: dict
    objective: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    soc: tuple | None = None
    fixed: dict = field(default_factory=dict)
    row_families: tuple = ()

    @property
    def n_control(self) -> int:
        return (self.degree + 1) * self.dim


@dataclass(frozen=True, eq=False)
class Solution:
    status: str
    control_points: np.ndarray | None = None
    T: float | None = None
    y: float | None = None
    alpha: float | None = None
    objective: float | None = None
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Rows:
    def __init__(self):
        self.eq, self.eq_rhs, self.ub, self.ub_rhs, self.families = [], [], [], [], []

    def add(self, matrix, rhs, relation, family):
        if relation == EQUALITY:
            self.eq.append(matrix)
            self.eq_rhs.append(rhs)
        else:
            self.ub.append(matrix)
            self.ub_rhs.append(rhs)
            self.families.append((family, matrix.shape[0]))

    def stack(self, num_vars):
        def _s(blocks, rhs):
            if not blocks:
                return np.zeros((0, num_vars)), np.zeros(0)
            return np.vstack(blocks), np.concatenate(rhs)
        A_eq, b_eq = _s(self.eq, self.eq_rhs)
        A_ub, b_ub = _s(self.ub, self.ub_rhs)
        return A_eq, b_eq, A_ub, b_ub


def _layout(n_x, names):
    index = {}
    for k, name in enumerate(names):
        index[name] = n_x + k
    return index, n_x + len(names)


def _compile(problem, s, kind, index, num_vars, fixed, slack=False):
    """Turn constraint blocks into rows over the full variable vector."""
    rows = _Rows()
    n_x = (problem.degree + 1) * problem.dim
    for block in assemble.all_blocks(problem, s):
        k = block.rows
        lhs = np.zeros((k, num_vars))
        lhs[:, :n_x] = block.matrix
        rhs = np.zeros(k)
        if block.rhs_scale == CONSTANT:
            rhs = np.array(block.offset, dtype=float)
        else:
            var = "T" if block.rhs_scale == TIME else "y"
            if var in fixed:
                rhs = block.offset * fixed[var]
            elif var in index:
                lhs[:, index[var]] = -block.offset
            elif np.any(block.offset != 0):
                raise ProgramMisuseError(
                    f"{block.family} rows depend on {var}, which this {kind} program lacks")
            if slack and block.relation == INEQUALITY:
                lhs[:, index["alpha"]] = -1.0
        rows.add(lhs, rhs, block.relation, block.family)
    return rows


def _floor_row(num_vars, col, value, rows, family):
    r = np.zeros((1, num_vars))
    r[0, col] = -1.0
    rows.add(r, np.array([-value]), INEQUALITY, family)


def _finish(kind, problem, index, num_vars, c, rows, soc=None, fixed=None):
    A_eq, b_eq, A_ub, b_ub = rows.stack(num_vars)
    return ConicProgram(kind=kind, degree=problem.degree, dim=problem.dim,
                        num_vars=num_vars, index=index, objective=c,
                        A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, soc=soc,
                        fixed=dict(fixed or {}), row_families=tuple(rows.families))


def build_relaxation(problem: PTProblem, s) -> ConicProgram:
    """Relaxed minimum-time program: ``min y - T`` with ``T^2 <= y``, ``T >= 1``."""
    n_x = (problem.degree + 1) * problem.dim
    index, num_vars = _layout(n_x, ["T", "y"])
    rows = _compile(problem, as_proportions(s), RELAXATION, index, num_vars, {})
    _floor_row(num_vars, index["T"], 1.0, rows, "time_floor")
    c = np.zeros(num_vars)
    c[index["y"]] = 1.0
    c[index["T"]] = -1.0
    return _finish(RELAXATION, problem, index, num_vars, c, rows,
                   soc=(index["T"], index["y"]))


def build_slack_relaxation(problem: PTProblem, s, w: float = DEFAULT_SLACK_WEIGHT) -> ConicProgram:
    """Relaxation whose derivative inequalities are loosened by ``alpha >= 0``.

    The objective becomes ``y - T + w * alpha``.
    """
    if w < 0:
        raise ValueError("slack weight must be non-negative")
    n_x = (problem.degree + 1) * problem.dim
    index, num_vars = _layout(n_x, ["T", "y", "alpha"])
    rows = _compile(problem, as_proportions(s), SLACK, index, num_vars, {}, slack=True)
    _floor_row(num_vars, index["T"], 1.0, rows, "time_floor")
    _floor_row(num_vars, index["alpha"], 0.0, rows, "alpha_floor")
    c = np.zeros(num_vars)
    c[index["y"]] = 1.0
    c[index["T"]] = -1.0
    c[index["alpha"]] = w
    return _finish(SLACK, problem, index, num_vars, c, rows, soc=(index["T"], index["y"]))


def build_lp_special(problem: PTProblem, s, case: str) -> ConicProgram:
    """Linear programs for problems lacking one derivative family.

    ``no_accel`` minimises ``T``; ``no_velocity`` minimises ``y`` and the
    time is recovered as ``sqrt(y)``.  Both keep the unit time floor so they
    agree with the relaxation.
    """
    s = as_proportions(s)
    n_x = (problem.degree + 1) * problem.dim
    if case == LP_NO_ACCEL:
        if problem.acceleration_bounds:
            raise ProgramMisuseError("no_accel LP called on a problem with acceleration bounds")
        index, num_vars = _layout(n_x, ["T"])
        rows = _compile(problem, s, case, index, num_vars, {})
        _floor_row(num_vars, index["T"], 1.0, rows, "time_floor")
        c = np.zeros(num_vars)
        c[index["T"]] = 1.0
    elif case == LP_NO_VELOCITY:
        index, num_vars = _layout(n_x, ["y"])
        # velocity rows with zero offsets (rest constraints) stay as plain rows
        rows = _compile(problem, s, case, index, num_vars, {})
        _floor_row(num_vars, index["y"], 1.0, rows, "time_floor")
        c = np.zeros(num_vars)
        c[index["y"]] = 1.0
    else:
        raise ValueError(f"unknown LP case {case!r}")
    return _finish(case, problem, index, num_vars, c, rows)


def build_naive_lp(problem: PTProblem, s, T_fixed: float = DEFAULT_NAIVE_TIME) -> ConicProgram:
    """Feasibility LP in the control points with the time fixed to ``T_fixed``."""
    if not T_fixed > 0:
        raise ValueError("T_fixed must be positive")
    n_x = (problem.degree + 1) * problem.dim
    fixed = {"T": float(T_fixed), "y": float(T_fixed) ** 2}
    index, num_vars = _layout(n_x, [])
    rows = _compile(problem, as_proportions(s), NAIVE, index, num_vars, fixed)
    return _finish(NAIVE, problem, index, num_vars, np.zeros(num_vars), rows, fixed=fixed)


# ---------------------------------------------------------------------------
# solving

IPM = "ipm"
CLARABEL = "clarabel"
AUTO = "auto"
# Above this many inequality rows the dense in-house solver wins over
# Clarabel's sparse factorisation, whose columns are all dense here.
AUTO_IPM_ROWS = 1000

SOLVED = ipm.SOLVED
PRIMAL_INFEASIBLE = ipm.PRIMAL_INFEASIBLE


@dataclass(frozen=True)
class RawResult:
    status: str
    x: np.ndarray | None
    iterations: int
    backend: str


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def _run_clarabel(c, A_eq, b_eq, A_ub, b_ub, socs):
    blocks = [A_eq, A_ub] + [A for A, _ in socs]
    A = sp.csc_matrix(np.vstack(blocks))
    b = np.concatenate([b_eq, b_ub] + [b for _, b in socs])
    cones = []
    if A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
    if A_ub.shape[0]:
        cones.append(clarabel.NonnegativeConeT(A_ub.shape[0]))
    for A_s, _ in socs:
        cones.append(clarabel.SecondOrderConeT(A_s.shape[0]))
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.max_iter = 200
    st.tol_gap_abs = st.tol_gap_rel = st.tol_feas = 1e-9
    st.tol_infeas_abs = st.tol_infeas_rel = 1e-9
    st.max_threads = 1
    n = c.shape[0]
    raw = clarabel.DefaultSolver(sp.csc_matrix((n, n)), c, A, b, cones, st).solve()
    status = {"Solved": SOLVED, "AlmostSolved": SOLVED,
              "PrimalInfeasible": PRIMAL_INFEASIBLE,
              "AlmostPrimalInfeasible": PRIMAL_INFEASIBLE,
              "DualInfeasible": ipm.DUAL_INFEASIBLE,
              "MaxIterations": ipm.MAX_ITERATIONS}.get(str(raw.status), ipm.NUMERICAL_ERROR)
    return RawResult(status, np.array(raw.x, dtype=float), int(raw.iterations), CLARABEL)


def run_conic(c, A_eq, b_eq, A_ub, b_ub, socs=(), backend=AUTO):
    """Solve ``min c.v`` over equalities, inequalities and second-order cones.

    Each SOC entry is ``(A, b)`` meaning ``b - A v`` lies in the cone, first
    component being the norm bound.  ``backend`` is ``"clarabel"``, ``"ipm"``
    (the dense solver in :mod:`polytraj.ipm`) or ``"auto"``, which picks by
    problem height.  Returns a :class:`RawResult` and the elapsed solve time
    in seconds.
    """
    c = np.asarray(c, dtype=float)
    A_eq, A_ub = _dense(A_eq), _dense(A_ub)
    b_eq, b_ub = np.asarray(b_eq, dtype=float), np.asarray(b_ub, dtype=float)
    socs = [(_dense(A), np.asarray(b, dtype=float)) for A, b in socs]
    if backend == AUTO:
        backend = IPM if A_ub.shape[0] >= AUTO_IPM_ROWS else CLARABEL
    t0 = time.perf_counter()
    if backend == CLARABEL:
        raw = _run_clarabel(c, A_eq, b_eq, A_ub, b_ub, socs)
    elif backend == IPM:
        G = np.vstack([A_ub] + [A for A, _ in socs])
        h = np.concatenate([b_ub] + [b for _, b in socs])
        res = ipm.solve(c, G, h, A_ub.shape[0], [A.shape[0] for A, _ in socs],
                        A_eq if A_eq.shape[0] else None, b_eq)
        raw = RawResult(res.status, res.x, res.iterations, IPM)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return raw, time.perf_counter() - t0


def _soc_rows(program):
    iT, iy = program.soc
    A = np.zeros((3, program.num_vars))
    A[0, iy] = -1.0
    A[1, iT] = -2.0
    A[2, iy] = -1.0
    return A, np.array([1.0, 0.0, -1.0])


def _relative_violation(A, b, v, equality):
    if A.shape[0] == 0:
        return 0.0
    Av = A @ v
    scale = 1.0 + np.abs(b) + np.abs(A) @ np.abs(v)
    r = (Av - b) / scale
    return float(np.max(np.abs(r)) if equality else max(np.max(r), 0.0))


def residuals(program: ConicProgram, v) -> dict:
    out = {
        "equality": _relative_violation(program.A_eq, program.b_eq, v, True),
        "inequality": _relative_violation(program.A_ub, program.b_ub, v, False),
        "cone": 0.0,
    }
    if program.soc is not None:
        T, y = v[program.soc[0]], v[program.soc[1]]
        out["cone"] = float(max(T * T - y, 0.0) / max(1.0, abs(y)))
    return out


def solve(program: ConicProgram, backend: str = AUTO) -> Solution:
    """Interior-point solve; ``optimal`` is only reported after a residual check."""
    socs = [_soc_rows(program)] if program.soc is not None else []
    raw, elapsed = run_conic(program.objective, program.A_eq, program.b_eq,
                             program.A_ub, program.b_ub, socs, backend)
    status = raw.status
    info = {"solver_status": status, "iterations": raw.iterations, "backend": raw.backend}
    if status == PRIMAL_INFEASIBLE:
        return Solution(INFEASIBLE, wall_time=elapsed, info=info)
    if status != SOLVED:
        return Solution(NUMERICAL_FAILURE, wall_time=elapsed, info=info)
    v = raw.x
    res = residuals(program, v)
    info["residuals"] = res
    if max(res.values()) > FEAS_TOL:
        return Solution(NUMERICAL_FAILURE, wall_time=elapsed, info=info)
    idx = program.index
    pts = v[: program.n_control].reshape(program.degree + 1, program.dim)
    if "T" in idx:
        T = float(v[idx["T"]])
    elif "T" in program.fixed:
        T = program.fixed["T"]
    else:
        T = float(np.sqrt(v[idx["y"]]))
    if "y" in idx:
        y = float(v[idx["y"]])
    else:
        y = program.fixed.get("y", T * T)
    alpha = float(v[idx["alpha"]]) if "alpha" in idx else None
    return Solution(OPTIMAL, control_points=pts, T=T, y=y, alpha=alpha,
                    objective=float(program.objective @ v), wall_time=elapsed, info=info)


def solve_relaxation(problem: PTProblem, s, backend: str = AUTO) -> Solution:
    return solve(build_relaxation(problem, s), backend)


# ---------------------------------------------------------------------------
# independent feasibility check by dense sampling

@dataclass
class VerifyReport:
    max_violation: dict
    tol: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.max_violation.values())

    @property
    def worst(self) -> float:
        return max(self.max_violation.values(), default=0.0)

    def as_dict(self) -> dict:
        return {"ok": self.ok, "tol": self.tol, "n_samples": self.n_samples,
                "max_violation": dict(self.max_violation)}


def _basis(n, u, order):
    """Bernstein basis derivatives w.r.t. u, shape (len(u), n + 1)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((u.size, n + 1))
    if order == 0:
        for i in range(n + 1):
            out[:, i] = bernstein(n, i, u)
        return out
    lower = _basis(n - 1, u, order - 1)
    # d/du B_i^n = n (B_{i-1}^{n-1} - B_i^{n-1})
    out[:, 1:] += n * lower
    out[:, :-1] -= n * lower
    return out


def _bound_violation(bounds, values):
    worst = 0.0
    for b in bounds:
        r = values @ b.matrix.T - b.offset
        worst = max(worst, float(np.max(np.abs(r)) if b.relation == EQUALITY else np.max(r)))
    return max(worst, 0.0)


def verify(problem: PTProblem, s, solution: Solution, n_samples: int = 1000,
           tol: float = 1e-6) -> VerifyReport:
    """Sample the curve and report the largest violation of each constraint family."""
    if solution.control_points is None or solution.T is None:
        raise ValueError("verify needs a solution with control points and T")
    s = as_proportions(s)
    X = np.asarray(solution.control_points, dtype=float)
    T = float(solution.T)
    n = X.shape[0] - 1
    u = np.linspace(0.0, 1.0, max(int(n_samples), 2))
    pos = _basis(n, u, 0) @ X

    cum = np.concatenate([[0.0], np.cumsum(s.values)])
    cum[-1] = 1.0
    poly_viol = np.full(u.size, np.inf)
    for j, poly in enumerate(problem.polytopes):
        inside = (u >= cum[j] - 1e-12) & (u <= cum[j + 1] + 1e-12)
        if not np.any(inside):
            continue
        v = np.max(pos[inside] @ poly.normals.T - poly.offsets, axis=1)
        poly_viol[inside] = np.minimum(poly_viol[inside], v)
    poly_viol[~np.isfinite(poly_viol)] = 0.0

    report = {"polytope": max(float(np.max(poly_viol)), 0.0)}
    ends = np.array([0.0, 1.0])
    p_end = _basis(n, ends, 0) @ X
    boundary = max(np.max(np.abs(p_end[0] - problem.start)),
                   np.max(np.abs(p_end[1] - problem.end)))
    if n >= 1:
        vel = _basis(n, u, 1) @ X / T
        report["velocity"] = _bound_violation(problem.velocity_bounds, vel)
        v_end = _basis(n, ends, 1) @ X / T
        for target, vv in ((problem.start_velocity, v_end[0]), (problem.end_velocity, v_end[1])):
            if target is not None:
                boundary = max(boundary, float(np.max(np.abs(vv - target))))
    if problem.acceleration_bounds:
        acc = _basis(n, u, 2) @ X / (T * T) if n >= 2 else np.zeros((u.size, problem.dim))
        report["acceleration"] = _bound_violation(problem.acceleration_bounds, acc)
    report["boundary"] = float(boundary)
    return VerifyReport(report, tol, u.size)
