"""CMA-ES over the proportion simplex, driven by the slack relaxation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import assemble, conic
from .conic import DEFAULT_SLACK_WEIGHT, Solution
from .problem import INEQUALITY, PTProblem, Proportions

SIMPLEX_FLOOR = 1e-6
INFEASIBLE_PENALTY = 1e12
EIGEN_FLOOR = 1e-14
STAGNATION_GENERATIONS = 20
STAGNATION_TOL = 1e-8

FEASIBILITY = "feasibility"
OPTIMIZE = "optimize"


def simplex_map(z) -> Proportions:
    """Softmax with an additive floor, so every share stays positive."""
    z = np.asarray(z, dtype=float).ravel()
    e = np.exp(z - z.max())
    w = SIMPLEX_FLOOR + e
    vals = w / w.sum()
    vals[-1] = 1.0 - vals[:-1].sum()
    return Proportions(vals)


def _geometric_violation(problem: PTProblem, s) -> float:
    """Smallest uniform loosening of the position rows that makes them feasible.

    Only boundary and polytope rows take part, since those carry no slack in
    the relaxation.
    """
    blocks = [assemble.boundary_blocks(problem)] + assemble.polytope_blocks(problem, s)
    n_x = blocks[0].matrix.shape[1]
    eq = [b for b in blocks if b.relation != INEQUALITY]
    ub = [b for b in blocks if b.relation == INEQUALITY]
    A_eq = np.hstack([np.vstack([b.matrix for b in eq]),
                      np.zeros((sum(b.rows for b in eq), 1))])
    b_eq = np.concatenate([b.offset for b in eq])
    M = np.vstack([b.matrix for b in ub])
    A_ub = np.hstack([M, -np.ones((M.shape[0], 1))])
    floor = np.zeros((1, n_x + 1))
    floor[0, -1] = -1.0
    A_ub = np.vstack([A_ub, floor])
    b_ub = np.concatenate([np.concatenate([b.offset for b in ub]), [0.0]])
    c = np.zeros(n_x + 1)
    c[-1] = 1.0
    raw, _ = conic.run_conic(c, A_eq, b_eq, A_ub, b_ub)
    if raw.status == conic.SOLVED:
        return float(max(raw.x[-1], 0.0))
    return 1e6


def evaluate_z(problem: PTProblem, z, w: float = DEFAULT_SLACK_WEIGHT):
    """Fitness and the underlying slack solution for one search point."""
    s = simplex_map(z)
    sol = conic.solve(conic.build_slack_relaxation(problem, s, w))
    if sol.optimal:
        return sol.objective, s, sol
    return INFEASIBLE_PENALTY * (1.0 + _geometric_violation(problem, s)), s, sol


def fitness(problem: PTProblem, z, w: float = DEFAULT_SLACK_WEIGHT) -> float:
    return evaluate_z(problem, z, w)[0]


@dataclass(frozen=True)
class CmaConfig:
    population: int | None = None
    sigma0: float = 0.3
    max_evals: int = 5000
    feasibility_tol: float = 1e-6
    mode: str = FEASIBILITY
    seed: int = 0
    weight: float = DEFAULT_SLACK_WEIGHT
    stagnation_generations: int = STAGNATION_GENERATIONS

    def __post_init__(self):
        if self.population is not None and self.population < 2:
            raise ValueError("population must be >= 2")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.mode not in (FEASIBILITY, OPTIMIZE):
            raise ValueError(f"mode must be {FEASIBILITY!r} or {OPTIMIZE!r}")

    def popsize(self, n: int) -> int:
        return self.population or 4 + int(3 * math.log(n))


class CMAES:
    """(mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu updates and CSA.

    Constants follow Hansen's tutorial defaults.
    """

    def __init__(self, x0, sigma0, popsize=None, rng=None):
        self.mean = np.array(x0, dtype=float)
        N = self.N = self.mean.size
        self.sigma = float(sigma0)
        self.lam = popsize or 4 + int(3 * math.log(N))
        self.mu = self.lam // 2
        w = math.log(self.lam / 2 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        self.cc = (4 + self.mueff / N) / (N + 4 + 2 * self.mueff / N)
        self.cs = (self.mueff + 2) / (N + self.mueff + 5)
        self.c1 = 2 / ((N + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) / ((N + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (N + 1)) - 1) + self.cs
        self.chiN = math.sqrt(N) * (1 - 1 / (4 * N) + 1 / (21 * N**2))
        self.pc = np.zeros(N)
        self.ps = np.zeros(N)
        self.C = np.eye(N)
        self.B = np.eye(N)
        self.D = np.ones(N)
        self.generation = 0
        self.rng = rng if rng is not None else np.random.default_rng()

    def ask(self) -> np.ndarray:
        Z = self.rng.standard_normal((self.lam, self.N))
        return self.mean + self.sigma * (Z * self.D) @ self.B.T

    def tell(self, X, fit):
        X = np.asarray(X)
        order = np.argsort(np.asarray(fit), kind="stable")
        old = self.mean
        sel = X[order[: self.mu]]
        self.mean = self.weights @ sel
        step = (self.mean - old) / self.sigma
        invsqrt = self.B @ np.diag(1.0 / self.D) @ self.B.T
        self.ps = (1 - self.cs) * self.ps + math.sqrt(
            self.cs * (2 - self.cs) * self.mueff) * invsqrt @ step
        self.generation += 1
        ps_norm = np.linalg.norm(self.ps)
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chiN \
            < 1.4 + 2 / (self.N + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(
            self.cc * (2 - self.cc) * self.mueff) * step
        Y = (sel - old) / self.sigma
        rank_mu = (Y.T * self.weights) @ Y
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc)
                               + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * rank_mu)
        self.sigma *= math.exp((self.cs / self.damps) * (ps_norm / self.chiN - 1))
        self._decompose()

    def _decompose(self):
        self.C = (self.C + self.C.T) / 2
        vals, vecs = np.linalg.eigh(self.C)
        vals = np.maximum(vals, EIGEN_FLOOR)
        self.C = (vecs * vals) @ vecs.T
        self.C = (self.C + self.C.T) / 2
        self.B = vecs
        self.D = np.sqrt(vals)

    def covariance_ok(self) -> bool:
        return bool(np.allclose(self.C, self.C.T) and np.all(np.linalg.eigvalsh(self.C) > 0))


def minimize(func, x0, sigma0=0.3, max_evals=5000, seed=0, target=None, popsize=None):
    """Plain CMA-ES minimisation of ``func``; returns ``(x_best, f_best, evals)``."""
    es = CMAES(x0, sigma0, popsize, np.random.default_rng(seed))
    best_x, best_f = np.array(x0, dtype=float), float(func(x0))
    evals = 1
    while evals + es.lam <= max_evals:
        X = es.ask()
        fit = [float(func(x)) for x in X]
        evals += len(X)
        es.tell(X, fit)
        k = int(np.argmin(fit))
        if fit[k] < best_f:
            best_x, best_f = X[k].copy(), fit[k]
        if target is not None and best_f <= target:
            break
        if es.sigma * es.D.max() < 1e-15:
            break
    return best_x, best_f, evals


@dataclass
class CmaResult:
    proportions: Proportions
    feasible: bool
    solution: Solution
    evals: int
    fitness: float
    trace: list = field(default_factory=list, repr=False)


def _is_feasible(sol: Solution, tol: float) -> bool:
    return sol.optimal and sol.alpha is not None and sol.alpha <= tol


def run(problem: PTProblem, config: CmaConfig = CmaConfig()) -> CmaResult:
    """Search proportions with CMA-ES.

    The initial mean (the even split) is evaluated first.  In feasibility mode
    the search stops at the first certificate; in optimize mode it runs until
    ``max_evals`` or stagnation and returns the certified sample with the
    smallest time.
    """
    k = problem.n_polytopes
    z0 = np.zeros(k)
    f0, s0, sol0 = evaluate_z(problem, z0, config.weight)
    trace = [f0]
    best_any = (f0, s0, sol0)
    best_feas = (f0, s0, sol0) if _is_feasible(sol0, config.feasibility_tol) else None

    def done():
        f, s, sol = best_feas or best_any
        return CmaResult(s, best_feas is not None, sol, len(trace), f, trace)

    if k == 1 or (best_feas is not None and config.mode == FEASIBILITY):
        return done()

    es = CMAES(z0, config.sigma0, config.popsize(k), np.random.default_rng(config.seed))
    history = [best_any[0]]
    while len(trace) + es.lam <= config.max_evals:
        X = es.ask()
        fits = []
        for x in X:
            f, s, sol = evaluate_z(problem, x, config.weight)
            trace.append(f)
            fits.append(f)
            if f < best_any[0]:
                best_any = (f, s, sol)
            if _is_feasible(sol, config.feasibility_tol):
                if best_feas is None or sol.T < best_feas[2].T:
                    best_feas = (f, s, sol)
                if config.mode == FEASIBILITY:
                    return done()
        es.tell(X, fits)
        assert es.covariance_ok()
        history.append(best_any[0])
        n_stag = config.stagnation_generations
        if len(history) > n_stag and history[-1 - n_stag] - history[-1] < STAGNATION_TOL:
            break
        if es.sigma * es.D.max() < 1e-12:
            break
    return done()
