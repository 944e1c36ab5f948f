"""Linear constraint blocks on the stacked control-point vector.

A block reads ``matrix @ x (relation) offset * scale`` where ``scale`` is 1,
the total time ``T`` or the squared-time variable ``y`` depending on
``rhs_scale``.  ``x`` is the point-major stack of the ``n + 1`` original
control points.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import geometry
from .curves import derivative_maps, traversal_split_maps
from .errors import UnsupportedDegreeError
from .problem import EQUALITY, INEQUALITY, PTProblem, as_proportions

CONSTANT = "constant"
TIME = "time"
TIME_SQUARED = "time_squared"


@dataclass(frozen=True, eq=False)
class ConstraintBlock:
    matrix: np.ndarray
    offset: np.ndarray
    relation: str
    rhs_scale: str = CONSTANT
    family: str = ""

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


def _per_point(maps: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # rows applied to each mapped control point
    return np.kron(maps, rows)


def polytope_blocks(problem: PTProblem, s) -> list[ConstraintBlock]:
    s = as_proportions(s)
    if len(s) != problem.n_polytopes:
        raise ValueError(f"{len(s)} proportions for {problem.n_polytopes} polytopes")
    n = problem.degree
    blocks = []
    for j, (C, poly) in enumerate(zip(traversal_split_maps(n, s.values), problem.polytopes)):
        blocks.append(ConstraintBlock(
            _per_point(C, poly.normals), np.tile(poly.offsets, n + 1),
            INEQUALITY, CONSTANT, family=f"polytope[{j}]"))
    return blocks


def _derivative_blocks(problem, bounds, order, scale, family):
    n = problem.degree
    D = derivative_maps(n, order)
    blocks = []
    for k, b in enumerate(bounds):
        blocks.append(ConstraintBlock(
            _per_point(D, b.matrix), np.tile(b.offset, D.shape[0]),
            b.relation, scale, family=f"{family}[{k}]"))
    return blocks


def velocity_blocks(problem: PTProblem) -> list[ConstraintBlock]:
    """Velocity bound rows (scaled by T) plus boundary-velocity equalities."""
    n, d = problem.degree, problem.dim
    blocks = _derivative_blocks(problem, problem.velocity_bounds, 1, TIME, "velocity")
    D = derivative_maps(n, 1)
    eye = np.eye(d)
    for name, target, row in (("start_velocity", problem.start_velocity, D[:1]),
                              ("end_velocity", problem.end_velocity, D[-1:])):
        if target is not None:
            blocks.append(ConstraintBlock(_per_point(row, eye), np.array(target, dtype=float),
                                          EQUALITY, TIME, family=name))
    return blocks


def acceleration_blocks(problem: PTProblem) -> list[ConstraintBlock]:
    if not problem.acceleration_bounds:
        return []
    if problem.degree < 2:
        raise UnsupportedDegreeError("acceleration bounds need degree >= 2")
    return _derivative_blocks(problem, problem.acceleration_bounds, 2, TIME_SQUARED,
                              "acceleration")


def boundary_blocks(problem: PTProblem) -> ConstraintBlock:
    n, d = problem.degree, problem.dim
    sel = np.zeros((2, n + 1))
    sel[0, 0] = 1.0
    sel[1, n] = 1.0
    if not geometry.contains(problem.polytopes[0], problem.start, 1e-9):
        warnings.warn("start position lies outside the first polytope", stacklevel=2)
    if not geometry.contains(problem.polytopes[-1], problem.end, 1e-9):
        warnings.warn("end position lies outside the last polytope", stacklevel=2)
    return ConstraintBlock(_per_point(sel, np.eye(d)),
                           np.concatenate([problem.start, problem.end]),
                           EQUALITY, CONSTANT, family="boundary")


def all_blocks(problem: PTProblem, s) -> list[ConstraintBlock]:
    return ([boundary_blocks(problem)] + polytope_blocks(problem, s)
            + velocity_blocks(problem) + acceleration_blocks(problem))


def expected_row_count(problem: PTProblem) -> int:
    n, d = problem.degree, problem.dim
    rows = sum((n + 1) * p.n_facets for p in problem.polytopes)
    rows += n * sum(b.rows for b in problem.velocity_bounds)
    rows += (n - 1) * sum(b.rows for b in problem.acceleration_bounds)
    rows += d * ((problem.start_velocity is not None) + (problem.end_velocity is not None))
    return rows + 2 * d


def velocity_lp_reducible(problem: PTProblem) -> bool:
    """True when no velocity row is an equality and the bounds admit v = 0.

    Under that condition the full problem stays linearly constrained.
    """
    if problem.start_velocity is not None or problem.end_velocity is not None:
        return False
    return all(b.relation == INEQUALITY and np.all(b.offset >= 0)
               for b in problem.velocity_bounds)
