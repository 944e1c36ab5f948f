"""Initial time proportions: even split and shortest-path distance ratios."""
from __future__ import annotations

import numpy as np

from . import geometry
from .conic import SOLVED, run_conic
from .errors import InvalidProblemError
from .problem import PTProblem, Proportions

SEGMENT_FLOOR = 1e-4


def even_proportions(m: int) -> Proportions:
    """``m + 1`` equal shares (``m`` is the index of the last polytope)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    k = m + 1
    vals = np.full(k, 1.0 / k)
    vals[-1] = 1.0 - vals[:-1].sum()
    return Proportions(vals)


def shortest_path(problem: PTProblem):
    """Shortest polyline start -> w_1 -> ... -> w_m -> end.

    Each waypoint ``w_j`` lies in the intersection of polytopes ``j - 1`` and
    ``j``.  Returns ``(waypoints, segment_lengths)`` with the waypoints
    including both endpoints.
    """
    polys = problem.polytopes
    m = len(polys) - 1
    d = problem.dim
    for j in range(m):
        if geometry.intersection_point(polys[j : j + 2], 1e-9) is None:
            raise InvalidProblemError(f"polytopes {j} and {j + 1} do not intersect")
    if m == 0:
        length = float(np.linalg.norm(problem.end - problem.start))
        return np.vstack([problem.start, problem.end]), np.array([length])

    n_w = m * d
    num_vars = n_w + m + 1
    c = np.zeros(num_vars)
    c[n_w:] = 1.0

    blocks, rhs = [], []
    for j in range(1, m + 1):
        for poly in (polys[j - 1], polys[j]):
            A = np.zeros((poly.n_facets, num_vars))
            A[:, (j - 1) * d : j * d] = poly.normals
            blocks.append(A)
            rhs.append(poly.offsets)
    A_ub = np.vstack(blocks)
    b_ub = np.concatenate(rhs)

    socs = []
    for j in range(m + 1):
        # cone vector (t_j, w_{j+1} - w_j) written as b - A v
        A = np.zeros((d + 1, num_vars))
        b = np.zeros(d + 1)
        A[0, n_w + j] = -1.0
        if j + 1 <= m:
            A[1:, j * d : (j + 1) * d] -= np.eye(d)
        else:
            b[1:] += problem.end
        if j >= 1:
            A[1:, (j - 1) * d : j * d] += np.eye(d)
        else:
            b[1:] -= problem.start
        socs.append((A, b))

    raw, _ = run_conic(c, np.zeros((0, num_vars)), np.zeros(0), A_ub, b_ub, socs)
    if raw.status != SOLVED:
        raise InvalidProblemError(f"shortest-path program failed: {raw.status}")
    v = np.asarray(raw.x)
    pts = np.vstack([problem.start, v[:n_w].reshape(m, d), problem.end])
    lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return pts, lengths


def distance_proportions(problem: PTProblem) -> Proportions:
    _, lengths = shortest_path(problem)
    lengths = np.maximum(lengths, SEGMENT_FLOOR)
    vals = lengths / lengths.sum()
    vals[-1] = 1.0 - vals[:-1].sum()
    return Proportions(vals)
