"""Polytopes in half-space form, 2D/3D hulls and interior sampling."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateHullError, SamplingError

COPLANAR_TOL = 1e-9
MAX_REJECTIONS = 10_000
_UNIT_TOL = 1e-12


def _normalize_rows(normals, offsets):
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("half-space normal with zero norm")
    # rows already at unit length are left bit-identical
    scale = np.where(np.abs(norms - 1.0) <= _UNIT_TOL, 1.0, norms)
    return normals / scale[:, None], offsets / scale


class Polytope:
    """Convex set ``{y : normals @ y <= offsets}`` with unit-length rows.

    ``vertices`` is an optional cache filled by hull construction; it speeds
    up sampling but does not take part in equality.
    """

    __slots__ = ("normals", "offsets", "vertices")

    def __init__(self, normals, offsets, vertices=None):
        H = np.atleast_2d(np.asarray(normals, dtype=float))
        h = np.asarray(offsets, dtype=float).ravel()
        if H.shape[0] != h.shape[0]:
            raise ValueError(f"{H.shape[0]} normals but {h.shape[0]} offsets")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise ValueError("polytope data must be finite")
        H, h = _normalize_rows(H, h)
        H.setflags(write=False)
        h.setflags(write=False)
        self.normals = H
        self.offsets = h
        if vertices is not None:
            vertices = np.asarray(vertices, dtype=float)
            vertices.setflags(write=False)
        self.vertices = vertices

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def n_facets(self) -> int:
        return self.normals.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return np.array_equal(self.normals, other.normals) and np.array_equal(
            self.offsets, other.offsets
        )

    def __repr__(self):
        return f"Polytope(dim={self.dim}, facets={self.n_facets})"

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.vertices is not None:
            return self.vertices.min(axis=0), self.vertices.max(axis=0)
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for k in range(self.dim):
            c = np.zeros(self.dim)
            for sign, store in ((1.0, lo), (-1.0, hi)):
                c[k] = sign
                res = linprog(c, A_ub=self.normals, b_ub=self.offsets,
                              bounds=[(None, None)] * self.dim, method="highs")
                if res.status != 0:
                    raise SamplingError("polytope is empty or unbounded")
                store[k] = res.x[k]
        return lo, hi


def _facets_from_equations(eq: np.ndarray):
    """Merge coplanar (triangulated) Qhull facets."""
    H = eq[:, :-1]
    h = -eq[:, -1]
    norms = np.linalg.norm(H, axis=1)
    H = H / norms[:, None]
    h = h / norms
    keep_H, keep_h = [], []
    for row, off in zip(H, h):
        dup = False
        for kr, ko in zip(keep_H, keep_h):
            if np.all(np.abs(kr - row) <= COPLANAR_TOL) and abs(ko - off) <= COPLANAR_TOL:
                dup = True
                break
        if not dup:
            keep_H.append(row)
            keep_h.append(off)
    return np.array(keep_H), np.array(keep_h)


def convex_hull(points, d: int | None = None) -> Polytope:
    """Half-space representation of the hull of 2D or 3D points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if d is None:
        d = pts.shape[1]
    if d not in (2, 3) or pts.shape[1] != d:
        raise ValueError("convex_hull supports 2D and 3D points only")
    if pts.shape[0] < d + 1:
        raise DegenerateHullError(f"need at least {d + 1} points, got {pts.shape[0]}")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= COPLANAR_TOL * max(1.0, sv[0]):
        raise DegenerateHullError("points are affinely dependent")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateHullError(str(exc)) from exc
    H, h = _facets_from_equations(hull.equations)
    # Qhull's offsets carry roundoff; make every input point satisfy the facets
    slack = (pts @ H.T - h).max(axis=0)
    h = h + np.maximum(slack, 0.0)
    return Polytope(H, h, vertices=pts[hull.vertices])


def contains(p: Polytope, y, tol: float = 0.0) -> bool:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != p.dim:
        raise ValueError(f"point has dimension {y.shape[0]}, polytope {p.dim}")
    return bool(np.all(p.normals @ y <= p.offsets + tol))


def translate(p: Polytope, v) -> Polytope:
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != p.dim:
        raise ValueError("translation dimension mismatch")
    verts = None if p.vertices is None else p.vertices + v
    return Polytope(p.normals, p.offsets + p.normals @ v, vertices=verts)


def sample_interior(p: Polytope, rng: np.random.Generator) -> np.ndarray:
    """Uniform point of ``p`` by rejection over its bounding box."""
    lo, hi = p.bounding_box()
    if np.any(hi - lo <= _UNIT_TOL):
        raise SamplingError("polytope has an empty interior")
    for _ in range(MAX_REJECTIONS):
        y = rng.uniform(lo, hi)
        if contains(p, y, 0.0):
            return y
    raise SamplingError(f"{MAX_REJECTIONS} consecutive rejections")


def intersection_point(polys, tol: float = 0.0):
    """Some point in the intersection of ``polys`` (LP), or ``None`` if empty."""
    H = np.vstack([q.normals for q in polys])
    h = np.concatenate([q.offsets for q in polys]) + tol
    d = H.shape[1]
    res = linprog(np.zeros(d), A_ub=H, b_ub=h, bounds=[(None, None)] * d, method="highs")
    return res.x if res.status == 0 else None
