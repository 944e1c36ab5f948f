"""Bezier curve algebra expressed as linear maps on control points.

Every map returned here is a dense ``(k, n + 1)`` array whose row ``i`` gives
the coefficients of output control point ``i`` as a combination of the
original control points.  The same row acts on each coordinate, so for a
control-point array ``X`` of shape ``(n + 1, d)`` the mapped points are simply
``M @ X``.  On the stacked variable vector ``x = X.ravel()`` (point-major) the
equivalent operator is ``np.kron(M, np.eye(d))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

# smallest proportion accepted by traversal_split_maps
MIN_PROPORTION = 1e-9
_SUM_TOL = 1e-12
_DENOM_FLOOR = 1e-12


def bernstein(n: int, i: int, u):
    """Bernstein basis polynomial ``C(n, i) u^i (1 - u)^(n - i)``.

    ``u`` may be a scalar or an array of values in ``[0, 1]``.
    """
    if n < 0 or not 0 <= i <= n:
        raise ValueError(f"Bernstein index out of range: n={n}, i={i}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0) or np.any(u_arr > 1.0):
        raise ValueError("Bernstein parameter must lie in [0, 1]")
    val = comb(n, i) * u_arr**i * (1.0 - u_arr) ** (n - i)
    return float(val) if val.ndim == 0 else val


def _casteljau(points: np.ndarray, u: float) -> np.ndarray:
    pts = np.array(points, dtype=float, copy=True)
    n = pts.shape[0] - 1
    for r in range(1, n + 1):
        pts[: n - r + 1] = (1.0 - u) * pts[: n - r + 1] + u * pts[1 : n - r + 2]
    return pts[0]


@dataclass(frozen=True, eq=False)
class BezierCurve:
    """A degree-n Bezier curve in R^d spanning ``[0, duration]``."""

    control_points: np.ndarray
    duration: float = 1.0

    def __post_init__(self):
        pts = np.array(self.control_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("need at least two control points (degree >= 1)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "control_points", pts)
        object.__setattr__(self, "duration", float(self.duration))

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.control_points.shape[1]

    def __call__(self, t):
        return evaluate(self, t)

    def derivative(self, order: int = 1) -> "BezierCurve":
        """Hodograph of the given order, time-scaled to the same duration."""
        maps = derivative_maps(self.degree, order)
        pts = maps @ self.control_points / self.duration**order
        if pts.shape[0] == 1:
            # constant curve, represented at degree 1
            pts = np.vstack([pts, pts])
        return BezierCurve(pts, self.duration)


def evaluate(curve: BezierCurve, t: float) -> np.ndarray:
    """Point of ``curve`` at time ``t`` using the De Casteljau recurrence."""
    T = curve.duration
    if not -1e-12 * T <= t <= T * (1.0 + 1e-12):
        raise ValueError(f"t={t} outside [0, {T}]")
    u = min(max(t / T, 0.0), 1.0)
    return _casteljau(curve.control_points, u)


def derivative_maps(n: int, order: int) -> np.ndarray:
    """Maps to the control points of the ``order``-th hodograph.

    Returns an ``(n + 1 - order, n + 1)`` array.  The ``1 / T**order``
    time factor is *not* included.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if order > n:
        raise ValueError(f"derivative order {order} exceeds degree {n}")
    maps = np.eye(n + 1)
    for k in range(order):
        deg = n - k
        maps = deg * (maps[1:] - maps[:-1])
    return maps


def decasteljau_split_maps(n: int, u: float) -> tuple[np.ndarray, np.ndarray]:
    """Split maps at parameter ``u``.

    Returns ``(left, right)``, each ``(n + 1, n + 1)``: applied to the control
    points they give the sub-curves on ``[0, uT]`` and ``[uT, T]``.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"split parameter {u} outside [0, 1]")
    # run the recurrence on the identity so every level stays a linear map
    levels = [np.eye(n + 1)]
    for _ in range(n):
        prev = levels[-1]
        levels.append((1.0 - u) * prev[:-1] + u * prev[1:])
    left = np.array([levels[i][0] for i in range(n + 1)])
    right = np.array([levels[n - i][i] for i in range(n + 1)])
    return left, right


def traversal_split_maps(n: int, s) -> list[np.ndarray]:
    """Per-window maps for consecutive time proportions ``s``.

    Window ``j`` covers ``[S_{j-1} T, S_j T]`` where ``S`` is the cumulative
    sum of ``s``.  The remainder curve is split left to right and every
    returned map acts on the original control points.
    """
    s = np.asarray(s, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("proportions must be non-empty")
    if np.any(~np.isfinite(s)) or np.any(s < MIN_PROPORTION):
        raise ValueError(f"proportions must all be >= {MIN_PROPORTION}")
    if abs(s.sum() - 1.0) > _SUM_TOL:
        raise ValueError(f"proportions sum to {s.sum():.17g}, expected 1")
    remainder = np.eye(n + 1)
    consumed = 0.0
    out = []
    for sj in s[:-1]:
        denom = 1.0 - consumed
        if denom < _DENOM_FLOOR:
            raise ValueError("remaining proportion vanished while splitting")
        u = min(sj / denom, 1.0)
        left, right = decasteljau_split_maps(n, u)
        out.append(left @ remainder)
        remainder = right @ remainder
        consumed += sj
    out.append(remainder)
    return out
