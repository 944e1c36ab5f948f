"""Dense primal-dual interior-point solver for small LP/SOC programs.

Solves ::

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K = R+^l x Q^{q_1} x ... x Q^{q_k}

with a homogeneous self-dual embedding, Nesterov-Todd scaling and Mehrotra
predictor-corrector steps.  Equalities are removed up front by a null-space
substitution; the remaining Newton systems reduce to ``n x n`` systems in
``G' W^-2 G``, which is what makes tall dense problems (thousands of rows, a
few dozen columns) cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

SOLVED = "solved"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_ERROR = "numerical_error"


@dataclass
class IpmResult:
    status: str
    x: np.ndarray | None
    iterations: int
    pres: float = np.inf
    dres: float = np.inf
    gap: float = np.inf


class _Cone:
    """Product of a nonnegative orthant and second-order cones."""

    def __init__(self, l, socs):
        self.l = l
        self.socs = list(socs)
        self.m = l + sum(self.socs)
        self.slices = []
        start = l
        for q in self.socs:
            self.slices.append(slice(start, start + q))
            start += q
        self.degree = l + len(self.socs)

    def e(self):
        v = np.zeros(self.m)
        v[: self.l] = 1.0
        for sl in self.slices:
            v[sl.start] = 1.0
        return v

    def min_eig(self, u):
        vals = []
        if self.l:
            vals.append(u[: self.l].min())
        for sl in self.slices:
            vals.append(u[sl.start] - np.linalg.norm(u[sl.start + 1 : sl.stop]))
        return min(vals) if vals else 0.0

    def circ(self, u, v):
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.slices:
            uu, vv = u[sl], v[sl]
            out[sl.start] = uu @ vv
            out[sl.start + 1 : sl.stop] = uu[0] * vv[1:] + vv[0] * uu[1:]
        return out

    def circ_solve(self, lam, d):
        """x with lam o x = d."""
        out = np.empty(self.m)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for sl in self.slices:
            lm, dd = lam[sl], d[sl]
            det = lm[0] ** 2 - lm[1:] @ lm[1:]
            x0 = (lm[0] * dd[0] - lm[1:] @ dd[1:]) / det
            out[sl.start] = x0
            out[sl.start + 1 : sl.stop] = (dd[1:] - x0 * lm[1:]) / lm[0]
        return out

    def max_step(self, u, du):
        """Largest a with u + a du in the cone (inf if unbounded)."""
        alpha = np.inf
        if self.l:
            d = du[: self.l]
            with np.errstate(divide="ignore"):
                ratios = np.where(d < 0, -u[: self.l] / d, np.inf)
            alpha = float(ratios.min())
        for sl in self.slices:
            alpha = min(alpha, _soc_step(u[sl], du[sl]))
        return alpha


def _soc_step(u, d):
    # largest a >= 0 with u0 + a d0 >= ||u1 + a d1||, u strictly interior
    a = d[0] ** 2 - d[1:] @ d[1:]
    b = 2.0 * (u[0] * d[0] - u[1:] @ d[1:])
    c = u[0] ** 2 - u[1:] @ u[1:]
    roots = []
    if abs(a) < 1e-300:
        if b < 0:
            roots.append(-c / b)
    else:
        disc = b * b - 4 * a * c
        if disc >= 0:
            sq = np.sqrt(disc)
            q = -0.5 * (b + np.copysign(sq, b))
            for r in (q / a, c / q if q != 0 else np.inf):
                roots.append(r)
    alpha = np.inf
    for r in roots:
        if r > 0:
            alpha = min(alpha, r)
    if d[0] < 0:
        alpha = min(alpha, -u[0] / d[0])
    return alpha


class _Scaling:
    """Nesterov-Todd scaling W (symmetric) with W z = W^{-1} s = lam."""

    def __init__(self, cone: _Cone, s, z):
        self.cone = cone
        l = cone.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.blocks = []
        for sl in cone.slices:
            ss, zz = s[sl], z[sl]
            sdet = ss[0] ** 2 - ss[1:] @ ss[1:]
            zdet = zz[0] ** 2 - zz[1:] @ zz[1:]
            sn = np.sqrt(sdet)
            zn = np.sqrt(zdet)
            sb = ss / sn
            zb = zz / zn
            gamma = np.sqrt((1.0 + sb @ zb) / 2.0)
            wb = (sb + np.concatenate([[zb[0]], -zb[1:]])) / (2.0 * gamma)
            beta = np.sqrt(sn / zn)
            w0, w1 = wb[0], wb[1:]
            q = ss.size
            Wb = np.empty((q, q))
            Wb[0, 0] = w0
            Wb[0, 1:] = w1
            Wb[1:, 0] = w1
            Wb[1:, 1:] = np.eye(q - 1) + np.outer(w1, w1) / (1.0 + w0)
            Wi = Wb.copy()
            Wi[0, 1:] *= -1
            Wi[1:, 0] *= -1
            self.blocks.append((beta * Wb, Wi / beta))

    def apply(self, v, inverse=False):
        l = self.cone.l
        d = self.d if v.ndim == 1 else self.d[:, None]
        out = np.empty_like(v)
        out[:l] = v[:l] / d if inverse else v[:l] * d
        for sl, (W, Wi) in zip(self.cone.slices, self.blocks):
            out[sl] = (Wi if inverse else W) @ v[sl]
        return out


def _nullspace_reduce(A, b, n):
    if A is None or A.shape[0] == 0:
        return np.zeros(n), np.eye(n), True
    U, S, Vt = np.linalg.svd(A, full_matrices=True)
    tol = max(A.shape) * np.finfo(float).eps * (S[0] if S.size else 0.0) * 10
    r = int(np.sum(S > tol))
    x0 = Vt[:r].T @ ((U[:, :r].T @ b) / S[:r])
    consistent = np.linalg.norm(A @ x0 - b) <= 1e-9 * (1.0 + np.linalg.norm(b))
    return x0, Vt[r:].T, consistent


def solve(c, G, h, cone_l, socs=(), A=None, b=None, max_iter=100,
          feastol=1e-9, abstol=1e-9, reltol=1e-9) -> IpmResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float)
    cone = _Cone(cone_l, socs)
    if cone.m != G.shape[0]:
        raise ValueError("cone sizes do not match the rows of G")
    if A is not None:
        A = np.asarray(A, dtype=float).reshape(-1, n)
        b = np.asarray(b, dtype=float)
    x0, N, consistent = _nullspace_reduce(A, b, n)
    if not consistent:
        return IpmResult(PRIMAL_INFEASIBLE, None, 0)
    # reduced problem over w with x = x0 + N w
    cr = N.T @ c
    Gr = G @ N
    hr = h - G @ x0
    k = N.shape[1]
    if cone.m == 0:
        if np.linalg.norm(cr) > 1e-12:
            return IpmResult(DUAL_INFEASIBLE, None, 0)
        return IpmResult(SOLVED, x0, 0, 0.0, 0.0, 0.0)
    if k == 0:
        ok = cone.min_eig(hr) >= -feastol * (1 + np.linalg.norm(h))
        return IpmResult(SOLVED if ok else PRIMAL_INFEASIBLE, x0 if ok else None, 0)
    D, E = _equilibrate(Gr, cone)
    w, iters, status, pres, dres, gap = _hsde(D * cr, (E[:, None] * Gr) * D, E * hr, cone,
                                              max_iter, feastol, abstol, reltol)
    x = None if w is None else x0 + N @ (D * w)
    return IpmResult(status, x, iters, pres, dres, gap)


def _equilibrate(G, cone, passes=15):
    """Ruiz scaling: row factors E (constant on each SOC) and column factors D."""
    m, n = G.shape
    D = np.ones(n)
    E = np.ones(m)
    M = G.copy()
    for _ in range(passes):
        rows = np.abs(M).max(axis=1)
        for sl in cone.slices:
            rows[sl] = rows[sl].max()
        rows[rows == 0] = 1.0
        cols = np.abs(M).max(axis=0)
        cols[cols == 0] = 1.0
        er = 1.0 / np.sqrt(rows)
        dc = 1.0 / np.sqrt(cols)
        M = (er[:, None] * M) * dc
        E *= er
        D *= dc
        if np.all(np.abs(1 - rows) < 1e-2) and np.all(np.abs(1 - cols) < 1e-2):
            break
    return D, E


def _kkt_factory(G, scaling):
    """Solver for ``[0 G'; G -W^2] [x; z] = [r1; r2]``.

    The reduced matrix ``G' W^-2 G`` is handled through the triangular factor
    of a QR decomposition of ``W^-1 G`` rather than formed explicitly, which
    keeps its accuracy late in the iteration when the scaling is extreme.
    """
    GW = scaling.apply(G, inverse=True)
    R = np.linalg.qr(GW, mode="r")
    diag = np.abs(np.diag(R))
    if not np.all(np.isfinite(R)) or diag.min() <= 1e-14 * diag.max():
        return None

    Rinv = la.solve_triangular(R, np.eye(R.shape[0]), check_finite=False)

    def solve_kkt(r1, r2):
        r2w = scaling.apply(r2, inverse=True)
        rhs = r1 + GW.T @ r2w
        x = Rinv @ (Rinv.T @ rhs)
        # one refinement step against the exact reduced matrix
        x += Rinv @ (Rinv.T @ (rhs - GW.T @ (GW @ x)))
        z = scaling.apply(GW @ x - r2w, inverse=True)
        return x, z

    return solve_kkt


def _initial_point(c, G, h, cone):
    # primal: least-squares x for G x + s = h; dual: least-norm z with G'z + c = 0
    x = np.linalg.lstsq(G, h, rcond=None)[0]
    s = h - G @ x
    z = np.linalg.lstsq(G.T, -c, rcond=None)[0]
    e = cone.e()
    for v in (s, z):
        a = -cone.min_eig(v)
        if a >= -1e-8:
            v += (1.0 + max(a, 0.0)) * e
    return x, s, z


def _hsde(c, G, h, cone, max_iter, feastol, abstol, reltol, infeastol=1e-8):
    x, s, z = _initial_point(c, G, h, cone)
    tau, kappa = 1.0, 1.0
    e = cone.e()
    nu = cone.degree
    hnorm = max(1.0, np.linalg.norm(h))
    cnorm = max(1.0, np.linalg.norm(c))
    pres = dres = gap = np.inf
    best = None
    for it in range(max_iter + 1):
        rx = G.T @ z + c * tau
        rz = G @ x + s - h * tau
        cx, hz = c @ x, h @ z
        rt = kappa + cx + hz
        mu = (s @ z + tau * kappa) / (nu + 1)

        pres = np.linalg.norm(rz) / tau / hnorm
        dres = np.linalg.norm(rx) / tau / cnorm
        pcost, dcost = cx / tau, -hz / tau
        gap = (s @ z) / tau**2
        relgap = gap / max(abs(pcost), abs(dcost), 1e-12) if pcost * dcost > 0 else np.inf
        # s'z carries the units of h, so the absolute test scales with it
        if pres < feastol and dres < feastol and (gap < abstol * hnorm or relgap < reltol):
            return x / tau, it, SOLVED, pres, dres, gap
        if best is not None and (pres > 10 * best[1] or dres > 10 * best[2]):
            # accuracy has started to degrade; keep the earlier iterate
            return best[0], it, SOLVED, best[1], best[2], best[3]
        if pres < 1e-7 and dres < 1e-7 and (gap < 1e-7 * hnorm or relgap < 1e-6):
            best = (x / tau, pres, dres, gap)
        if hz < 0 and np.linalg.norm(G.T @ z) / -hz < infeastol:
            return None, it, PRIMAL_INFEASIBLE, pres, dres, gap
        if cx < 0 and np.linalg.norm(G @ x + s) / -cx < infeastol:
            return None, it, DUAL_INFEASIBLE, pres, dres, gap
        if it == max_iter:
            break

        scaling = _Scaling(cone, s, z)
        lam = scaling.apply(z)
        solve_kkt = _kkt_factory(G, scaling)
        if solve_kkt is None:
            break
        x1, z1 = solve_kkt(-c, h)

        def direction(eta, ds, dt):
            # ds: rhs of lam o (W dz + W^-1 ds) = ds ; dt: rhs of tau dk + kappa dt = dt
            lds = cone.circ_solve(lam, ds)
            x2, z2 = solve_kkt(-eta * rx, -eta * rz - scaling.apply(lds))
            dtau = (-eta * rt - dt / tau - c @ x2 - h @ z2) / (c @ x1 + h @ z1 - kappa / tau)
            dx = x2 + dtau * x1
            dz = z2 + dtau * z1
            # primal row taken exactly; any error lands in complementarity
            dsv = -eta * rz - G @ dx + h * dtau
            dkap = (dt - kappa * dtau) / tau
            return dx, dsv, dz, dtau, dkap

        def step(ds_, dz_, dt_, dk_):
            a = min(cone.max_step(s, ds_), cone.max_step(z, dz_))
            if dt_ < 0:
                a = min(a, -tau / dt_)
            if dk_ < 0:
                a = min(a, -kappa / dk_)
            return a

        lamlam = cone.circ(lam, lam)
        aff = direction(1.0, -lamlam, -tau * kappa)
        if not all(np.all(np.isfinite(v)) for v in aff[:3]):
            break
        a_aff = min(1.0, step(*aff[1:]))
        sigma = (1.0 - a_aff) ** 3
        # Mehrotra second-order term
        ds_a = scaling.apply(aff[1], inverse=True)
        dz_a = scaling.apply(aff[2])
        ds = -lamlam - cone.circ(ds_a, dz_a) + sigma * mu * e
        dt = -tau * kappa - aff[3] * aff[4] + sigma * mu
        dx, dsv, dz, dtau, dkap = direction(1.0 - sigma, ds, dt)
        if not (np.all(np.isfinite(dx)) and np.isfinite(dtau)):
            break
        a = min(1.0, 0.99 * step(dsv, dz, dtau, dkap))
        if a < 1e-12:
            break
        x = x + a * dx
        s = s + a * dsv
        z = z + a * dz
        tau = tau + a * dtau
        kappa = kappa + a * dkap
        if cone.min_eig(s) <= 0 or cone.min_eig(z) <= 0 or tau <= 0 or kappa <= 0:
            break
    if best is not None:
        return best[0], it, SOLVED, best[1], best[2], best[3]
    if hz < 0 and np.linalg.norm(G.T @ z) / -hz < 100 * infeastol:
        return None, it, PRIMAL_INFEASIBLE, pres, dres, gap
    return None, it, MAX_ITERATIONS if it == max_iter else NUMERICAL_ERROR, pres, dres, gap
