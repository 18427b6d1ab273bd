"""Reference primal-dual interior-point method for quadratic cone programs.

Cones are the nonnegative orthant and second-order cones. The iteration is
the classic path-following scheme with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step; the quadratic objective enters the reduced KKT
system directly. There is no homogeneous embedding: infeasibility and
unboundedness are reported only when the iterates approach a Farkas-type
certificate, otherwise a non-converged run ends in ``max_iter``.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import ConicProgram, Solution, StandardForm

__all__ = ["solve", "solve_standard", "SocCones"]

log = logging.getLogger(__name__)


def _cone_norm(X):
    """``sqrt(x0^2 - |x1|^2)`` per row, factored to limit cancellation."""
    r = np.linalg.norm(X[:, 1:], axis=1)
    return np.sqrt(np.maximum((X[:, 0] - r) * (X[:, 0] + r), 1e-300))


class SocCones:
    """Product of an orthant of dimension ``l`` and second-order cones.

    Blocks of equal dimension are processed together as 2-D index arrays.
    """

    def __init__(self, l, soc):
        self.l = int(l)
        self.soc = [int(d) for d in soc]
        self.dim = self.l + sum(self.soc)
        self.degree = self.l + len(self.soc)
        offsets = np.cumsum([self.l] + self.soc)[:-1]
        groups = {}
        for off, d in zip(offsets, self.soc):
            groups.setdefault(d, []).append(off + np.arange(d))
        self.groups = [(d, np.array(ix)) for d, ix in groups.items()]

    def identity(self):
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for _, ix in self.groups:
            e[ix[:, 0]] = 1.0
        return e

    def jprod(self, x, y):
        """Jordan product."""
        out = np.empty(self.dim)
        out[: self.l] = x[: self.l] * y[: self.l]
        for _, ix in self.groups:
            X, Y = x[ix], y[ix]
            out[ix[:, 0]] = np.einsum("ij,ij->i", X, Y)
            out[ix[:, 1:]] = X[:, :1] * Y[:, 1:] + Y[:, :1] * X[:, 1:]
        return out

    def jdiv(self, lam, r):
        """Solve ``lam o u = r`` for u."""
        out = np.empty(self.dim)
        out[: self.l] = r[: self.l] / lam[: self.l]
        for _, ix in self.groups:
            L, R = lam[ix], r[ix]
            l0 = L[:, 0]
            det = l0 ** 2 - np.einsum("ij,ij->i", L[:, 1:], L[:, 1:])
            u0 = (l0 * R[:, 0] - np.einsum("ij,ij->i", L[:, 1:], R[:, 1:])) / det
            out[ix[:, 0]] = u0
            out[ix[:, 1:]] = (R[:, 1:] - u0[:, None] * L[:, 1:]) / l0[:, None]
        return out

    def shift_into(self, x):
        """Smallest t with ``x + t e`` in the cone."""
        t = -np.inf
        if self.l:
            t = max(t, float(np.max(-x[: self.l])))
        for _, ix in self.groups:
            X = x[ix]
            t = max(t, float(np.max(np.linalg.norm(X[:, 1:], axis=1) - X[:, 0])))
        return t

    def max_step(self, x, dx):
        """Largest a >= 0 with ``x + a dx`` in the cone (x interior)."""
        a = np.inf
        if self.l:
            neg = dx[: self.l] < 0
            if np.any(neg):
                a = min(a, float(np.min(-x[: self.l][neg] / dx[: self.l][neg])))
        for _, ix in self.groups:
            X, D = x[ix], dx[ix]
            qa = D[:, 0] ** 2 - np.einsum("ij,ij->i", D[:, 1:], D[:, 1:])
            qb = X[:, 0] * D[:, 0] - np.einsum("ij,ij->i", X[:, 1:], D[:, 1:])
            qc = X[:, 0] ** 2 - np.einsum("ij,ij->i", X[:, 1:], X[:, 1:])
            disc = qb ** 2 - qa * qc
            roots = np.full(qa.shape, np.inf)
            # a tangent direction gives disc == 0 up to rounding
            ok = disc >= -1e-12 * (qb ** 2 + np.abs(qa * qc))
            sq = np.sqrt(np.where(ok, np.maximum(disc, 0.0), 0.0))
            # stable roots of qa t^2 + 2 qb t + qc
            qq = -(qb + np.copysign(sq, qb))
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = np.where(qa != 0, qq / qa, np.inf)
                r2 = np.where(qq != 0, qc / qq, np.inf)
            for r in (r1, r2):
                cand = ok & (r > 0)
                roots = np.where(cand, np.minimum(roots, r), roots)
            if roots.size:
                a = min(a, float(np.min(roots)))
        return a

    def nt_scaling(self, s, z):
        """Nesterov-Todd scaling: returns (W, Winv, lam) with ``W z = Winv s = lam``.

        W is symmetric and block diagonal; the matrices are sparse.
        """
        rows, cols, vw, vi = [], [], [], []
        lam = np.empty(self.dim)
        if self.l:
            d = np.sqrt(s[: self.l] / z[: self.l])
            idx = np.arange(self.l)
            rows.append(idx); cols.append(idx); vw.append(d); vi.append(1.0 / d)
            lam[: self.l] = np.sqrt(s[: self.l] * z[: self.l])
        for dim, ix in self.groups:
            S, Z = s[ix], z[ix]
            sn = _cone_norm(S)
            zn = _cone_norm(Z)
            sb = S / sn[:, None]
            zb = Z / zn[:, None]
            gamma = np.sqrt(0.5 * np.maximum(1.0 + np.einsum("ij,ij->i", sb, zb), 1e-300))
            Jzb = zb.copy()
            Jzb[:, 1:] *= -1.0
            wb = (sb + Jzb) / (2.0 * gamma[:, None])
            beta = np.sqrt(sn / zn)
            v = wb.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2.0 * (wb[:, 0] + 1.0))[:, None]
            Jv = v.copy()
            Jv[:, 1:] *= -1.0
            J = -np.eye(dim)
            J[0, 0] = 1.0
            W = beta[:, None, None] * (2.0 * v[:, :, None] * v[:, None, :] - J)
            Wi = (1.0 / beta)[:, None, None] * (2.0 * Jv[:, :, None] * Jv[:, None, :] - J)
            rows.append(np.repeat(ix, dim, axis=1).ravel())
            cols.append(np.tile(ix, (1, dim)).ravel())
            vw.append(W.ravel()); vi.append(Wi.ravel())
            lam[ix] = np.einsum("kij,kj->ki", W, Z)
        r = np.concatenate(rows) if rows else np.zeros(0, int)
        c = np.concatenate(cols) if cols else np.zeros(0, int)
        shape = (self.dim, self.dim)
        W = sp.csr_array((np.concatenate(vw) if vw else [], (r, c)), shape=shape)
        Wi = sp.csr_array((np.concatenate(vi) if vi else [], (r, c)), shape=shape)
        return W, Wi, lam


class _KKT:
    """Factorized reduced KKT system ``[[P + G'W^-2 G, A'], [A, 0]]``."""

    def __init__(self, P, A, Gs, reg):
        n, p = P.shape[0], A.shape[0]
        H = (P + Gs.T @ Gs).tocsc()
        self.K0 = sp.block_array([[H, A.T], [A, None]], format="csc")
        R = sp.diags_array(np.concatenate([np.full(n, reg), np.full(p, -reg)]))
        self.lu = spla.splu((self.K0 + R).tocsc())
        self.n = n

    def solve(self, rhs, refine=3):
        x = self.lu.solve(rhs)
        for _ in range(refine):
            r = rhs - self.K0 @ x
            if np.linalg.norm(r) <= 1e-14 * max(1.0, np.linalg.norm(rhs)):
                break
            x = x + self.lu.solve(r)
        return x[: self.n], x[self.n:]


def solve_standard(sf: StandardForm, tol=1e-8, max_iter=100, verbose=False) -> Solution:
    P = sp.csc_array(sf.P)
    q, A, b, G, h = sf.q, sp.csr_array(sf.A), sf.b, sp.csr_array(sf.G), sf.h
    n, p = q.size, b.size
    K = SocCones(sf.l, sf.soc)
    reg = 1e-11

    def pcost_of(x):
        return 0.5 * x @ (P @ x) + q @ x

    if K.dim == 0:
        kkt = _KKT(P, A, sp.csr_array((0, n)), reg)
        x, y = kkt.solve(np.concatenate([-q, b]))
        rx = np.linalg.norm(P @ x + q + A.T @ y) / max(1.0, np.linalg.norm(q))
        ry = np.linalg.norm(A @ x - b) / max(1.0, np.linalg.norm(b))
        status = "optimal" if max(rx, ry) <= tol else "max_iter"
        return Solution(status, x, pcost_of(x) + sf.c0, (ry, rx, 0.0), 0, y, np.zeros(0), np.zeros(0))

    e = K.identity()
    resx0 = max(1.0, np.linalg.norm(q))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    # cold start: least-squares style solve with identity scaling
    kkt = _KKT(P, A, G, reg)
    x, y = kkt.solve(np.concatenate([-q + G.T @ h, b]))
    s = h - G @ x
    z = -s.copy()
    for v in (s, z):
        t = K.shift_into(v)
        if t >= -1e-8 * max(np.linalg.norm(v), 1.0):
            v += (1.0 + t) * e

    status = "max_iter"
    it = 0
    best = None
    small_steps = 0
    for it in range(max_iter + 1):
        rx = P @ x + q + A.T @ y + G.T @ z
        ry = A @ x - b
        rz = G @ x + s - h
        gap = float(s @ z)
        mu = gap / K.degree
        pcost = pcost_of(x)
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0)
        dres = np.linalg.norm(rx) / resx0
        relgap = gap / max(1.0, abs(pcost))
        if verbose:
            log.info("it %3d pcost % .8e pres %.2e dres %.2e gap %.2e", it, pcost, pres, dres, relgap)
        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), z.copy(), s.copy(), (pres, dres, relgap))
        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            status = "optimal"
            break

        # certificates (only meaningful once the iterates drift apart)
        hz_by = float(h @ z + b @ y)
        if pres > tol and hz_by < 0:
            if np.linalg.norm(A.T @ y + G.T @ z) / resx0 / (-hz_by) <= tol:
                status = "infeasible"
                break
        cx = float(q @ x)
        if dres > tol and cx < 0:
            dinf = max(np.linalg.norm(P @ x) / resx0, np.linalg.norm(A @ x) / resy0,
                       np.linalg.norm(G @ x + s) / resz0) / (-cx)
            if dinf <= tol:
                status = "unbounded"
                break
        if it == max_iter or small_steps >= 5:
            break

        W, Wi, lam = K.nt_scaling(s, z)
        Gs = Wi @ G
        try:
            kkt = _KKT(P, A, Gs, reg)
        except RuntimeError:  # singular factorization
            break

        def newton(rs):
            u = K.jdiv(lam, rs)
            rhs_x = -rx - Gs.T @ (Wi @ rz + u)
            dx, dy = kkt.solve(np.concatenate([rhs_x, -ry]))
            dzt = Gs @ dx + Wi @ rz + u
            dst = u - dzt
            return dx, dy, dst, dzt

        # predictor
        lam_sq = K.jprod(lam, lam)
        dx, dy, dst, dzt = newton(-lam_sq)
        a_aff = min(K.max_step(lam, dst), K.max_step(lam, dzt), 1.0)
        sigma = (1.0 - a_aff) ** 3
        # corrector
        rs = -lam_sq - K.jprod(dst, dzt) + sigma * mu * e
        dx, dy, dst, dzt = newton(rs)
        a = min(1.0, 0.99 * min(K.max_step(lam, dst), K.max_step(lam, dzt)))
        small_steps = small_steps + 1 if a < 1e-8 else 0
        x = x + a * dx
        y = y + a * dy
        s = s + a * (W @ dst)
        z = z + a * (Wi @ dzt)

    if status == "max_iter" and best is not None:
        _, x, y, z, s, res = best
    else:
        res = (pres, dres, relgap)
    return Solution(status, x, pcost_of(x) + sf.c0, res, it, y, z, s)


def solve(program: ConicProgram, tol: float = 1e-8, max_iter: int = 100, verbose: bool = False) -> Solution:
    """Solve a :class:`ConicProgram`; concurrent calls on distinct programs are independent."""
    return solve_standard(program.standard_form(), tol=tol, max_iter=max_iter, verbose=verbose)
