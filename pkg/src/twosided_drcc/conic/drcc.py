"""Emit the conic inner approximation of a robust two-sided chance constraint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..wdrcc import LevelPolyline
from .program import Affine, ConicProgram

__all__ = ["DrccHandle", "add_two_sided_drcc", "factor_covariance"]


@dataclass(frozen=True)
class DrccHandle:
    scale: Affine          # the auxiliary variable s >= ||x||_*
    soc_index: int
    rows: range            # linear rows in the program's inequality block


def factor_covariance(sigma, ridge=1e-8):
    """Lower-triangular L with ``L @ L.T = sigma``.

    A singular (or numerically indefinite) sigma is ridged with
    ``ridge * trace(sigma) / n * I`` first. Returns ``(L, ridged)``.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    n = sigma.shape[0]
    if sigma.shape != (n, n):
        raise ValueError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(sigma).max())):
        raise ValueError("covariance must be symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    w = np.linalg.eigvalsh(sigma)
    if w[0] > 1e-12 * max(w[-1], 0.0) and w[0] > 0:
        try:
            return np.linalg.cholesky(sigma), False
        except np.linalg.LinAlgError:
            pass
    level = ridge * max(np.trace(sigma) / n, 1.0 if np.trace(sigma) <= 0 else 0.0)
    return np.linalg.cholesky(sigma + level * np.eye(n)), True


def add_two_sided_drcc(program: ConicProgram, x_expr: Affine, ell_expr: Affine, u_expr: Affine,
                       mu, sigma_factor, poly: LevelPolyline, name=None) -> DrccHandle:
    """Add ``(x, ell, u)`` in the polyline-based inner approximation.

    Introduces ``s`` with ``||L' x||_2 <= s`` and the ``N + 1`` linear rows

        ell - mu'x <= ell_1 s,        u - mu'x >= u_N s,
        (u_i - u_{i+1}) (ell - mu'x - ell_i s) <= (ell_i - ell_{i+1}) (u - mu'x - u_i s).
    """
    mu = np.asarray(mu, dtype=float).ravel()
    L = np.atleast_2d(np.asarray(sigma_factor, dtype=float))
    m = x_expr.size
    if mu.size != m or L.shape != (m, m):
        raise ValueError(f"dimension mismatch: x has {m} entries, mu {mu.size}, factor {L.shape}")
    if ell_expr.size != 1 or u_expr.size != 1:
        raise ValueError("ell and u must be scalar expressions")
    ells, us = poly.ells, poly.us
    dl = ells[:-1] - ells[1:]
    du = us[:-1] - us[1:]
    if np.any(du <= 0) or np.any(dl <= 0):
        raise ValueError("polyline must be strictly decreasing")

    s = program.add_variables(1, name=name)
    soc = program.add_soc(L.T @ x_expr, s)
    shift = mu @ x_expr
    lo = ell_expr - shift          # ell - mu'x
    hi = u_expr - shift            # u - mu'x
    rows = [lo - ells[0] * s, us[-1] * s - hi]
    for i in range(len(ells) - 1):
        rows.append(du[i] * (lo - ells[i] * s) - dl[i] * (hi - us[i] * s))
    r = program.add_leq(Affine.stack(rows))
    return DrccHandle(s, soc, r)
