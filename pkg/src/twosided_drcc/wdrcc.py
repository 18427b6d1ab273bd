"""Level-set machinery for the standardized two-sided robust chance constraint.

For a risk level ``epsilon`` and a Wasserstein radius ``delta`` the feasible
set of standardized bands is ``{(ell, u) : g(ell, u) >= delta}`` with

    g(ell, u) = ∫_0^∞ [Φ(u - t) - Φ(ell + t) - (1 - epsilon)]^+ dt.

This module evaluates ``g`` and its two one-sided limits, traces the level
curve ``g = delta``, builds the polyhedral inner approximation spanned by N
points on that curve, and computes the a-priori bound on how far ``g`` can
exceed ``delta`` on the boundary of the approximation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize

from .gaussian import (
    DEFAULT_TOL,
    Tolerances,
    cdf_antiderivative,
    prob_between,
    std_cdf,
    std_quantile,
)

__all__ = [
    "RiskSpec",
    "Band",
    "LevelPolyline",
    "ApproxBound",
    "NoRoot",
    "BracketFailure",
    "OffLevelSet",
    "eval_g",
    "eval_g_var_form",
    "eval_gbar",
    "eval_gunder",
    "solve_asymptotes",
    "solve_u_on_levelset",
    "solve_symmetric_u0",
    "construct_points",
    "polyline_contains",
    "z0_membership",
    "z_membership",
    "chord_value",
    "chord_derivative",
    "segment_tau",
    "endpoint_derivative_fd_check",
    "apx_bound",
    "max_g_on_boundary",
    "level_grid",
]

MAX_ROOT_ITER = 200
BRACKET_CEILING = 1e3


class NoRoot(ValueError):
    """The level curve does not cross the requested line."""


class BracketFailure(RuntimeError):
    """Bracket expansion hit its ceiling before changing sign."""


class OffLevelSet(ValueError):
    """A point expected on the level curve has a large residual."""


@dataclass(frozen=True)
class RiskSpec:
    epsilon: float
    delta: float
    tol: Tolerances = field(default=DEFAULT_TOL, compare=False)

    def __post_init__(self):
        eps, delta = float(self.epsilon), float(self.delta)
        if not (0.0 < eps < 0.5):
            raise ValueError(f"epsilon must lie in (0, 1/2), got {eps}")
        if not (math.isfinite(delta) and delta >= 1e-8):
            raise ValueError(f"delta must be >= 1e-8, got {delta}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)


class Band(NamedTuple):
    ell: float
    u: float


# ---------------------------------------------------------------------------
# g and its tails
# ---------------------------------------------------------------------------

def _check_eps(epsilon):
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 0.5):
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    return epsilon


def _truncation_point(epsilon, ell, u):
    """Root of Φ(u - t) - Φ(ell + t) = 1 - epsilon on t >= 0, or None."""
    target = 1.0 - epsilon
    f0 = prob_between(ell, u) - target
    if f0 <= 0.0:
        return None
    # at t = (u - ell)/2 the band is empty, so the bracket always changes sign
    hi = 0.5 * (u - ell)
    return optimize.brentq(
        lambda t: prob_between(ell + t, u - t) - target,
        0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=MAX_ROOT_ITER,
    )


def eval_gbar(epsilon: float, u: float) -> float:
    """``g(-inf, u) = ∫_0^∞ (Φ(u - t) - (1 - epsilon))^+ dt``."""
    epsilon = _check_eps(epsilon)
    u = float(u)
    if math.isnan(u):
        raise ValueError("u is NaN")
    if u == math.inf:
        return math.inf
    q = std_quantile(1.0 - epsilon)
    if u <= q:
        return 0.0
    return (cdf_antiderivative(u) - cdf_antiderivative(q)) - (1.0 - epsilon) * (u - q)


def eval_gunder(epsilon: float, ell: float) -> float:
    """``g(ell, +inf) = ∫_0^∞ (epsilon - Φ(ell + t))^+ dt``; mirror of :func:`eval_gbar`."""
    return eval_gbar(epsilon, -float(ell))


def eval_g(epsilon: float, ell: float, u: float) -> float:
    """Evaluate g semi-analytically.

    The integrand is decreasing in t, so it is positive exactly on
    ``[0, t*)``. After locating ``t*`` the integral is a difference of
    antiderivatives of Φ.
    """
    epsilon = _check_eps(epsilon)
    ell, u = float(ell), float(u)
    if math.isnan(ell) or math.isnan(u):
        raise ValueError("NaN band")
    if ell == -math.inf:
        return eval_gbar(epsilon, u)
    if u == math.inf:
        return eval_gunder(epsilon, ell)
    if ell == math.inf or u == -math.inf:
        return 0.0
    t = _truncation_point(epsilon, ell, u)
    if t is None:
        return 0.0
    A = cdf_antiderivative
    val = (A(u) - A(u - t)) - (A(ell + t) - A(ell)) - (1.0 - epsilon) * t
    return max(val, 0.0)


def eval_g_var_form(epsilon: float, ell: float, u: float) -> float:
    """Evaluate g through its VaR-truncated representation.

    With ``phi = min(Z - ell, u - Z)`` this integrates
    ``P[phi >= t] - (1 - epsilon)`` from 0 up to the epsilon-quantile of
    ``phi``. The quantile is located by plain bisection on the CDF of phi
    and the integral by adaptive quadrature, so nothing is shared with
    :func:`eval_g` apart from Φ itself.
    """
    epsilon = _check_eps(epsilon)
    ell, u = float(ell), float(u)
    if not (math.isfinite(ell) and math.isfinite(u)):
        raise ValueError("band must be finite")
    if std_cdf(u) - std_cdf(ell) < 1.0 - epsilon:
        raise ValueError("P[ell <= Z <= u] < 1 - epsilon: VaR of phi is negative")

    def surv(t):  # P[phi >= t]
        return max(std_cdf(u - t) - std_cdf(ell + t), 0.0)

    # epsilon-quantile of phi: smallest t with P[phi <= t] >= epsilon
    lo, hi = 0.0, 0.5 * (u - ell)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - surv(mid) >= epsilon:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    var = 0.5 * (lo + hi)
    val, _ = integrate.quad(lambda t: surv(t) - (1.0 - epsilon), 0.0, var,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


# ---------------------------------------------------------------------------
# level-set root finding
# ---------------------------------------------------------------------------

def _expand_and_solve(f, lo, step=1.0, ceiling=BRACKET_CEILING, xtol=1e-14):
    """Root of increasing ``f`` right of ``lo`` (``f(lo) < 0``) by doubling."""
    hi = lo + step
    while f(hi) <= 0.0:
        step *= 2.0
        hi = lo + step
        if step > ceiling:
            raise BracketFailure(f"no sign change up to {hi:g}")
    return optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps,
                           maxiter=MAX_ROOT_ITER)


def solve_asymptotes(spec: RiskSpec) -> tuple[float, float]:
    """Limits of the level curve: ``(ell_star, u_star)`` with ``ell_star = -u_star``.

    ``u_star`` solves ``gbar(u) = delta`` (the curve's limit as ell -> -inf).
    """
    eps, delta = spec.epsilon, spec.delta
    q = std_quantile(1.0 - eps)
    u_star = _expand_and_solve(lambda u: eval_gbar(eps, u) - delta, q)
    return -u_star, u_star


def solve_symmetric_u0(spec: RiskSpec) -> float:
    """The symmetric point ``(-u0, u0)`` on the level curve."""
    eps, delta = spec.epsilon, spec.delta
    lo = std_quantile(1.0 - eps / 2.0)  # g(-lo, lo) == 0
    return _expand_and_solve(lambda u: eval_g(eps, -u, u) - delta, lo)


def solve_u_on_levelset(spec: RiskSpec, ell: float) -> float:
    """Upper bound u with ``g(ell, u) = delta``.

    Raises :class:`NoRoot` when ``gunder(ell) <= delta``: then even an
    unbounded u cannot lift g to delta.
    """
    eps, delta = spec.epsilon, spec.delta
    ell = float(ell)
    if not math.isfinite(ell):
        raise ValueError("ell must be finite")
    if eval_gunder(eps, ell) <= delta:
        raise NoRoot(f"gunder({ell:.6g}) <= delta={delta:g}: no finite u on the level set")
    # smallest u with g > 0: P[ell <= Z <= u] = 1 - eps
    u_lo = std_quantile(1.0 - eps + std_cdf(ell))
    return _expand_and_solve(lambda u: eval_g(eps, ell, u) - delta, u_lo)


# ---------------------------------------------------------------------------
# polyline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevelPolyline:
    """N points on the level curve, ordered by decreasing ``ell``.

    The points are symmetric under ``(ell, u) -> (-u, -ell)`` and the middle
    one is ``(-u0, u0)``.
    """

    points: tuple[Band, ...]
    spec: RiskSpec

    def __post_init__(self):
        pts = tuple(Band(float(p[0]), float(p[1])) for p in self.points)
        object.__setattr__(self, "points", pts)
        n = len(pts)
        if n < 3 or n % 2 == 0:
            raise ValueError(f"need an odd number of points >= 3, got {n}")
        ells = np.array([p.ell for p in pts])
        us = np.array([p.u for p in pts])
        if np.any(np.diff(ells) >= 0) or np.any(np.diff(us) >= 0):
            raise ValueError("points must be strictly decreasing in ell and in u")
        scale = max(1.0, float(np.max(np.abs(us))))
        if not (np.allclose(ells, -us[::-1], rtol=0, atol=1e-12 * scale)):
            raise ValueError("points are not symmetric under (ell, u) -> (-u, -ell)")
        for p in pts:
            r = eval_g(self.spec.epsilon, p.ell, p.u) - self.spec.delta
            if abs(r) > self.spec.tol.root_tol:
                raise OffLevelSet(f"point {tuple(p)} has residual {r:.3e}")

    def __len__(self):
        return len(self.points)

    @property
    def ells(self) -> np.ndarray:
        return np.array([p.ell for p in self.points])

    @property
    def us(self) -> np.ndarray:
        return np.array([p.u for p in self.points])

    def to_json(self) -> str:
        return json.dumps({
            "epsilon": self.spec.epsilon,
            "delta": self.spec.delta,
            "points": [[p.ell, p.u] for p in self.points],
        })

    @classmethod
    def from_json(cls, text: str) -> "LevelPolyline":
        d = json.loads(text)
        return cls(tuple(Band(*p) for p in d["points"]),
                   RiskSpec(d["epsilon"], d["delta"]))


def construct_points(spec: RiskSpec, n: int) -> LevelPolyline:
    """Place n points on the level curve.

    ``(n - 1) / 2`` values of ell are spaced evenly strictly inside
    ``(-u0, ell_bar)`` where ``ell_bar`` is the vertical asymptote; each is
    paired with its u on the curve and reflected, and the symmetric point
    ``(-u0, u0)`` is added.
    """
    n = int(n)
    if n < 3 or n % 2 == 0:
        raise ValueError(f"n must be odd and >= 3, got {n}")
    u0 = solve_symmetric_u0(spec)
    ell_bar, _ = solve_asymptotes(spec)
    k = (n - 1) // 2
    h = (ell_bar + u0) / (k + 1)
    pts = [Band(-u0, u0)]
    for i in range(1, k + 1):
        ell = -u0 + i * h
        u = solve_u_on_levelset(spec, ell)
        pts += [Band(ell, u), Band(-u, -ell)]
    pts.sort(key=lambda p: -p.ell)
    return LevelPolyline(tuple(pts), spec)


def polyline_contains(poly: LevelPolyline, ell: float, u: float, tol: float = 1e-12) -> bool:
    """Membership in the polyhedral inner approximation."""
    ells, us = poly.ells, poly.us
    if ell > ells[0] + tol or u < us[-1] - tol:
        return False
    dl = ells[:-1] - ells[1:]
    du = us[:-1] - us[1:]
    lhs = (u - us[:-1]) * dl - du * (ell - ells[:-1])
    return bool(np.all(lhs >= -tol * max(1.0, abs(ell), abs(u))))


def z0_membership(spec: RiskSpec, ell: float, u: float) -> bool:
    return eval_g(spec.epsilon, ell, u) >= spec.delta - spec.tol.abs_tol


def z_membership(spec: RiskSpec, mu, sigma_factor, x, ell: float, u: float) -> bool:
    """Exact membership of ``(x, ell, u)`` in the robust two-sided constraint.

    ``sigma_factor`` is any L with ``L @ L.T == Sigma``; the dual norm is
    ``||L.T @ x||_2``.
    """
    mu = np.asarray(mu, dtype=float)
    L = np.asarray(sigma_factor, dtype=float)
    x = np.asarray(x, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or mu.shape != x.shape or x.shape[0] != L.shape[0]:
        raise ValueError("dimension mismatch between mu, sigma_factor and x")
    if not np.any(x):
        return ell <= 0.0 <= u
    shift = float(x @ mu)
    norm = float(np.linalg.norm(L.T @ x))
    return z0_membership(spec, (ell - shift) / norm, (u - shift) / norm)


# ---------------------------------------------------------------------------
# chords and the approximation bound
# ---------------------------------------------------------------------------

def _chord_point(p1, p2, lam):
    return ((1.0 - lam) * p1[0] + lam * p2[0], (1.0 - lam) * p1[1] + lam * p2[1])


def chord_value(epsilon: float, p1, p2, lam: float) -> float:
    """``s(lam) = g`` at ``(1 - lam) * p1 + lam * p2``."""
    ell, u = _chord_point(p1, p2, lam)
    return eval_g(epsilon, ell, u)


def chord_derivative(epsilon: float, p1, p2, lam: float) -> float:
    """Analytic ``d s / d lam`` along the chord from p1 to p2.

    Differentiating under the integral leaves the Gaussian density on
    ``[0, t*]``, which integrates to differences of Φ.
    """
    epsilon = _check_eps(epsilon)
    ell, u = _chord_point(p1, p2, lam)
    t = _truncation_point(epsilon, ell, u)
    if t is None:
        return 0.0
    du = p2[1] - p1[1]
    dl = p2[0] - p1[0]
    return du * prob_between(u - t, u) - dl * prob_between(ell, ell + t)


def _tau_parts(epsilon, p1, p2):
    s0 = chord_value(epsilon, p1, p2, 0.0)
    s1 = chord_value(epsilon, p1, p2, 1.0)
    h0, h1 = math.sqrt(s0), math.sqrt(s1)
    dh0 = chord_derivative(epsilon, p1, p2, 0.0) / (2.0 * h0)
    dh1 = chord_derivative(epsilon, p1, p2, 1.0) / (2.0 * h1)
    if dh0 - dh1 <= 1e-300:
        return 1.0, 0.5, dh0, dh1
    lam = (h1 - h0 - dh1) / (dh0 - dh1)
    lam = min(max(lam, 0.0), 1.0)
    peak = h0 + dh0 * lam
    return peak / (lam * h1 + (1.0 - lam) * h0), lam, dh0, dh1


def segment_tau(spec: RiskSpec, p1, p2) -> float:
    """Concave-envelope ratio of ``sqrt(s)`` on the chord between two level points.

    ``s(lam) <= tau**2 * delta`` on the whole chord.
    """
    for p in (p1, p2):
        r = eval_g(spec.epsilon, p[0], p[1]) - spec.delta
        if abs(r) > spec.tol.root_tol:
            raise OffLevelSet(f"point {tuple(p)} has residual {r:.3e}")
    if p1[0] == p2[0] and p1[1] == p2[1]:
        return 1.0
    return _tau_parts(spec.epsilon, p1, p2)[0]


def endpoint_derivative_fd_check(spec: RiskSpec, p1, p2, h: float = 1e-5) -> float:
    """Largest gap between analytic and central-difference ``ds/dlam`` at both ends."""
    eps = spec.epsilon
    worst = 0.0
    for lam in (0.0, 1.0):
        fd = (chord_value(eps, p1, p2, lam + h) - chord_value(eps, p1, p2, lam - h)) / (2 * h)
        worst = max(worst, abs(chord_derivative(eps, p1, p2, lam) - fd))
    return worst


@dataclass(frozen=True)
class ApproxBound:
    tau_sq_max: float
    tail_upper: float
    tail_lower: float
    bound: float


def apx_bound(spec: RiskSpec, poly: LevelPolyline) -> ApproxBound:
    pts = poly.points
    tau_sq = max(segment_tau(spec, pts[i], pts[i + 1]) ** 2 for i in range(len(pts) - 1))
    tail_upper = eval_gbar(spec.epsilon, pts[-1].u)
    tail_lower = eval_gunder(spec.epsilon, pts[0].ell)
    bound = max(tau_sq, tail_upper / spec.delta, tail_lower / spec.delta)
    return ApproxBound(tau_sq, tail_upper, tail_lower, bound)


def max_g_on_boundary(spec: RiskSpec, poly: LevelPolyline, return_parts: bool = False):
    """Largest value of g on the boundary of the polyhedral approximation.

    ``sqrt(s)`` is concave along each chord, so a bounded scalar search finds
    the segment maxima; on the two rays g is monotone and tends to the tail
    values.
    """
    eps = spec.epsilon
    pts = poly.points
    seg = []
    for a, b in zip(pts[:-1], pts[1:]):
        res = optimize.minimize_scalar(lambda lam: -chord_value(eps, a, b, lam),
                                       bounds=(0.0, 1.0), method="bounded",
                                       options={"xatol": 1e-10})
        seg.append(max(-res.fun, spec.delta))
    tails = (eval_gunder(eps, pts[0].ell), eval_gbar(eps, pts[-1].u))
    best = max(max(seg), *tails)
    if return_parts:
        return best, seg, tails
    return best


def level_grid(epsilon: float, ells: Sequence[float], us: Sequence[float]) -> np.ndarray:
    """g on a rectangular grid, shape ``(len(ells), len(us))``."""
    return np.array([[eval_g(epsilon, a, b) for b in us] for a in ells])
