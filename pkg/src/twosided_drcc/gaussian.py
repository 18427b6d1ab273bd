"""Scalar standard-normal analytics.

Everything here works on Python floats and is built on :func:`math.erfc`,
which is accurate to a few ulp over the whole real line (including both
tails), so the CDF never loses relative precision in the tail that matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "std_cdf",
    "std_sf",
    "std_pdf",
    "std_quantile",
    "prob_between",
    "cdf_antiderivative",
]

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by the level-set routines."""

    abs_tol: float = 1e-12
    root_tol: float = 1e-10
    quad_tol: float = 1e-9

    def __post_init__(self):
        if min(self.abs_tol, self.root_tol, self.quad_tol) <= 0:
            raise ValueError("tolerances must be strictly positive")
        if self.root_tol < self.abs_tol:
            raise ValueError("root_tol must be >= abs_tol")


DEFAULT_TOL = Tolerances()


def _finite(z: float, name: str = "z") -> float:
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"{name} must be finite, got {z!r}")
    return z


def std_cdf(z: float) -> float:
    """Standard normal CDF."""
    z = _finite(z)
    return 0.5 * math.erfc(-z / SQRT2)


def std_sf(z: float) -> float:
    """Upper tail ``1 - std_cdf(z)`` without cancellation."""
    z = _finite(z)
    return 0.5 * math.erfc(z / SQRT2)


def std_pdf(z: float) -> float:
    z = _finite(z)
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


def prob_between(a: float, b: float) -> float:
    """``P(a <= Z <= b)`` for standard normal Z, negative when ``a > b``.

    Both endpoints may be infinite. The difference is taken on whichever
    tail keeps the two terms small, which avoids the ``1 - 1`` cancellation
    when both points sit far in the same tail.
    """
    a = float(a)
    b = float(b)
    if math.isnan(a) or math.isnan(b):
        raise ValueError("NaN endpoint")
    if a > 0.0:
        # both terms from the upper tail
        return 0.5 * (math.erfc(a / SQRT2) - math.erfc(b / SQRT2))
    if b < 0.0:
        return 0.5 * (math.erfc(-b / SQRT2) - math.erfc(-a / SQRT2))
    # a <= 0 <= b
    return 1.0 - 0.5 * (math.erfc(-a / SQRT2) + math.erfc(b / SQRT2))


def std_quantile(p: float, tol: float = 1e-15) -> float:
    """Inverse of :func:`std_cdf` on (0, 1).

    Safeguarded Newton iteration: each Newton step is accepted only when it
    stays inside the current sign bracket, otherwise the bracket is bisected.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    # work on the lower half and reflect; residual is taken on the tail
    # that is small so that extreme p keep full relative accuracy
    if p > 0.5:
        return -std_quantile(1.0 - p, tol)
    lo, hi = -40.0, 0.0
    # crude tail start: z ~ -sqrt(-2 ln p)
    t = math.sqrt(-2.0 * math.log(p))
    z = -(t - (2.515517 + 0.802853 * t + 0.010328 * t * t)
          / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t ** 3))
    for _ in range(200):
        f = 0.5 * math.erfc(-z / SQRT2) - p
        if f > 0.0:
            hi = z
        elif f < 0.0:
            lo = z
        else:
            return z
        d = INV_SQRT_2PI * math.exp(-0.5 * z * z)
        step = f / d if d > 0.0 else math.inf
        z_new = z - step
        if not (lo < z_new < hi):
            z_new = 0.5 * (lo + hi)
        if abs(z_new - z) <= tol * max(1.0, abs(z)):
            return z_new
        z = z_new
    return z


def cdf_antiderivative(z: float) -> float:
    """``∫_0^z Φ(v) dv = zΦ(z) + φ(z) − φ(0)``."""
    z = _finite(z)
    return z * std_cdf(z) + std_pdf(z) - INV_SQRT_2PI
