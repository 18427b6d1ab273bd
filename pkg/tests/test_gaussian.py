import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from twosided_drcc.gaussian import (
    Tolerances,
    cdf_antiderivative,
    prob_between,
    std_cdf,
    std_pdf,
    std_quantile,
    std_sf,
)

finite = st.floats(-30, 30, allow_nan=False)


def test_cdf_examples():
    assert std_cdf(0.0) == 0.5
    assert abs(std_cdf(8.0) - 1.0) <= 1e-12
    z95 = oracles.mp_quantile(0.95)
    assert abs(std_cdf(z95) - 0.95) <= 1e-12


def test_pdf_examples():
    assert abs(std_pdf(0.0) - 0.3989422804) < 1e-10
    assert std_pdf(3.0) == std_pdf(-3.0)
    assert abs(std_pdf(1.0) - 0.2419707245) < 1e-10


def test_quantile_examples():
    assert std_quantile(0.5) == 0.0
    assert abs(std_quantile(0.95) - 1.6448536) < 1e-7
    assert std_quantile(0.2) == pytest.approx(-std_quantile(0.8), abs=1e-12)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_nonfinite_rejected(bad):
    with pytest.raises(ValueError):
        std_cdf(bad)
    with pytest.raises(ValueError):
        std_pdf(bad)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        std_quantile(p)


@pytest.mark.parametrize("z", [-37.0, -20.0, -8.5, -3.0, -0.3, 0.7, 2.0, 6.0])
def test_cdf_against_mpmath(z):
    ref = oracles.mp_cdf(z)
    assert abs(std_cdf(z) / ref - 1) < 1e-13
    assert abs(std_pdf(z) - oracles.mp_pdf(z)) <= 1e-15 * max(1.0, oracles.mp_pdf(z))


@given(finite)
def test_cdf_symmetry(z):
    assert abs(std_cdf(z) + std_cdf(-z) - 1.0) <= 1e-12
    assert abs(std_sf(z) - std_cdf(-z)) <= 1e-15


@given(finite, finite)
def test_cdf_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert std_cdf(lo) <= std_cdf(hi)


@settings(max_examples=200)
@given(st.floats(1e-12, 1 - 1e-12))
def test_quantile_roundtrip(p):
    assert abs(std_cdf(std_quantile(p)) - p) <= 1e-10


@pytest.mark.parametrize("p", [1e-10, 1e-6, 0.01, 0.3, 0.77, 0.999, 1 - 1e-9])
def test_quantile_against_bisection(p):
    assert abs(std_quantile(p) - oracles.mp_quantile(p)) <= 1e-9


def test_prob_between_tails():
    # far upper tail keeps relative accuracy where 1 - 1 would cancel
    ref = float(oracles.mpmath.ncdf(10) - oracles.mpmath.ncdf(9))
    assert abs(prob_between(9.0, 10.0) / ref - 1) < 1e-12
    assert prob_between(-math.inf, math.inf) == 1.0
    assert prob_between(1.0, 0.0) < 0


@given(st.floats(-10, 10))
def test_antiderivative_matches_quadrature(z):
    ref = oracles.adaptive_simpson(lambda v: float(oracles.ndtr(v)), 0.0, z, tol=1e-13) if z else 0.0
    assert abs(cdf_antiderivative(z) - ref) <= 1e-10


def test_tolerances_invariants():
    t = Tolerances()
    assert (t.abs_tol, t.root_tol, t.quad_tol) == (1e-12, 1e-10, 1e-9)
    with pytest.raises(ValueError):
        Tolerances(abs_tol=0)
    with pytest.raises(ValueError):
        Tolerances(abs_tol=1e-6, root_tol=1e-8)


def test_vectorised_use_via_numpy():
    z = np.linspace(-3, 3, 7)
    vals = np.array([std_cdf(v) for v in z])
    assert np.all(np.diff(vals) > 0)
