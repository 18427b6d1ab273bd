"""Random cone programs whose optimum is fixed by a chosen KKT point."""

import numpy as np
import scipy.sparse as sp

from twosided_drcc.conic.program import StandardForm


def _complementary_pair(rng, dim):
    """A point on the boundary of Q^dim and a dual point orthogonal to it."""
    kind = rng.integers(3)
    v = rng.normal(size=dim - 1)
    if kind == 0:  # both on the boundary, facing each other
        t = np.linalg.norm(v)
        s = np.concatenate([[t], v])
        k = rng.uniform(0.5, 2.0)
        z = k * np.concatenate([[t], -v])
        return s, z
    if kind == 1:  # primal interior, dual zero
        s = np.concatenate([[np.linalg.norm(v) + rng.uniform(0.5, 2.0)], v])
        return s, np.zeros(dim)
    z = np.concatenate([[np.linalg.norm(v) + rng.uniform(0.5, 2.0)], v])
    return np.zeros(dim), z


def constructed_problem(seed, n=5, p=1, l=4, soc=(3, 4), quadratic=True):
    """Return ``(StandardForm, x_star, objective_star)``."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(p, n))
    m = l + sum(soc)
    G = rng.normal(size=(m, n))
    if quadratic:
        F = rng.normal(size=(n, n))
        P = F @ F.T / n
    else:
        P = np.zeros((n, n))
    x = rng.normal(size=n)
    y = rng.normal(size=p)
    # orthant: strict complementarity with random active set
    active = rng.random(l) < 0.5
    s_l = np.where(active, 0.0, rng.uniform(0.5, 2.0, l))
    z_l = np.where(active, rng.uniform(0.5, 2.0, l), 0.0)
    parts = [(s_l, z_l)] + [_complementary_pair(rng, d) for d in soc]
    s = np.concatenate([a for a, _ in parts])
    z = np.concatenate([b for _, b in parts])
    h = G @ x + s
    b = A @ x
    q = -(P @ x + A.T @ y + G.T @ z)
    sf = StandardForm(P=sp.csc_array(P), q=q, c0=0.0, A=sp.csr_array(A), b=b,
                      G=sp.csr_array(G), h=h, l=l, soc=list(soc))
    return sf, x, 0.5 * x @ P @ x + q @ x
