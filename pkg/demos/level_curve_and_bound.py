"""
Level curves of the worst-case band function and the polyline bound
===================================================================

The robust two-sided constraint asks that a standardized band (ell, u)
sit inside the region where g_eps(ell, u) >= delta. This walk-through
evaluates g, places points on its level curve and measures how much the
polygon through those points gives away.
"""

import numpy as np

from twosided_drcc import RiskSpec, apx_bound, construct_points, eval_g, max_g_on_boundary

# g is zero until the band holds at least 1 - eps of the standard normal mass
eps = 0.05
for ell, u in [(-1.0, 1.0), (-2.0, 2.0), (-3.0, 3.0), (-6.0, 2.5)]:
    print(f"g({ell:+.1f}, {u:+.1f}) = {eval_g(eps, ell, u):.5f}")

###############################################################################
# Points on the curve g = delta. The middle point is the symmetric band.
spec = RiskSpec(epsilon=eps, delta=0.05)
poly = construct_points(spec, 7)
for p in poly.points:
    print(f"  ell={p.ell:+.4f}  u={p.u:+.4f}  g-delta={eval_g(eps, p.ell, p.u) - spec.delta:+.1e}")

###############################################################################
# The polygon is an inner approximation: along its edges g only grows.
# The computable bound caps how far above delta it can climb.
for n in (3, 5, 9, 19, 29):
    poly = construct_points(spec, n)
    bound = apx_bound(spec, poly).bound
    worst = max_g_on_boundary(spec, poly) / spec.delta
    print(f"N={n:<3d} bound={bound:.3f}  observed={worst:.3f}")

###############################################################################
# A coarse grid of g, the data behind a contour plot
ells = np.linspace(-5, 0, 6)
us = np.linspace(0, 5, 6)
grid = np.array([[eval_g(eps, a, b) for b in us] for a in ells])
print(np.round(grid, 3))
