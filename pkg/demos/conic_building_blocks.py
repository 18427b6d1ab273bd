"""
Building a robust band constraint by hand
=========================================

The conic layer turns one robust two-sided constraint into a second-order
cone plus N + 1 linear rows. Here we size a single exposure x so that the
band [-3, 3] survives the worst case around a Gaussian with unit variance.
"""

import numpy as np

from twosided_drcc import RiskSpec, construct_points
from twosided_drcc.conic import Affine, ConicProgram, add_two_sided_drcc, factor_covariance, solve

poly = construct_points(RiskSpec(0.05, 0.05), 7)

prog = ConicProgram()
x = prog.add_variables(1, "x")
L, _ = factor_covariance([[1.0]])
handle = add_two_sided_drcc(prog, x, Affine.constant([-3.0]), Affine.constant([3.0]), [0.0], L, poly)
prog.add_linear_cost(-1.0 * x)   # largest exposure that stays feasible

print(prog.num_soc, "cone block,", prog.num_ineq, "linear rows")

sol = solve(prog)
print(sol.status, "x =", sol.value(x)[0], " s =", sol.value(handle.scale)[0])

###############################################################################
# At the optimum the symmetric vertex is active: 3 / x equals its u
u0 = poly.points[len(poly) // 2].u
print("3 / x =", 3.0 / sol.value(x)[0], " u0 =", u0)

###############################################################################
# The program can be written out and read back
text = prog.to_json()
again = ConicProgram.from_json(text)
print(np.allclose(solve(again).primal, sol.primal))
