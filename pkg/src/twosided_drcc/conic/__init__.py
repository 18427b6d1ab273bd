"""Conic program representation, robust two-sided constraint emitter, reference solver."""

from .drcc import DrccHandle, add_two_sided_drcc, factor_covariance
from .ipm import solve
from .program import Affine, ConicProgram, Solution

__all__ = [
    "Affine",
    "ConicProgram",
    "Solution",
    "solve",
    "add_two_sided_drcc",
    "factor_covariance",
    "DrccHandle",
]
