"""Wasserstein distributionally robust two-sided chance constraints.

Level-set analytics, the polyhedral/second-order-cone inner approximation,
a reference conic interior-point solver and a chance-constrained DC-OPF
pipeline with out-of-sample evaluation.
"""

from .gaussian import Tolerances, std_cdf, std_pdf, std_quantile
from .wdrcc import (
    Band,
    LevelPolyline,
    RiskSpec,
    apx_bound,
    construct_points,
    eval_g,
    max_g_on_boundary,
)

__version__ = "0.1.0"

__all__ = [
    "Tolerances",
    "std_cdf",
    "std_pdf",
    "std_quantile",
    "RiskSpec",
    "Band",
    "LevelPolyline",
    "eval_g",
    "construct_points",
    "apx_bound",
    "max_g_on_boundary",
]
