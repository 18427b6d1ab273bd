"""Seeded wind-error sampling and out-of-sample evaluation of a dispatch.

Random streams are numpy ``Philox`` generators keyed by
``SeedSequence(seed, spawn_key=(bus_slot, block))``. Samples are produced
in fixed canonical blocks of ``BLOCK`` rows, so the matrix for a given seed
does not depend on how (or in what order, or on how many workers) blocks
are generated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .grid import DcOperators, Network
from .opf import Dispatch, OpfConfig, WindFleet, _flow_limits

__all__ = [
    "Component",
    "TruthModel",
    "sample",
    "save_samples_csv",
    "load_samples_csv",
    "joint_success",
    "oos_violation",
    "mean_ci",
    "binomial_se",
    "realized",
]

BLOCK = 4096


@dataclass(frozen=True)
class Component:
    """Marginal law of one wind farm's output, in per unit of ``TruthModel.unit_mw``."""

    family: str            # "weibull" or "gaussian"
    a: float               # weibull shape k  | gaussian mean
    b: float               # weibull scale    | gaussian std

    def __post_init__(self):
        if self.family not in ("weibull", "gaussian"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "weibull" and not (self.a > 0 and self.b > 0):
            raise ValueError("weibull shape and scale must be positive")
        if self.family == "gaussian" and not self.b > 0:
            raise ValueError("gaussian std must be positive")

    @property
    def mean(self):
        if self.family == "weibull":
            return self.b * math.gamma(1.0 + 1.0 / self.a)
        return self.a

    @property
    def std(self):
        if self.family == "weibull":
            k, lam = self.a, self.b
            return lam * math.sqrt(math.gamma(1 + 2 / k) - math.gamma(1 + 1 / k) ** 2)
        return self.b

    def centered(self, uniform):
        """Map U(0,1) draws to zero-mean errors (inverse CDF)."""
        if self.family == "weibull":
            # 1 - U is also uniform; use -log1p(-U) to keep U -> 0 exact
            return self.b * (-np.log1p(-uniform)) ** (1.0 / self.a) - self.mean
        return self.b * stats.norm.ppf(uniform)


@dataclass(frozen=True)
class TruthModel:
    buses: tuple
    components: tuple
    unit_mw: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.buses) != len(self.components):
            raise ValueError("one component per wind bus")
        if self.unit_mw <= 0:
            raise ValueError("unit_mw must be positive")

    @classmethod
    def weibull(cls, buses, shapes, scale=1.0, unit_mw=100.0):
        return cls(buses, tuple(Component("weibull", k, scale) for k in shapes), unit_mw)

    @classmethod
    def from_dict(cls, d):
        if "weibull_shapes" in d:
            return cls.weibull(d["buses"], d["weibull_shapes"], d.get("weibull_scale", 1.0),
                               d.get("unit_mw", 100.0))
        comps = [Component(c["family"], c["a"], c["b"]) for c in d["components"]]
        return cls(d["buses"], comps, d.get("unit_mw", 100.0))

    def to_dict(self):
        return {"buses": list(self.buses), "unit_mw": self.unit_mw,
                "components": [{"family": c.family, "a": c.a, "b": c.b} for c in self.components]}

    def fleet(self) -> WindFleet:
        """Forecast at each farm = analytic mean output."""
        return WindFleet(self.buses, [c.mean * self.unit_mw for c in self.components])


def _block(model, seed, block, rows):
    out = np.empty((rows, len(model.components)))
    for j, comp in enumerate(model.components):
        ss = np.random.SeedSequence(seed, spawn_key=(j, block))
        u = np.random.Generator(np.random.Philox(ss)).random(rows)
        out[:, j] = comp.centered(u)
    return out * model.unit_mw


def sample(model: TruthModel, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """``(n, n_farms)`` zero-mean forecast errors in MW."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    sizes = [min(BLOCK, n - s) for s in range(0, n, BLOCK)]
    jobs = [(model, int(seed), b, r) for b, r in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _block(*a), jobs))
    else:
        parts = [_block(*a) for a in jobs]
    return np.vstack(parts)


def save_samples_csv(path, samples, buses):
    header = ",".join(f"bus_{b}" for b in buses)
    np.savetxt(path, np.asarray(samples), delimiter=",", header=header, comments="", fmt="%.17g")


def load_samples_csv(path):
    """Returns ``(samples, buses)``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    buses = [int(h.removeprefix("bus_")) for h in header]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data, buses


# ---------------------------------------------------------------------------
# out-of-sample evaluation
# ---------------------------------------------------------------------------

def joint_success(values, lower, upper, tol=1e-9, per_constraint=False):
    """Row-wise test ``lower <= values <= upper``.

    Returns the fraction of rows where every column holds, or with
    ``per_constraint`` the success fraction of each column.
    """
    V = np.atleast_2d(np.asarray(values, dtype=float))
    ok = (V >= np.asarray(lower) - tol) & (V <= np.asarray(upper) + tol)
    if per_constraint:
        return ok.mean(axis=0)
    return float(ok.all(axis=1).mean())


def realized(dispatch: Dispatch, network: Network, operators: DcOperators, fleet: WindFleet,
             samples):
    """Generator outputs and branch flows (MW) under each error row."""
    net = network
    xi = np.atleast_2d(np.asarray(samples, dtype=float))
    if xi.shape[1] != fleet.size:
        raise ValueError(f"samples have {xi.shape[1]} columns, fleet has {fleet.size} farms")
    p = np.asarray(dispatch.p_mw, dtype=float)
    alpha = np.asarray(dispatch.alpha, dtype=float)
    theta = np.asarray(dispatch.theta, dtype=float)
    if p.size != net.n_gen or alpha.size != net.n_gen or theta.size != net.n_bus:
        raise ValueError("dispatch does not match the network")
    total = xi.sum(axis=1)
    gen = p[None, :] - total[:, None] * alpha[None, :]
    beta = net.susceptance
    flow0 = beta * (theta[net.branch_from] - theta[net.branch_to]) * net.base_mva
    # injection change per sample: wind errors at farm buses minus recourse
    sens = operators.ptdf(beta)                       # (n_branch, n_bus)
    gen_sens = sens[:, net.gen_bus] @ alpha           # flow change per MW of total error
    flows = flow0[None, :] + xi @ sens[:, fleet.positions(net)].T - total[:, None] * gen_sens[None, :]
    return gen, flows


def oos_violation(dispatch: Dispatch, network: Network, operators: DcOperators, fleet: WindFleet,
                  samples, config: OpfConfig | None = None, per_constraint=False, tol=None):
    """Out-of-sample success probability of ``dispatch``.

    Joint by default: a sample counts only if every generator band and every
    limited branch band holds at once. ``per_constraint`` returns a dict of
    per-row success fractions instead (labels as in the assembled model).
    ``tol`` (MW) absorbs solver-level infeasibility; default ``1e-6 * base``.
    """
    config = config or OpfConfig()
    net = network
    tol = 1e-6 * net.base_mva if tol is None else float(tol)
    gen, flows = realized(dispatch, net, operators, fleet, samples)
    fmax_pu, limited = _flow_limits(net, config)
    fmax = fmax_pu[limited] * net.base_mva
    values = np.hstack([gen, flows[:, limited]])
    lower = np.concatenate([net.pmin, -fmax])
    upper = np.concatenate([net.pmax, fmax])
    if per_constraint:
        frac = joint_success(values, lower, upper, tol, per_constraint=True)
        labels = [f"gen:{g}" for g in range(net.n_gen)] + [f"branch:{k}" for k in limited]
        return dict(zip(labels, frac.tolist()))
    return joint_success(values, lower, upper, tol)


def mean_ci(values, level=0.95):
    """Mean and Student-t confidence interval ``(mean, lo, hi)``."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if v.size < 2:
        return m, m, m
    half = float(stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))
    return m, m - half, m + half


def binomial_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)
