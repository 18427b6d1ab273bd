"""Chance-constrained DC optimal power flow with robust two-sided limits.

Decisions are the scheduled outputs ``p``, the participation factors
``alpha`` (share of the total wind forecast error each generator absorbs)
and the bus angles ``theta``. Every generator band and every limited branch
band becomes one robust two-sided constraint in the random wind error.

The program is built in per unit on the network base; everything exchanged
with callers (loads, limits, wind samples, dispatch) is in MW.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .conic import ConicProgram, add_two_sided_drcc, factor_covariance, solve
from .conic.program import Affine, Solution
from .grid import DcOperators, Network
from .wdrcc import LevelPolyline, RiskSpec, construct_points

__all__ = [
    "WindFleet",
    "OpfConfig",
    "MomentEstimate",
    "OpfModel",
    "Dispatch",
    "estimate_moments",
    "assemble",
    "assemble_deterministic",
    "solve_opf",
]


@dataclass(frozen=True)
class WindFleet:
    buses: tuple            # external bus ids
    forecast: tuple         # MW

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "forecast", tuple(float(f) for f in self.forecast))
        if len(self.buses) != len(self.forecast):
            raise ValueError("one forecast per wind bus")
        if len(set(self.buses)) != len(self.buses):
            raise ValueError("duplicate wind bus")
        if any(f < 0 for f in self.forecast):
            raise ValueError("forecast must be nonnegative")

    @property
    def size(self):
        return len(self.buses)

    def positions(self, net: Network):
        return np.array([net.bus_index(b) for b in self.buses], dtype=int)


@dataclass(frozen=True)
class OpfConfig:
    eps_g: float = 0.05
    eps_b: float = 0.05
    delta: float = 0.05
    pieces: int = 7
    train_samples: int = 100
    slack_bus: int | None = None          # external id; default: first bus
    capacity_factor: float = 1.0
    unlimited_branch_limit: float | None = None   # MW; None skips rateA == 0 branches
    delta_overrides: dict = field(default_factory=dict)   # {"gen:3": 0.1, "branch:17": 0.02}
    truth: dict = field(default_factory=dict)              # wind truth model, see stochastics

    def __post_init__(self):
        for name in ("eps_g", "eps_b"):
            v = getattr(self, name)
            if not 0.0 < v < 0.5:
                raise ValueError(f"{name} must lie in (0, 1/2), got {v}")
        if self.pieces < 3 or self.pieces % 2 == 0:
            raise ValueError(f"pieces must be odd and >= 3, got {self.pieces}")
        if self.delta < 1e-8:
            raise ValueError("delta must be >= 1e-8")
        if self.capacity_factor <= 0:
            raise ValueError("capacity_factor must be positive")
        for key in self.delta_overrides:
            kind, _, idx = key.partition(":")
            if kind not in ("gen", "branch") or not idx.isdigit():
                raise ValueError(f"bad override key {key!r}; expected 'gen:<k>' or 'branch:<k>'")

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return OpfConfig(**d)

    def to_json(self, **kw):
        return json.dumps(asdict(self), **kw)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class MomentEstimate:
    mean: np.ndarray         # MW
    covariance: np.ndarray   # MW^2
    factor: np.ndarray       # lower triangular, factor @ factor.T ~ covariance
    ridged: bool
    n_samples: int


def estimate_moments(samples, ridge=1e-8) -> MomentEstimate:
    """Sample mean and (unbiased) covariance of wind-error rows."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    L, ridged = factor_covariance(cov, ridge=ridge)
    return MomentEstimate(mean, cov, L, ridged, X.shape[0])


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class _Row:
    label: str
    x: Affine
    ell: Affine
    u: Affine
    epsilon: float
    delta: float
    handle: object = None


@dataclass
class OpfModel:
    program: ConicProgram
    network: Network
    operators: DcOperators
    fleet: WindFleet
    p: Affine
    alpha: Affine
    theta: Affine
    rows: list                     # one _Row per robust constraint
    limited_branches: np.ndarray   # branch positions carrying a flow constraint
    flow_limit_pu: np.ndarray      # per branch, per unit, after capacity scaling
    mean_pu: np.ndarray
    factor_pu: np.ndarray

    @property
    def base(self):
        return self.network.base_mva

    def extract(self, sol: Solution) -> "Dispatch":
        x = sol.primal
        scale = {r.label: float(r.handle.scale.value(x)[0]) for r in self.rows if r.handle}
        return Dispatch(
            status=sol.status,
            objective=float(sol.objective_value),
            p_mw=self.p.value(x) * self.base,
            alpha=self.alpha.value(x),
            theta=self.theta.value(x),
            scale=scale,
            residuals=tuple(float(v) for v in sol.kkt_residuals),
            iterations=int(sol.iterations),
        )

    def numeric_rows(self, sol: Solution):
        """``(label, x, ell, u, epsilon, delta)`` at the solution, standardization not applied."""
        out = []
        for r in self.rows:
            out.append((r.label, r.x.value(sol.primal), float(r.ell.value(sol.primal)[0]),
                        float(r.u.value(sol.primal)[0]), r.epsilon, r.delta))
        return out


@dataclass
class Dispatch:
    status: str
    objective: float
    p_mw: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    scale: dict = field(default_factory=dict)   # auxiliary s per robust constraint
    residuals: tuple = ()
    iterations: int = 0

    def to_json(self, **kw):
        return json.dumps({
            "status": self.status,
            "objective": self.objective,
            "p_mw": np.asarray(self.p_mw).tolist(),
            "alpha": np.asarray(self.alpha).tolist(),
            "theta": np.asarray(self.theta).tolist(),
            "scale": self.scale,
            "residuals": list(self.residuals),
            "iterations": self.iterations,
        }, **kw)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["status"], d["objective"], np.asarray(d["p_mw"]), np.asarray(d["alpha"]),
                   np.asarray(d["theta"]), d.get("scale", {}), tuple(d.get("residuals", ())),
                   d.get("iterations", 0))


def _flow_limits(net: Network, config: OpfConfig):
    limit = net.flow_limit * config.capacity_factor
    unlimited = net.flow_limit == 0
    if config.unlimited_branch_limit is not None:
        limit = np.where(unlimited, float(config.unlimited_branch_limit), limit)
        unlimited = np.zeros_like(unlimited)
    return limit / net.base_mva, np.flatnonzero(~unlimited)


def _core(net: Network, ops: DcOperators, fleet: WindFleet | None, slack=None):
    """Variables, cost and the nodal balance shared by every variant."""
    base = net.base_mva
    prog = ConicProgram()
    ng, nb = net.n_gen, net.n_bus
    p = prog.add_variables(ng, "p")
    alpha = prog.add_variables(ng, "alpha")
    theta = prog.add_variables(nb, "theta")

    c2, c1, c0 = net.cost.T
    if np.any(c2 < 0):
        raise ValueError("negative quadratic cost")
    quad = np.flatnonzero(c2 > 0)
    if quad.size:
        prog.add_quadratic_cost((np.sqrt(c2[quad]) * base)[:, None] * np.eye(ng)[quad] @ p)
    prog.add_linear_cost((c1 * base)[None, :] @ p + float(c0.sum()))

    wind = np.zeros(nb)
    if fleet is not None and fleet.size:
        np.add.at(wind, fleet.positions(net), np.asarray(fleet.forecast) / base)
    Cg = np.zeros((nb, ng))
    Cg[net.gen_bus, np.arange(ng)] = 1.0
    load = net.load / base
    rows = ops.reduced_rows
    prog.add_eq(ops.laplacian[rows] @ theta - Cg[rows] @ p, wind[rows] - load[rows])
    prog.add_eq(p.sum(), float(load.sum() - wind.sum()))
    prog.add_eq(theta[ops.slack], 0.0)
    return prog, p, alpha, theta, Cg


def _resolve_slack(net, ops, config):
    if config.slack_bus is None or net.bus_index(config.slack_bus) == ops.slack:
        return ops
    from dataclasses import replace
    return replace(ops, slack=net.bus_index(config.slack_bus))


def assemble(network: Network, operators: DcOperators, fleet: WindFleet, moments: MomentEstimate,
             config: OpfConfig, poly=None) -> OpfModel:
    """Build the robust program.

    ``poly`` may be a :class:`LevelPolyline` used for every constraint with
    matching ``(epsilon, delta)``, a dict keyed by ``(epsilon, delta)``, or
    None; missing polylines are constructed with ``config.pieces`` points.
    """
    net = network
    if np.any(net.pmin > net.pmax):
        raise ValueError("generator with Pmin > Pmax")
    ops = _resolve_slack(net, operators, config)
    base = net.base_mva
    nw = fleet.size
    mean = np.asarray(moments.mean, dtype=float) / base
    L = np.asarray(moments.factor, dtype=float) / base
    if mean.size != nw or L.shape != (nw, nw):
        raise ValueError("moments do not match the wind fleet")

    cache = {}
    if isinstance(poly, LevelPolyline):
        cache[(poly.spec.epsilon, poly.spec.delta)] = poly
    elif isinstance(poly, dict):
        cache.update(poly)

    def polyline(eps, delta):
        key = (eps, delta)
        if key not in cache:
            cache[key] = construct_points(RiskSpec(eps, delta), config.pieces)
        return cache[key]

    prog, p, alpha, theta, Cg = _core(net, ops, fleet)
    prog.add_eq(alpha.sum(), 1.0)
    prog.add_leq(-alpha)
    ones = np.ones((nw, 1))
    robust = []

    for g in range(net.n_gen):
        x = -ones @ alpha[g]
        label = f"gen:{g}"
        robust.append(_Row(label, x, net.pmin[g] / base - p[g], net.pmax[g] / base - p[g],
                           config.eps_g, float(config.delta_overrides.get(label, config.delta))))

    fmax, limited = _flow_limits(net, config)
    wpos = fleet.positions(net)
    for k in limited:
        i, j = net.branch_from[k], net.branch_to[k]
        beta = net.susceptance[k]
        w_full = beta * (ops.pseudo_inverse[:, i] - ops.pseudo_inverse[:, j])
        v = Cg.T @ w_full
        x = (-ones * v[None, :]) @ alpha + w_full[wpos]
        flow = beta * (theta[i] - theta[j])
        label = f"branch:{k}"
        robust.append(_Row(label, x, -fmax[k] - flow, fmax[k] - flow,
                           config.eps_b, float(config.delta_overrides.get(label, config.delta))))

    for r in robust:
        r.handle = add_two_sided_drcc(prog, r.x, r.ell, r.u, mean, L, polyline(r.epsilon, r.delta),
                                      name=f"s[{r.label}]")
    return OpfModel(prog, net, ops, fleet, p, alpha, theta, robust, limited, fmax, mean, L)


def assemble_deterministic(network: Network, operators: DcOperators, fleet: WindFleet | None = None,
                           config: OpfConfig | None = None):
    """Plain DC-OPF with the wind fixed at its forecast (no recourse, no uncertainty)."""
    config = config or OpfConfig()
    net = network
    ops = _resolve_slack(net, operators, config)
    base = net.base_mva
    prog, p, alpha, theta, _ = _core(net, ops, fleet)
    prog.add_eq(alpha, np.zeros(net.n_gen))
    prog.add_leq(p, net.pmax / base)
    prog.add_leq(-p, -net.pmin / base)
    fmax, limited = _flow_limits(net, config)
    for k in limited:
        i, j = net.branch_from[k], net.branch_to[k]
        flow = net.susceptance[k] * (theta[i] - theta[j])
        prog.add_leq(flow, fmax[k])
        prog.add_leq(-flow, fmax[k])
    fleet = fleet or WindFleet((), ())
    return OpfModel(prog, net, ops, fleet, p, alpha, theta, [], limited, fmax,
                    np.zeros(fleet.size), np.zeros((fleet.size, fleet.size)))


def solve_opf(model: OpfModel, tol=1e-8, max_iter=100):
    """Solve an assembled model; returns ``(Solution, Dispatch)``."""
    sol = solve(model.program, tol=tol, max_iter=max_iter)
    return sol, model.extract(sol)


def config_digest(config: OpfConfig) -> str:
    """Stable short hash of a config, used to tag artifacts."""
    import hashlib
    return hashlib.sha256(config.to_json(sort_keys=True).encode()).hexdigest()[:12]
