"""MATPOWER-subset case parsing and DC network operators.

Column bookkeeping (0-based, MATPOWER v2 layout):

    bus     : 0 id, 1 type (4 = isolated / out of service), 2 Pd [MW]
    gen     : 0 bus, 7 status, 8 Pmax [MW], 9 Pmin [MW]
    branch  : 0 fbus, 1 tbus, 3 x [p.u.], 5 rateA [MW, 0 = unlimited], 10 status
    gencost : 0 model (2 = polynomial), 3 n, 4.. coefficients (highest power first)

Loads, generator limits and flow limits stay in MW; susceptances are per
unit on ``base_mva``. Costs are in $ with power in MW.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csgraph, csr_array

__all__ = [
    "CaseFormatError",
    "DisconnectedNetwork",
    "Network",
    "DcOperators",
    "parse_case",
    "load_case",
    "bundled_case",
    "format_case",
    "build_operators",
]


class CaseFormatError(ValueError):
    """The case text does not follow the supported MATPOWER subset."""


class DisconnectedNetwork(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Network:
    base_mva: float
    bus_ids: np.ndarray          # external bus numbers
    load: np.ndarray             # MW per bus
    branch_from: np.ndarray      # bus positions (0-based), not ids
    branch_to: np.ndarray
    susceptance: np.ndarray      # per unit, 1/x
    flow_limit: np.ndarray       # MW, 0 = unlimited
    gen_bus: np.ndarray          # bus positions
    pmin: np.ndarray
    pmax: np.ndarray
    cost: np.ndarray             # (n_gen, 3): c2 [$/MW^2], c1 [$/MW], c0 [$]
    name: str = field(default="case", compare=False)

    def __post_init__(self):
        for f in ("bus_ids", "branch_from", "branch_to", "gen_bus"):
            object.__setattr__(self, f, np.asarray(getattr(self, f), dtype=int))
        for f in ("load", "susceptance", "flow_limit", "pmin", "pmax"):
            object.__setattr__(self, f, np.asarray(getattr(self, f), dtype=float))
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=float).reshape(-1, 3))
        nb = self.bus_ids.size
        if len(set(self.bus_ids.tolist())) != nb:
            raise CaseFormatError("duplicate bus ids")
        for arr in (self.branch_from, self.branch_to, self.gen_bus):
            if arr.size and (arr.min() < 0 or arr.max() >= nb):
                raise CaseFormatError("element refers to a missing bus")
        if np.any(self.pmin > self.pmax):
            raise ValueError("generator with Pmin > Pmax")
        if np.any(self.flow_limit < 0):
            raise CaseFormatError("negative flow limit")
        if not np.all(np.isfinite(self.susceptance)) or np.any(self.susceptance == 0):
            raise CaseFormatError("zero reactance branch")
        if self.cost.shape[0] != self.gen_bus.size:
            raise CaseFormatError("gencost rows do not match generators")
        if nb:
            g = csr_array((np.ones(self.branch_from.size), (self.branch_from, self.branch_to)),
                          shape=(nb, nb))
            ncomp, _ = csgraph.connected_components(g, directed=False)
            if ncomp != 1:
                raise DisconnectedNetwork(f"network has {ncomp} islands")

    @property
    def n_bus(self):
        return self.bus_ids.size

    @property
    def n_branch(self):
        return self.branch_from.size

    @property
    def n_gen(self):
        return self.gen_bus.size

    def counts(self):
        return self.n_bus, self.n_branch, self.n_gen

    def bus_index(self, bus_id):
        hit = np.flatnonzero(self.bus_ids == int(bus_id))
        if hit.size == 0:
            raise KeyError(f"no bus {bus_id}")
        return int(hit[0])

    def scale_flow_limits(self, factor):
        """Copy with every finite flow limit multiplied by ``factor``."""
        factor = float(factor)
        if factor <= 0:
            raise ValueError("capacity factor must be positive")
        return replace(self, flow_limit=self.flow_limit * factor)

    # -- canonical JSON -----------------------------------------------------
    def to_dict(self):
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": [{"id": int(i), "load_mw": float(d)} for i, d in zip(self.bus_ids, self.load)],
            "branches": [
                {"from": int(self.bus_ids[f]), "to": int(self.bus_ids[t]),
                 "susceptance_pu": float(b), "flow_limit_mw": float(r)}
                for f, t, b, r in zip(self.branch_from, self.branch_to, self.susceptance, self.flow_limit)
            ],
            "generators": [
                {"bus": int(self.bus_ids[g]), "pmin_mw": float(lo), "pmax_mw": float(hi),
                 "cost": [float(c) for c in cst]}
                for g, lo, hi, cst in zip(self.gen_bus, self.pmin, self.pmax, self.cost)
            ],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        ids = [b["id"] for b in d["buses"]]
        pos = {b: k for k, b in enumerate(ids)}
        br, gen = d["branches"], d["generators"]
        return cls(
            base_mva=float(d["base_mva"]),
            bus_ids=ids,
            load=[b["load_mw"] for b in d["buses"]],
            branch_from=[pos[b["from"]] for b in br],
            branch_to=[pos[b["to"]] for b in br],
            susceptance=[b["susceptance_pu"] for b in br],
            flow_limit=[b["flow_limit_mw"] for b in br],
            gen_bus=[pos[g["bus"]] for g in gen],
            pmin=[g["pmin_mw"] for g in gen],
            pmax=[g["pmax_mw"] for g in gen],
            cost=np.array([g["cost"] for g in gen], dtype=float).reshape(-1, 3),
            name=d.get("name", "case"),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SCALAR = re.compile(r"(?:\bmpc\.)?\bbaseMVA\s*=\s*([-+0-9.eE]+)\s*;")
_NAME = re.compile(r"function\s+\w+\s*=\s*(\w+)")


def _strip_comments(text):
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _matrix(text, key, ncols_min):
    m = re.search(r"(?:\bmpc\.)?\b" + key + r"\s*=\s*\[(.*?)\]\s*;?", text, re.S)
    if m is None:
        raise CaseFormatError(f"missing matrix {key!r}")
    rows = []
    for raw in re.split(r"[;\n]", m.group(1)):
        tok = raw.replace(",", " ").split()
        if not tok:
            continue
        try:
            rows.append([float(t) for t in tok])
        except ValueError as exc:
            raise CaseFormatError(f"{key}: non-numeric entry in row {raw.strip()!r}") from exc
    if not rows:
        raise CaseFormatError(f"matrix {key!r} is empty")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise CaseFormatError(f"matrix {key!r} has ragged rows {sorted(width)}")
    arr = np.array(rows)
    if arr.shape[1] < ncols_min:
        raise CaseFormatError(f"matrix {key!r} needs >= {ncols_min} columns, has {arr.shape[1]}")
    return arr


def parse_case(text: str, name: str | None = None) -> Network:
    """Parse MATPOWER-style case text into a :class:`Network`."""
    body = _strip_comments(text)
    m = _SCALAR.search(body)
    if m is None:
        raise CaseFormatError("missing baseMVA")
    base = float(m.group(1))
    if name is None:
        nm = _NAME.search(body)
        name = nm.group(1) if nm else "case"
    bus = _matrix(body, "bus", 3)
    gen = _matrix(body, "gen", 10)
    branch = _matrix(body, "branch", 6)
    gencost = _matrix(body, "gencost", 5)

    if gencost.shape[0] not in (gen.shape[0], 2 * gen.shape[0]):
        raise CaseFormatError("gencost must have one (or two) rows per generator")
    gencost = gencost[: gen.shape[0]]

    bus_live = bus[:, 1] != 4
    ids = bus[bus_live, 0].astype(int)
    pos = {b: k for k, b in enumerate(ids)}

    g_live = [(gen.shape[1] <= 7 or row[7] > 0) and int(row[0]) in pos for row in gen]
    br_live = [(branch.shape[1] <= 10 or row[10] > 0) and int(row[0]) in pos and int(row[1]) in pos
               for row in branch]
    gen, gencost, branch = gen[g_live], gencost[g_live], branch[br_live]

    cost = np.zeros((gen.shape[0], 3))
    for k, row in enumerate(gencost):
        if int(row[0]) != 2:
            raise CaseFormatError(f"unsupported cost model {int(row[0])} (only polynomial)")
        n = int(row[3])
        if n not in (2, 3) or row.size < 4 + n:
            raise CaseFormatError(f"unsupported polynomial cost with n={n}")
        cost[k, 3 - n:] = row[4:4 + n]

    x = branch[:, 3]
    if np.any(x == 0):
        raise CaseFormatError("zero reactance branch")
    return Network(
        base_mva=base,
        bus_ids=ids,
        load=bus[bus_live, 2],
        branch_from=[pos[int(b)] for b in branch[:, 0]],
        branch_to=[pos[int(b)] for b in branch[:, 1]],
        susceptance=1.0 / x,
        flow_limit=branch[:, 5],
        gen_bus=[pos[int(b)] for b in gen[:, 0]],
        pmin=gen[:, 9],
        pmax=gen[:, 8],
        cost=cost,
        name=name,
    )


def load_case(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def bundled_case(name: str) -> Network:
    """One of the shipped cases: ``case30``, ``case39`` or ``case118``."""
    from importlib import resources

    ref = resources.files(__package__).joinpath("data", f"{name}.m")
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled case {name!r}")
    return parse_case(ref.read_text(encoding="utf-8"), name=name)


def _num(v):
    return repr(float(v))


def format_case(net: Network) -> str:
    """Write ``net`` back as minimal MATPOWER text readable by :func:`parse_case`."""
    out = [f"function mpc = {net.name}", "mpc.version = '2';", f"mpc.baseMVA = {_num(net.base_mva)};",
           "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin", "mpc.bus = ["]
    for i, d in zip(net.bus_ids, net.load):
        out.append(f"\t{i}\t1\t{_num(d)}\t0\t0\t0\t1\t1\t0\t1\t1\t1.1\t0.9;")
    out += ["];", "%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin", "mpc.gen = ["]
    for g, lo, hi in zip(net.gen_bus, net.pmin, net.pmax):
        out.append(f"\t{net.bus_ids[g]}\t0\t0\t0\t0\t1\t{_num(net.base_mva)}\t1\t{_num(hi)}\t{_num(lo)};")
    out += ["];", "%% fbus tbus r x b rateA rateB rateC ratio angle status", "mpc.branch = ["]
    for f, t, b, r in zip(net.branch_from, net.branch_to, net.susceptance, net.flow_limit):
        out.append(f"\t{net.bus_ids[f]}\t{net.bus_ids[t]}\t0\t{_num(1.0 / b)}\t0\t{_num(r)}\t0\t0\t0\t0\t1;")
    out += ["];", "mpc.gencost = ["]
    for c2, c1, c0 in net.cost:
        out.append(f"\t2\t0\t0\t3\t{_num(c2)}\t{_num(c1)}\t{_num(c0)};")
    out.append("];")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DcOperators:
    incidence: np.ndarray        # (n_branch, n_bus), +1 at from, -1 at to
    laplacian: np.ndarray        # A' diag(beta) A, per unit
    pseudo_inverse: np.ndarray
    slack: int                   # bus position whose angle is fixed to 0

    @property
    def reduced_rows(self):
        """Bus positions kept in the nodal balance once the slack row is dropped."""
        return np.delete(np.arange(self.laplacian.shape[0]), self.slack)

    def ptdf(self, susceptance):
        """Branch-flow sensitivity to injections: ``diag(beta) A B^+``."""
        return (np.asarray(susceptance)[:, None] * self.incidence) @ self.pseudo_inverse


def build_operators(net: Network, slack: int | None = None, tol: float = 1e-9) -> DcOperators:
    nb = net.n_bus
    A = np.zeros((net.n_branch, nb))
    rows = np.arange(net.n_branch)
    A[rows, net.branch_from] += 1.0
    A[rows, net.branch_to] -= 1.0
    B = A.T @ (net.susceptance[:, None] * A)
    w, V = np.linalg.eigh(B)
    zero = np.abs(w) <= tol * max(1.0, float(np.abs(w).max()))
    if zero.sum() != 1:
        raise DisconnectedNetwork(f"Laplacian has {int(zero.sum())} zero eigenvalues")
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, w))
    Bp = (V * inv) @ V.T
    Bp = 0.5 * (Bp + Bp.T)
    slack = 0 if slack is None else int(slack)
    if not 0 <= slack < nb:
        raise ValueError(f"slack position {slack} outside 0..{nb - 1}")
    return DcOperators(A, B, Bp, slack)
