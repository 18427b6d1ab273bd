"""Solver-agnostic conic program with affine expressions over a growing variable set.

Standard form handed to the solvers::

    minimize    1/2 x'Px + q'x + c0
    subject to  A x  = b
                G x + s = h,   s in R_+^l x Q^{q_1} x ... x Q^{q_k}

Linear inequalities come first in ``G``, followed by the second-order cone
blocks in the order they were added. A cone block ``(t, v)`` means
``||v||_2 <= t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["Affine", "ConicProgram", "StandardForm", "Solution"]

JSON_FORMAT = "conic-program/1"


class Affine:
    """Vector affine expression ``M @ x + c``.

    ``M`` may have fewer columns than the owning program; missing columns are
    zero, so expressions created before later variables stay valid.
    """

    __slots__ = ("M", "c")
    __array_ufunc__ = None  # make numpy defer to __rmatmul__ / __rmul__

    def __init__(self, M, c=None):
        M = sp.csr_array(M)
        self.M = M
        self.c = np.zeros(M.shape[0]) if c is None else np.asarray(c, dtype=float).reshape(M.shape[0])

    @classmethod
    def constant(cls, value, ncols=0):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(sp.csr_array((value.size, ncols)), value)

    @property
    def size(self):
        return self.M.shape[0]

    def _lift(self, other):
        if isinstance(other, Affine):
            return other
        return Affine.constant(np.broadcast_to(np.asarray(other, dtype=float), (self.size,)))

    @staticmethod
    def _pad(M, ncols):
        if M.shape[1] == ncols:
            return M
        M = M.tocoo()
        return sp.csr_array((M.data, (M.row, M.col)), shape=(M.shape[0], ncols))

    def __add__(self, other):
        other = self._lift(other)
        n = max(self.M.shape[1], other.M.shape[1])
        if other.size == 1 and self.size > 1:
            other = Affine(sp.csr_array(sp.vstack([other.M] * self.size)), np.repeat(other.c, self.size))
        elif self.size == 1 and other.size > 1:
            return other + self
        return Affine(self._pad(self.M, n) + self._pad(other.M, n), self.c + other.c)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.M, -self.c)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = float(k)
        return Affine(self.M * k, self.c * k)

    __rmul__ = __mul__

    def __rmatmul__(self, D):
        D = np.atleast_2d(np.asarray(D, dtype=float)) if not sp.issparse(D) else D
        return Affine(sp.csr_array(D @ self.M), D @ self.c)

    def __getitem__(self, idx):
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Affine(self.M[rows], self.c[rows])

    def sum(self):
        return Affine(sp.csr_array(self.M.sum(axis=0).reshape(1, -1)), [self.c.sum()])

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self._pad(self.M, x.size) @ x + self.c

    @staticmethod
    def stack(exprs):
        n = max(e.M.shape[1] for e in exprs)
        return Affine(sp.vstack([Affine._pad(e.M, n) for e in exprs], format="csr"),
                      np.concatenate([e.c for e in exprs]))

    def __repr__(self):
        return f"Affine(size={self.size}, nnz={self.M.nnz})"


@dataclass
class StandardForm:
    P: sp.csc_array
    q: np.ndarray
    c0: float
    A: sp.csr_array
    b: np.ndarray
    G: sp.csr_array
    h: np.ndarray
    l: int
    soc: list

    @property
    def n(self):
        return self.q.size


@dataclass
class Solution:
    status: str                     # optimal | infeasible | unbounded | max_iter
    primal: np.ndarray
    objective_value: float
    kkt_residuals: tuple            # (primal, dual, relative gap)
    iterations: int = 0
    eq_dual: np.ndarray = field(default=None, repr=False)
    cone_dual: np.ndarray = field(default=None, repr=False)
    slack: np.ndarray = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status == "optimal"

    def value(self, expr: Affine):
        return expr.value(self.primal)


class ConicProgram:
    """Incrementally built conic program.

    Not safe for concurrent mutation; build it in one thread, then solve.
    """

    def __init__(self):
        self.num_vars = 0
        self.variables = {}          # name -> (start, size)
        self._quad = []              # list of (rows, cols, vals) in x'Px/2 convention
        self._lin = Affine.constant([0.0])
        self._eq = []
        self._ineq = []
        self._soc = []

    # -- variables / objective ---------------------------------------------
    def add_variables(self, size, name=None) -> Affine:
        size = int(size)
        start = self.num_vars
        self.num_vars += size
        if name is None:
            name = f"_v{len(self.variables)}"
        if name in self.variables:
            raise ValueError(f"duplicate variable block {name!r}")
        self.variables[name] = (start, size)
        M = sp.csr_array((np.ones(size), (np.arange(size), start + np.arange(size))),
                         shape=(size, self.num_vars))
        return Affine(M)

    def variable(self, name) -> Affine:
        start, size = self.variables[name]
        M = sp.csr_array((np.ones(size), (np.arange(size), start + np.arange(size))),
                         shape=(size, start + size))
        return Affine(M)

    def add_linear_cost(self, expr: Affine):
        if expr.size != 1:
            raise ValueError("linear cost must be scalar")
        self._lin = self._lin + expr

    def add_quadratic_cost(self, expr: Affine, weight=1.0):
        """Add ``weight * ||expr||^2`` (weight >= 0) to the objective."""
        weight = float(weight)
        if weight < 0:
            raise ValueError("quadratic weight must be nonnegative")
        if weight == 0:
            return
        M = expr.M
        PM = (M.T @ M).tocoo()
        self._quad.append((PM.row, PM.col, 2.0 * weight * PM.data))
        self._lin = self._lin + Affine(sp.csr_array((2.0 * weight) * (expr.c @ M).reshape(1, -1)),
                                       [weight * float(expr.c @ expr.c)])

    # -- constraints -----------------------------------------------------------
    def add_eq(self, expr: Affine, rhs=0.0):
        self._eq.append(expr - rhs)
        return len(self._eq) - 1

    def add_leq(self, expr: Affine, rhs=0.0):
        """``expr <= rhs`` row-wise; returns the index range of the rows."""
        start = sum(e.size for e in self._ineq)
        self._ineq.append(expr - rhs)
        return range(start, start + expr.size)

    def add_soc(self, vec: Affine, bound: Affine):
        """``||vec||_2 <= bound``; returns the block index."""
        if bound.size != 1:
            raise ValueError("cone bound must be scalar")
        self._soc.append((bound, vec))
        return len(self._soc) - 1

    @property
    def num_eq(self):
        return sum(e.size for e in self._eq)

    @property
    def num_ineq(self):
        return sum(e.size for e in self._ineq)

    @property
    def num_soc(self):
        return len(self._soc)

    # -- standard form -----------------------------------------------------------
    def standard_form(self) -> StandardForm:
        n = self.num_vars
        if self._quad:
            r = np.concatenate([t[0] for t in self._quad])
            c = np.concatenate([t[1] for t in self._quad])
            v = np.concatenate([t[2] for t in self._quad])
            P = sp.csc_array((v, (r, c)), shape=(n, n))
        else:
            P = sp.csc_array((n, n))
        lin = Affine._pad(self._lin.M, n)
        q = lin.toarray().ravel()
        c0 = float(self._lin.c[0])

        def stack(exprs):
            if not exprs:
                return sp.csr_array((0, n)), np.zeros(0)
            M = sp.vstack([Affine._pad(e.M, n) for e in exprs], format="csr")
            return M, np.concatenate([e.c for e in exprs])

        A, ca = stack(self._eq)
        Gl, cl = stack(self._ineq)
        blocks = []
        dims = []
        for bound, vec in self._soc:
            blocks.append(Affine.stack([bound, vec]))
            dims.append(1 + vec.size)
        Gq, cq = stack(blocks)
        # expr <= 0  ->  G x + s = h with G = M, h = -c;  cone (t, v): s = (t, v) = -G x + h
        G = sp.vstack([Gl, -Gq], format="csr")
        h = np.concatenate([-cl, cq])
        return StandardForm(P=P, q=q, c0=c0, A=A, b=-ca, G=G, h=h, l=Gl.shape[0], soc=dims)

    # -- interchange ----------------------------------------------------------
    def to_json(self) -> str:
        sf = self.standard_form()

        def coo(M):
            M = sp.coo_array(M)
            return {"shape": list(M.shape), "row": M.row.tolist(), "col": M.col.tolist(),
                    "val": M.data.tolist()}

        return json.dumps({
            "format": JSON_FORMAT,
            "num_vars": self.num_vars,
            "variables": {k: list(v) for k, v in self.variables.items()},
            "objective": {"P": coo(sf.P), "q": sf.q.tolist(), "c0": sf.c0},
            "equalities": {"A": coo(sf.A), "b": sf.b.tolist()},
            "cones": {"l": sf.l, "q": sf.soc},
            "inequalities": {"G": coo(sf.G), "h": sf.h.tolist()},
        })

    @classmethod
    def from_json(cls, text) -> "ConicProgram":
        d = json.loads(text)
        if d.get("format") != JSON_FORMAT:
            raise ValueError(f"unsupported format {d.get('format')!r}")

        def mat(m):
            return sp.csr_array((m["val"], (m["row"], m["col"])), shape=tuple(m["shape"]))

        prog = cls()
        n = d["num_vars"]
        prog.num_vars = n
        prog.variables = {k: tuple(v) for k, v in d["variables"].items()}
        P = sp.coo_array(mat(d["objective"]["P"]))
        if P.nnz:
            prog._quad.append((P.row, P.col, P.data))
        prog._lin = Affine(sp.csr_array(np.asarray(d["objective"]["q"]).reshape(1, -1)),
                           [d["objective"]["c0"]])
        A = mat(d["equalities"]["A"])
        if A.shape[0]:
            prog._eq.append(Affine(A, -np.asarray(d["equalities"]["b"])))
        G = mat(d["inequalities"]["G"])
        h = np.asarray(d["inequalities"]["h"], dtype=float)
        l = d["cones"]["l"]
        if l:
            prog._ineq.append(Affine(G[:l], -h[:l]))
        off = l
        for dim in d["cones"]["q"]:
            blk = Affine(-G[off:off + dim], h[off:off + dim])
            prog._soc.append((blk[0], blk[1:]))
            off += dim
        return prog
