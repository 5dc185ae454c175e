"""Solver-agnostic sparse mixed-integer linear model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


class ModelError(ValueError):
    """Raised when a model is assembled inconsistently."""


class LinExpr:
    """A sparse affine expression ``sum(coef * x[idx]) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def of(cls, idx: int, coef: float = 1.0) -> "LinExpr":
        return cls({idx: coef})

    @classmethod
    def sum(cls, items: Iterable["LinExpr | float | int"]) -> "LinExpr":
        out = cls()
        for item in items:
            out.iadd(item)
        return out

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def add_term(self, idx: int, coef: float) -> "LinExpr":
        if coef:
            self.terms[idx] = self.terms.get(idx, 0.0) + coef
        return self

    def iadd(self, other: "LinExpr | float | int", scale: float = 1.0) -> "LinExpr":
        if isinstance(other, LinExpr):
            for idx, coef in other.terms.items():
                self.add_term(idx, scale * coef)
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        return self.copy().iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self).iadd(other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        scalar = float(scalar)
        return LinExpr({i: c * scalar for i, c in self.terms.items()}, self.const * scalar)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self) -> str:
        body = " + ".join(f"{c:g}*x{i}" for i, c in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.const:g})"


@dataclass
class Row:
    name: str
    coefs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class CompiledModel:
    """Array form of a model. Row ``i`` reads ``row_lo[i] <= A[i] @ x <= row_hi[i]``."""

    c: np.ndarray
    c0: float
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    var_names: list[str]
    row_names: list[str]

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.c0)

    def max_violation(self, x, *, scaled: bool = True) -> float:
        """Largest bound or row violation at ``x``; rows are scaled by their max |coef|."""
        x = np.asarray(x, dtype=float)
        worst = float(max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))
        if self.m:
            act = self.A @ x
            viol = np.maximum(self.row_lo - act, act - self.row_hi)
            if scaled:
                norms = np.asarray(abs(self.A).max(axis=1).todense()).ravel()
                viol = viol / np.maximum(norms, 1.0)
            worst = max(worst, float(np.max(viol, initial=0.0)))
        return worst


@dataclass
class MixedIntegerModel:
    """Minimization model over continuous and binary variables.

    Variables and rows are appended in build order, so two builds from the same
    inputs produce identical orderings.
    """

    name: str = "model"
    var_names: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    binary: list[bool] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    _var_index: dict[str, int] = field(default_factory=dict, repr=False)
    _row_index: dict[str, int] = field(default_factory=dict, repr=False)
    _compiled: CompiledModel | None = field(default=None, repr=False)

    # -- building -----------------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, binary: bool = False) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self._var_index[name] = idx
        self._compiled = None
        return idx

    def add_constr(self, name: str, expr: LinExpr, sense: str, rhs: float = 0.0) -> int:
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        if name in self._row_index:
            raise ModelError(f"duplicate constraint name {name!r}")
        nvars = len(self.var_names)
        coefs = {}
        for idx, coef in expr.terms.items():
            if not 0 <= idx < nvars:
                raise ModelError(f"constraint {name!r} references undeclared variable {idx}")
            if coef:
                coefs[idx] = float(coef)
        self._row_index[name] = len(self.rows)
        self.rows.append(Row(name, coefs, sense, float(rhs) - expr.const))
        self._compiled = None
        return len(self.rows) - 1

    def set_objective(self, expr: LinExpr) -> None:
        self.objective = expr.copy()
        self._compiled = None

    # -- lookup -------------------------------------------------------------------
    def var(self, name: str) -> int:
        return self._var_index[name]

    def row(self, name: str) -> int:
        return self._row_index[name]

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_binaries(self) -> int:
        return sum(self.binary)

    def row_activity(self, row: int, x) -> float:
        return sum(c * x[i] for i, c in self.rows[row].coefs.items())

    # -- conversion ---------------------------------------------------------------
    def compile(self) -> CompiledModel:
        if self._compiled is not None:
            return self._compiled
        n = self.num_vars
        c = np.zeros(n)
        for idx, coef in self.objective.terms.items():
            c[idx] += coef
        indptr, indices, data = [0], [], []
        lo, hi = [], []
        for row in self.rows:
            for idx in sorted(row.coefs):
                indices.append(idx)
                data.append(row.coefs[idx])
            indptr.append(len(indices))
            lo.append(row.rhs if row.sense in (GE, EQ) else -INF)
            hi.append(row.rhs if row.sense in (LE, EQ) else INF)
        A = sp.csr_matrix((data, indices, indptr), shape=(len(self.rows), n))
        self._compiled = CompiledModel(
            c=c,
            c0=self.objective.const,
            A=A,
            row_lo=np.array(lo, dtype=float),
            row_hi=np.array(hi, dtype=float),
            lb=np.array(self.lb, dtype=float),
            ub=np.array(self.ub, dtype=float),
            is_binary=np.array(self.binary, dtype=bool),
            var_names=list(self.var_names),
            row_names=[r.name for r in self.rows],
        )
        return self._compiled

    @classmethod
    def from_compiled(cls, cm: CompiledModel, name: str = "model") -> "MixedIntegerModel":
        out = cls(name)
        for j, vname in enumerate(cm.var_names):
            out.add_var(vname, cm.lb[j], cm.ub[j], bool(cm.is_binary[j]))
        A = cm.A.tocsr()
        for i, rname in enumerate(cm.row_names):
            start, stop = A.indptr[i], A.indptr[i + 1]
            expr = LinExpr(dict(zip(A.indices[start:stop].tolist(), A.data[start:stop].tolist())))
            lo, hi = cm.row_lo[i], cm.row_hi[i]
            if lo == hi:
                out.add_constr(rname, expr, EQ, lo)
                continue
            if math.isfinite(lo) and math.isfinite(hi):
                out.add_constr(rname + "#lo", expr, GE, lo)
                out.add_constr(rname + "#hi", expr, LE, hi)
            elif math.isfinite(hi):
                out.add_constr(rname, expr, LE, hi)
            elif math.isfinite(lo):
                out.add_constr(rname, expr, GE, lo)
        out.set_objective(LinExpr({j: v for j, v in enumerate(cm.c) if v}, cm.c0))
        return out

    def copy(self, name: str | None = None) -> "MixedIntegerModel":
        out = MixedIntegerModel(name or self.name)
        out.var_names = list(self.var_names)
        out.lb = list(self.lb)
        out.ub = list(self.ub)
        out.binary = list(self.binary)
        out.rows = [Row(r.name, dict(r.coefs), r.sense, r.rhs) for r in self.rows]
        out.objective = self.objective.copy()
        out._var_index = dict(self._var_index)
        out._row_index = dict(self._row_index)
        return out

    def without_rows(self, rows: Iterable[int], name: str | None = None) -> "MixedIntegerModel":
        drop = set(rows)
        out = self.copy(name)
        out.rows = [r for i, r in enumerate(out.rows) if i not in drop]
        out._row_index = {r.name: i for i, r in enumerate(out.rows)}
        return out

    def values(self, x) -> dict[str, float]:
        return {name: float(x[i]) for i, name in enumerate(self.var_names)}
