"""Solver backends behind one small interface.

* :class:`ReferenceBackend` - bundled simplex + branch-and-bound (exact, small models).
* :class:`HighsBackend` - HiGHS through :func:`scipy.optimize.milp`.
* :class:`CommandBackend` - any external program that reads MPS and writes ``.sol``.
"""

from __future__ import annotations

import logging
import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from ..milp import CompiledModel, MixedIntegerModel
from .bnb import MAX_REFERENCE_BINARIES, SolveOptions, reference_solve
from .mps import SolutionVector, emit_mps, parse_solution
from .simplex import solve_lp

logger = logging.getLogger(__name__)

SOLVER_CMD_ENV = "DECARB_SOLVER_CMD"


class BackendError(RuntimeError):
    pass


@dataclass
class LPRelaxation:
    status: str
    x: np.ndarray | None
    objective: float
    row_duals: np.ndarray | None  # d(objective) / d(row rhs)


def with_bounds(cm: CompiledModel, lb=None, ub=None, c=None) -> CompiledModel:
    return replace(
        cm,
        lb=cm.lb if lb is None else np.asarray(lb, float),
        ub=cm.ub if ub is None else np.asarray(ub, float),
        c=cm.c if c is None else np.asarray(c, float),
    )


def _compiled(model) -> CompiledModel:
    return model.compile() if isinstance(model, MixedIntegerModel) else model


class Backend:
    name = "abstract"

    def solve(self, model, options: SolveOptions | None = None) -> SolutionVector:
        raise NotImplementedError

    def solve_lp_relaxation(self, model) -> LPRelaxation:
        raise NotImplementedError


class ReferenceBackend(Backend):
    name = "reference"

    def __init__(self, max_binaries: int = MAX_REFERENCE_BINARIES):
        self.max_binaries = max_binaries

    def solve(self, model, options=None):
        return reference_solve(_compiled(model), options or SolveOptions(), max_binaries=self.max_binaries)

    def solve_lp_relaxation(self, model):
        cm = _compiled(model)
        res = solve_lp(cm.A.toarray(), cm.c, cm.row_lo, cm.row_hi, cm.lb, cm.ub)
        if res.status != "optimal":
            return LPRelaxation(res.status, None, math.nan, None)
        return LPRelaxation("optimal", res.x, res.objective + cm.c0, res.duals)


class HighsBackend(Backend):
    name = "highs"

    def solve(self, model, options=None):
        options = options or SolveOptions()
        cm = _compiled(model)
        opts = {"mip_rel_gap": options.relative_gap_tol, "presolve": True}
        if math.isfinite(options.time_limit):
            opts["time_limit"] = options.time_limit
        cons = LinearConstraint(cm.A, cm.row_lo, cm.row_hi) if cm.m else None
        res = milp(
            cm.c,
            integrality=cm.is_binary.astype(int),
            bounds=Bounds(cm.lb, cm.ub),
            constraints=cons,
            options=opts,
        )
        if res.status == 2:
            return SolutionVector("infeasible", var_names=cm.var_names)
        if res.status == 3:
            return SolutionVector("unbounded", var_names=cm.var_names)
        if res.x is None:
            if res.status == 1:
                return SolutionVector("limit", var_names=cm.var_names)
            raise BackendError(f"HiGHS failed: {res.message}")
        x = np.clip(res.x, cm.lb, cm.ub)
        x[cm.is_binary] = np.round(x[cm.is_binary])
        obj = cm.objective(x)
        bound = getattr(res, "mip_dual_bound", None)
        bound = obj if bound is None or not np.isfinite(bound) else float(bound) + cm.c0
        return SolutionVector("optimal" if res.status == 0 else "feasible", x, obj, min(bound, obj), cm.var_names)

    def solve_lp_relaxation(self, model):
        cm = _compiled(model)
        A = cm.A.tocsr()
        eq = np.flatnonzero(cm.row_lo == cm.row_hi)
        up = np.flatnonzero((cm.row_lo != cm.row_hi) & np.isfinite(cm.row_hi))
        dn = np.flatnonzero((cm.row_lo != cm.row_hi) & np.isfinite(cm.row_lo))
        A_ub = sp.vstack([A[up], -A[dn]]) if len(up) + len(dn) else None
        b_ub = np.concatenate([cm.row_hi[up], -cm.row_lo[dn]]) if A_ub is not None else None
        res = linprog(
            cm.c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A[eq] if len(eq) else None,
            b_eq=cm.row_lo[eq] if len(eq) else None,
            bounds=np.column_stack([cm.lb, cm.ub]),
            method="highs",
        )
        if res.status != 0:
            status = {2: "infeasible", 3: "unbounded"}.get(res.status, "limit")
            return LPRelaxation(status, None, math.nan, None)
        duals = np.zeros(cm.m)
        if len(eq):
            duals[eq] = res.eqlin.marginals
        if A_ub is not None:
            mu = res.ineqlin.marginals
            duals[up] += mu[: len(up)]
            duals[dn] -= mu[len(up):]
        return LPRelaxation("optimal", res.x, float(res.fun) + cm.c0, duals)


class CommandBackend(Backend):
    """Runs ``template`` with ``{mps}`` and ``{sol}`` substituted by file paths."""

    name = "command"

    def __init__(self, template: str | None = None):
        template = template or os.environ.get(SOLVER_CMD_ENV)
        if not template:
            raise BackendError(f"no solver command given and ${SOLVER_CMD_ENV} is unset")
        if "{mps}" not in template or "{sol}" not in template:
            raise BackendError("solver command must contain {mps} and {sol} placeholders")
        self.template = template

    def solve(self, model, options=None):
        if not isinstance(model, MixedIntegerModel):
            model = MixedIntegerModel.from_compiled(model)
        with tempfile.TemporaryDirectory(prefix="decarb-") as tmp:
            mps = Path(tmp) / "model.mps"
            sol = Path(tmp) / "model.sol"
            mps.write_bytes(emit_mps(model))
            cmd = self.template.format(mps=shlex.quote(str(mps)), sol=shlex.quote(str(sol)))
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
            if proc.returncode != 0:
                raise BackendError(f"solver command failed ({proc.returncode}): {proc.stderr.strip()}")
            if not sol.exists():
                raise BackendError("solver command produced no solution file")
            return parse_solution(sol.read_text(), model)

    def solve_lp_relaxation(self, model):
        # .sol files carry no duals, so relaxations stay in process
        return HighsBackend().solve_lp_relaxation(model)


def get_backend(name: str) -> Backend:
    name = name.lower()
    if name == "reference":
        return ReferenceBackend()
    if name == "highs":
        return HighsBackend()
    if name == "command":
        return CommandBackend()
    raise BackendError(f"unknown backend {name!r}")


def default_backend() -> Backend:
    return CommandBackend() if os.environ.get(SOLVER_CMD_ENV) else HighsBackend()
