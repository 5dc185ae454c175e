"""Exact depth-first branch-and-bound over binaries, used as the test oracle."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from ..milp import CompiledModel, MixedIntegerModel
from .mps import SolutionVector
from .simplex import solve_lp

logger = logging.getLogger(__name__)

MAX_REFERENCE_BINARIES = 40
_INT_TOL = 1e-6


class ScaleGuardError(RuntimeError):
    """The model has too many free binaries for the bundled solver."""


@dataclass(frozen=True)
class SolveOptions:
    relative_gap_tol: float = 1e-4
    time_limit: float = math.inf
    threads: int = 1
    feasibility_tol: float = 1e-6

    def __post_init__(self):
        if self.relative_gap_tol <= 0 or self.feasibility_tol <= 0 or self.time_limit <= 0:
            raise ValueError("solve tolerances and time limit must be positive")


@dataclass
class _Node:
    lb: np.ndarray
    ub: np.ndarray
    bound: float
    basis: object
    depth: int


def _compiled(model) -> CompiledModel:
    return model.compile() if isinstance(model, MixedIntegerModel) else model


def reference_solve(model, options: SolveOptions = SolveOptions(), *,
                    max_binaries: int = MAX_REFERENCE_BINARIES) -> SolutionVector:
    """Solve ``model`` to proven optimality (within ``relative_gap_tol``).

    Only binaries whose bounds are not already fixed count toward the scale guard.
    Branching picks the most fractional binary, ties broken by variable name, and
    explores the child nearer to the LP value first.
    """
    cm = _compiled(model)
    free_bin = np.flatnonzero(cm.is_binary & (cm.ub > cm.lb))
    if len(free_bin) > max_binaries:
        raise ScaleGuardError(
            f"{len(free_bin)} free binaries exceed the reference solver limit of "
            f"{max_binaries}; export the model with emit_mps and use an external solver"
        )
    A = cm.A.toarray()
    names = cm.var_names
    started = time.monotonic()

    def lp(lb, ub, warm=None):
        return solve_lp(A, cm.c, cm.row_lo, cm.row_hi, lb, ub, warm=warm)

    lb0 = cm.lb.copy()
    ub0 = cm.ub.copy()
    bin_idx = np.flatnonzero(cm.is_binary)
    lb0[bin_idx] = np.ceil(lb0[bin_idx] - _INT_TOL)
    ub0[bin_idx] = np.floor(ub0[bin_idx] + _INT_TOL)
    root = lp(lb0, ub0)
    if root.status == "unbounded":
        return SolutionVector("unbounded", var_names=names)
    if root.status != "optimal":
        return SolutionVector("infeasible" if root.status == "infeasible" else "limit", var_names=names)

    best_x, best_obj = None, math.inf
    gap_pruned = math.inf  # smallest bound among nodes discarded only by the gap test
    stack = [(_Node(lb0, ub0, -math.inf, None, 0), root)]
    nodes = 0
    timed_out = False
    while stack:
        node, res = stack.pop()
        if res is None:
            res = lp(node.lb, node.ub, node.basis)
        nodes += 1
        if res.status != "optimal":
            continue
        bound = max(node.bound, res.objective + cm.c0)
        if best_x is not None:
            if bound >= best_obj - 1e-9 * max(1.0, abs(best_obj)):
                continue
            if bound >= best_obj - options.relative_gap_tol * max(1.0, abs(best_obj)):
                gap_pruned = min(gap_pruned, bound)
                continue
        x = res.x
        frac = np.abs(x[bin_idx] - np.round(x[bin_idx]))
        open_ = bin_idx[frac > _INT_TOL]
        if open_.size == 0:
            cand = _polish(lp, node, res, bin_idx, cm)
            if cand is not None and cand[1] < best_obj:
                best_x, best_obj = cand
            continue
        if time.monotonic() - started > options.time_limit:
            timed_out = True
            gap_pruned = min(gap_pruned, bound, *(n.bound for n, _ in stack))
            break
        dist = np.minimum(x[open_], 1 - x[open_])
        top = dist.max()
        tied = [j for j in open_[dist >= top - 1e-12]]
        j = min(tied, key=lambda k: names[k])
        near = 1.0 if x[j] >= 0.5 else 0.0
        for val in (1.0 - near, near):  # near child popped first
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[j] = ub[j] = val
            stack.append((_Node(lb, ub, bound, res.basis, node.depth + 1), None))

    logger.debug("branch-and-bound explored %d nodes", nodes)
    if best_x is None:
        return SolutionVector("limit" if timed_out else "infeasible", var_names=names)
    bound = min(best_obj, gap_pruned)
    status = "feasible" if timed_out else "optimal"
    return SolutionVector(status, best_x, best_obj, bound, names)


def _polish(lp, node, node_res, bin_idx, cm):
    """Re-solve with binaries pinned to their rounded values for clean continuous values."""
    x = node_res.x
    lb, ub = node.lb.copy(), node.ub.copy()
    vals = np.round(x[bin_idx])
    lb[bin_idx] = ub[bin_idx] = vals
    res = lp(lb, ub, node_res.basis)
    if res.status != "optimal":
        xr = x.copy()
        xr[bin_idx] = vals
        return xr, cm.objective(xr)
    xr = np.clip(res.x, cm.lb, cm.ub)
    xr[bin_idx] = vals
    return xr, res.objective + cm.c0
