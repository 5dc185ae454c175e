"""Dense bounded-variable revised simplex.

Every row ``lo <= a @ x <= hi`` is rewritten as ``a @ x - s = 0`` with a bounded
slack ``s``, so the working problem is ``min c @ z  s.t.  W z = 0,  l <= z <= u``.
A cold start runs a two-phase primal simplex on top of one artificial column per
row; a warm start from a previous basis runs the dual simplex, which is what
branch-and-bound needs after tightening a binary's bounds.

Pricing is Dantzig's rule until a run of degenerate pivots is detected, after
which Bland's smallest-index rule takes over to rule out cycling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AT_LOWER, AT_UPPER, FREE_ZERO, BASIC = 0, 1, 2, 3

_REFACTOR_EVERY = 64
_DEGENERATE_RUN = 30


@dataclass
class Basis:
    """Basis snapshot usable for a warm start (column indices include artificials)."""

    basic: np.ndarray
    status: np.ndarray


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded | limit
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0


class _Work:
    """Scaled working copy of one LP."""

    def __init__(self, A, c, row_lo, row_hi, lb, ub):
        A = np.asarray(A, dtype=float)
        m, n = A.shape
        self.m, self.n = m, n
        rscale = np.ones(m)
        if m:
            amax = np.abs(A).max(axis=1)
            rscale = np.where(amax > 0, 1.0 / np.where(amax > 0, amax, 1.0), 1.0)
        self.rscale = rscale
        c = np.asarray(c, dtype=float)
        self.cscale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
        As = A * rscale[:, None]
        # columns: structural | slacks | artificials
        self.W = np.hstack([As, -np.eye(m), np.eye(m)])
        self.cost = np.concatenate([c / self.cscale, np.zeros(2 * m)])
        self.lo = np.concatenate([np.asarray(lb, float), np.asarray(row_lo, float) * rscale, np.zeros(m)])
        self.hi = np.concatenate([np.asarray(ub, float), np.asarray(row_hi, float) * rscale, np.zeros(m)])
        self.N = n + 2 * m


def solve_lp(A, c, row_lo, row_hi, lb, ub, *, warm: Basis | None = None,
             max_iter: int = 50_000, tol: float = 1e-9) -> LPResult:
    """Minimize ``c @ x`` subject to row ranges and variable bounds.

    ``duals[i]`` is the derivative of the optimal objective with respect to the
    active side of row ``i``.
    """
    w = _Work(A, c, row_lo, row_hi, lb, ub)
    if np.any(w.lo > w.hi + tol):
        return LPResult("infeasible")
    if warm is not None:
        res = _dual_simplex(w, warm, max_iter, tol)
        if res is not None:
            return res
    return _two_phase(w, max_iter, tol)


# -- shared helpers -------------------------------------------------------------------
def _nonbasic_value(lo, hi, status):
    if status == AT_LOWER:
        return lo
    if status == AT_UPPER:
        return hi
    return 0.0


def _initial_status(lo, hi):
    if math.isfinite(lo):
        return AT_LOWER
    if math.isfinite(hi):
        return AT_UPPER
    return FREE_ZERO


def _basic_values(w, basic, x, Binv):
    nonbasic = np.ones(w.N, dtype=bool)
    nonbasic[basic] = False
    rhs = -(w.W[:, nonbasic] @ x[nonbasic])
    return Binv @ rhs


def _finish(w, x, basic, status, Binv, iters):
    y = w.cost[basic] @ Binv
    n = w.n
    xs = x[:n].copy()
    obj = float(w.cost[:n] @ xs) * w.cscale
    duals = y * w.rscale * w.cscale
    return LPResult("optimal", xs, obj, duals, Basis(basic.copy(), status.copy()), iters)


def _pivot_update(Binv, alpha, r):
    piv = alpha[r]
    Binv[r] /= piv
    col = alpha.copy()
    col[r] = 0.0
    Binv -= np.outer(col, Binv[r])


# -- primal simplex -------------------------------------------------------------------
def _two_phase(w: _Work, max_iter: int, tol: float) -> LPResult:
    m, n = w.m, w.n
    status = np.empty(w.N, dtype=int)
    x = np.zeros(w.N)
    for j in range(n + m):
        status[j] = _initial_status(w.lo[j], w.hi[j])
        x[j] = _nonbasic_value(w.lo[j], w.hi[j], status[j])
    resid = -(w.W[:, : n + m] @ x[: n + m])
    sign = np.where(resid >= 0, 1.0, -1.0)
    w.W[:, n + m:] = np.diag(sign)
    art = np.arange(n + m, w.N)
    x[art] = np.abs(resid)
    w.hi[art] = math.inf
    basic = art.copy()
    status[art] = BASIC
    Binv = np.diag(sign)  # inverse of diag(sign)

    phase1_cost = np.zeros(w.N)
    phase1_cost[art] = 1.0
    st, iters = _primal_loop(w, phase1_cost, x, basic, status, Binv, max_iter, tol)
    if st == "limit":
        return LPResult("limit", iterations=iters)
    infeas = float(np.sum(x[art]))
    bounds = np.concatenate([w.lo[: n + m], w.hi[: n + m]])
    scale = max(1.0, float(np.max(np.abs(bounds[np.isfinite(bounds)]), initial=1.0)))
    if infeas > 1e-9 * scale * max(1, m):
        return LPResult("infeasible", iterations=iters)
    # artificials are pinned at zero for phase two and for later warm starts
    w.hi[art] = 0.0
    x[art] = np.where(status[art] == BASIC, x[art], 0.0)
    for j in art:
        if status[j] != BASIC:
            status[j] = AT_LOWER
    st, it2 = _primal_loop(w, w.cost, x, basic, status, Binv, max_iter - iters, tol)
    iters += it2
    if st != "optimal":
        return LPResult(st, iterations=iters)
    return _finish(w, x, basic, status, Binv, iters)


def _primal_loop(w, cost, x, basic, status, Binv, max_iter, tol):
    """Run primal simplex in place; returns (status, iterations)."""
    degenerate = 0
    bland = False
    for it in range(max_iter):
        if it and it % _REFACTOR_EVERY == 0:
            Binv[:] = np.linalg.inv(w.W[:, basic])
            x[basic] = _basic_values(w, basic, x, Binv)
        y = cost[basic] @ Binv
        d = cost - y @ w.W
        movable = (status != BASIC) & (w.hi - w.lo > 0)
        dtol = tol * 10
        want_up = movable & (d < -dtol) & ((status == AT_LOWER) | (status == FREE_ZERO))
        want_dn = movable & (d > dtol) & ((status == AT_UPPER) | (status == FREE_ZERO))
        cand = np.flatnonzero(want_up | want_dn)
        if cand.size == 0:
            return "optimal", it
        q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
        direction = 1.0 if d[q] < 0 else -1.0
        alpha = Binv @ w.W[:, q]
        # basic i moves by -direction * alpha_i per unit step
        rate = -direction * alpha
        theta = w.hi[q] - w.lo[q]
        xb = x[basic]
        lob, hib = w.lo[basic], w.hi[basic]
        lim = np.full(len(basic), math.inf)
        dec = (rate < -1e-11) & np.isfinite(lob)
        inc = (rate > 1e-11) & np.isfinite(hib)
        lim[dec] = np.maximum(xb[dec] - lob[dec], 0.0) / -rate[dec]
        lim[inc] = np.maximum(hib[inc] - xb[inc], 0.0) / rate[inc]
        leave, leave_to = -1, None
        best = float(lim.min(initial=math.inf))
        if best < theta - 1e-12:
            theta = best
            ties = np.flatnonzero(lim <= best + 1e-12)
            if bland:
                leave = int(min(ties, key=lambda i: basic[i]))
            else:
                leave = int(ties[np.argmax(np.abs(alpha[ties]))])
            leave_to = AT_LOWER if rate[leave] < 0 else AT_UPPER
        if not math.isfinite(theta):
            return "unbounded", it
        x[q] += direction * theta
        x[basic] = xb + rate * theta
        if theta <= 1e-12:
            degenerate += 1
            if degenerate >= _DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
            bland = False
        if leave < 0:
            # entering variable hits its own opposite bound
            status[q] = AT_UPPER if direction > 0 else AT_LOWER
            x[q] = w.hi[q] if direction > 0 else w.lo[q]
            continue
        out = basic[leave]
        x[out] = w.lo[out] if leave_to == AT_LOWER else w.hi[out]
        status[out] = leave_to
        status[q] = BASIC
        basic[leave] = q
        _pivot_update(Binv, alpha, leave)
    return "limit", max_iter


# -- dual simplex ---------------------------------------------------------------------
def _dual_simplex(w: _Work, warm: Basis, max_iter: int, tol: float):
    """Dual simplex from a previous optimal basis; ``None`` asks for a cold start."""
    if len(warm.basic) != w.m or len(warm.status) != w.N:
        return None
    basic = warm.basic.copy()
    status = warm.status.copy()
    try:
        Binv = np.linalg.inv(w.W[:, basic]) if w.m else np.zeros((0, 0))
    except np.linalg.LinAlgError:
        return None
    # warm starts reuse the pinned artificials of the original cold start
    art = np.arange(w.n + w.m, w.N)
    w.hi[art] = 0.0
    y = w.cost[basic] @ Binv if w.m else np.zeros(0)
    d = w.cost - y @ w.W
    dtol = tol * 10
    x = np.zeros(w.N)
    for j in range(w.N):
        if status[j] == BASIC:
            continue
        lo, hi = w.lo[j], w.hi[j]
        if hi - lo <= 0:
            status[j] = AT_LOWER
        elif d[j] < -dtol:
            if not math.isfinite(hi):
                return None
            status[j] = AT_UPPER
        elif d[j] > dtol:
            if not math.isfinite(lo):
                return None
            status[j] = AT_LOWER
        elif not (status[j] == AT_LOWER and math.isfinite(lo)) and not (
            status[j] == AT_UPPER and math.isfinite(hi)
        ):
            status[j] = _initial_status(lo, hi)
        x[j] = _nonbasic_value(lo, hi, status[j])
    x[basic] = _basic_values(w, basic, x, Binv)

    stall = 0
    for it in range(max_iter):
        if it and it % _REFACTOR_EVERY == 0:
            Binv = np.linalg.inv(w.W[:, basic])
            x[basic] = _basic_values(w, basic, x, Binv)
        xb = x[basic]
        lob, hib = w.lo[basic], w.hi[basic]
        below = lob - xb
        above = xb - hib
        viol = np.maximum(below, above)
        if w.m == 0 or viol.max() <= 1e-9:
            return _finish(w, x, basic, status, Binv, it)
        bland = stall >= _DEGENERATE_RUN
        if bland:
            r = int(min(np.flatnonzero(viol > 1e-9), key=lambda i: basic[i]))
        else:
            r = int(np.argmax(viol))
        increase = below[r] > above[r]
        target = lob[r] if increase else hib[r]
        y = w.cost[basic] @ Binv
        d = w.cost - y @ w.W
        arow = Binv[r] @ w.W
        # d(x_r)/d(x_j) = -arow_j for nonbasic j
        best, q, best_a = math.inf, -1, 0.0
        for j in np.flatnonzero((status != BASIC) & (np.abs(arow) > 1e-9)):
            if w.hi[j] - w.lo[j] <= 0:
                continue
            a = arow[j]
            up_ok = status[j] in (AT_LOWER, FREE_ZERO)
            dn_ok = status[j] in (AT_UPPER, FREE_ZERO)
            moves_up = (a < 0) if increase else (a > 0)
            if (moves_up and not up_ok) or (not moves_up and not dn_ok):
                continue
            ratio = abs(d[j]) / abs(a)
            if ratio < best - 1e-12 or (
                abs(ratio - best) <= 1e-12 and (j < q if bland else abs(a) > abs(best_a))
            ):
                best, q, best_a = ratio, int(j), a
        if q < 0:
            return LPResult("infeasible", iterations=it)
        stall = stall + 1 if best <= 1e-12 else 0
        alpha = Binv @ w.W[:, q]
        step = (xb[r] - target) / arow[q]
        x[q] += step
        x[basic] = xb - step * alpha
        out = basic[r]
        x[out] = target
        status[out] = AT_LOWER if increase else AT_UPPER
        if w.hi[out] - w.lo[out] <= 0:
            status[out] = AT_LOWER
        status[q] = BASIC
        basic[r] = q
        _pivot_update(Binv, alpha, r)
    return None
