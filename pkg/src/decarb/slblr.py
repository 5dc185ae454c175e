"""Surrogate level-based Lagrangian relaxation of the zonal balance rows.

The loop works on a :class:`DecomposableProblem`: a monolithic model, the
indices of its coupling rows, and the variables owned by each thermal unit.
Each iteration re-optimizes one group of units (everything else held at the
incumbent, non-thermal power variables kept within a trust region), then moves
the multipliers along the coupling residuals with a Polyak step measured
against a level value that is lowered whenever the multipliers stop settling.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .milp import CompiledModel, MixedIntegerModel
from .solver.backend import Backend, default_backend, with_bounds
from .solver.bnb import SolveOptions

logger = logging.getLogger(__name__)


class SlblrError(RuntimeError):
    pass


class LevelBreach(SlblrError):
    """The surrogate value reached the level value."""


class FeasiblePoint(SlblrError):
    """The coupling residual vanished, so no multiplier step exists."""


class TerminalConvergence(SlblrError):
    """The level value has closed onto the best surrogate value."""


class RecoveryInfeasible(SlblrError):
    """No feasible solution exists even with every binary free."""


@dataclass(frozen=True)
class SlblrConfig:
    zeta: float = 0.5
    gamma: float | None = None  # None: reciprocal of the number of unit groups
    l1_penalty_c: float = 0.0
    l1_penalty_growth: float = 1.2
    l1_penalty_cap: float = 100.0
    trust_region_delta: float | None = None  # None: 10% of the largest capacity
    delta_decay: float = 0.5
    group_size: int = 1
    max_iterations: int = 100
    multiplier_convergence_tol: float = 1e-4
    gap_halving_factor: float = 0.5
    travel_threshold: float | None = None  # None: travel_multiple times the first step length
    travel_multiple: float = 10.0
    improvement_fraction: float = 0.1
    stall_patience: int = 2
    primal_recovery_free_fraction: float = 0.25
    recovery_every: int = 10  # 0: recover only after the loop
    target_gap: float = 0.0  # stop once a recovered plan is this close to the best surrogate value
    stability_window: int = 5
    subproblem_gap_tol: float = 1e-6
    certify_lower_bound: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.zeta <= 1:
            raise ValueError("zeta must lie in (0, 1]")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.l1_penalty_c < 0 or self.l1_penalty_growth < 1 or self.l1_penalty_cap < 0:
            raise ValueError("penalty must be >= 0 with growth >= 1")
        if self.trust_region_delta is not None and self.trust_region_delta <= 0:
            raise ValueError("trust region delta must be positive")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 0 < self.gap_halving_factor < 1:
            raise ValueError("gap_halving_factor must lie in (0, 1)")
        if self.target_gap < 0:
            raise ValueError("target_gap must be >= 0")
        if self.recovery_every < 0:
            raise ValueError("recovery_every must be >= 0")
        if not 0 <= self.primal_recovery_free_fraction <= 1:
            raise ValueError("primal_recovery_free_fraction must lie in [0, 1]")
        if self.stability_window < 1:
            raise ValueError("stability_window must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "SlblrConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SLBLR options: {sorted(unknown)}")
        return cls(**{**d, **{k: v for k, v in overrides.items() if v is not None}})


# --------------------------------------------------------------------------- problem
@dataclass
class DecomposableProblem:
    model: MixedIntegerModel
    coupling_rows: list[int]
    unit_vars: dict[str, list[int]]
    power_vars: list[int]
    largest_capacity: float = 1.0
    # bounds that turn the model into a quick feasible instance (all units committed,
    # no investment changes); used for the initial level value
    heuristic_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    # investment binaries pinned at zero when seeding the incumbent
    hold_fixed: list[int] = field(default_factory=list)

    @classmethod
    def from_planning(cls, pm) -> "DecomposableProblem":
        scn_caps = [1.0]
        cm = pm.model.compile()
        for i in pm.power_vars:
            if math.isfinite(cm.ub[i]):
                scn_caps.append(cm.ub[i])
        for blk in pm.blocks.values():
            for tv in blk.thermal.values():
                scn_caps.append(float(cm.ub[tv.p[0]]))
        inv = pm.investment
        for table in (inv.renewable_build, inv.storage_power_build):
            scn_caps.extend(float(cm.ub[i]) for i in table.values())
        hold = sorted(list(inv.unit_build.values()) + list(inv.unit_retire.values()))
        heur = {i: (0.0, 0.0) for i in hold}
        for (y, _w), blk in pm.blocks.items():
            for uid, tv in blk.thermal.items():
                status = cm.row_lo[pm.model.row(f"IUacc[{uid},{y}]")]
                if status >= 0.5:
                    for i in tv.v:
                        heur[i] = (1.0, 1.0)
        return cls(
            model=pm.model,
            coupling_rows=list(pm.balance_rows),
            unit_vars={k: list(v) for k, v in pm.unit_vars.items()},
            power_vars=list(pm.power_vars),
            largest_capacity=max(c for c in scn_caps if math.isfinite(c)),
            heuristic_bounds=heur,
            hold_fixed=hold,
        )

    @property
    def units(self) -> list[str]:
        return sorted(self.unit_vars)


class RelaxedProblem:
    """Array form of the relaxed model.

    Coupling row ``i`` becomes ``a_i x - rp_i + rn_i = b_i`` so ``R_i = rp_i - rn_i``,
    and the objective gains ``lam_i * (rp_i - rn_i) + c * (rp_i + rn_i)``.
    Split variables sit after the original ones: ``rp`` at ``n + i``, ``rn`` at ``n + m + i``.
    """

    def __init__(self, problem: DecomposableProblem):
        cm = problem.model.compile()
        self.mono = cm
        self.coupling = np.asarray(problem.coupling_rows, dtype=int)
        keep = np.setdiff1d(np.arange(cm.m), self.coupling)
        self.n, self.m = cm.n, len(self.coupling)
        A = cm.A.tocsr()
        self.A_c = A[self.coupling]
        self.rhs = cm.row_lo[self.coupling]
        if np.any(cm.row_lo[self.coupling] != cm.row_hi[self.coupling]):
            raise SlblrError("coupling rows must be equalities")
        eye = sp.identity(self.m, format="csr")
        top = sp.hstack([A[keep], sp.csr_matrix((len(keep), 2 * self.m))])
        bottom = sp.hstack([self.A_c, -eye, eye])
        self.base = CompiledModel(
            c=np.concatenate([cm.c, np.zeros(2 * self.m)]),
            c0=cm.c0,
            A=sp.vstack([top, bottom]).tocsr(),
            row_lo=np.concatenate([cm.row_lo[keep], self.rhs]),
            row_hi=np.concatenate([cm.row_hi[keep], self.rhs]),
            lb=np.concatenate([cm.lb, np.zeros(2 * self.m)]),
            ub=np.concatenate([cm.ub, np.full(2 * self.m, np.inf)]),
            is_binary=np.concatenate([cm.is_binary, np.zeros(2 * self.m, dtype=bool)]),
            var_names=list(cm.var_names)
            + [f"rpos[{cm.row_names[i]}]" for i in self.coupling]
            + [f"rneg[{cm.row_names[i]}]" for i in self.coupling],
            row_names=[cm.row_names[i] for i in keep] + [f"relaxed[{cm.row_names[i]}]" for i in self.coupling],
        )

    def costs(self, lam: np.ndarray, c: float) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.m,):
            raise SlblrError(f"expected {self.m} multipliers, got shape {lam.shape}")
        return np.concatenate([self.mono.c, lam + c, -lam + c])

    def compiled(self, lam, c, lb=None, ub=None) -> CompiledModel:
        return with_bounds(self.base, lb, ub, self.costs(lam, c))

    def residual(self, x) -> np.ndarray:
        return self.A_c @ np.asarray(x[: self.n], dtype=float) - self.rhs

    def value(self, x, lam, c) -> float:
        """Relaxed objective of a point given by its original variables."""
        r = self.residual(x)
        return self.mono.objective(x[: self.n]) + float(np.dot(lam, r)) + c * float(np.abs(r).sum())

    def lift(self, x) -> np.ndarray:
        r = self.residual(x)
        return np.concatenate([np.asarray(x[: self.n], dtype=float), np.maximum(r, 0), np.maximum(-r, 0)])


def build_relaxed_model(model: MixedIntegerModel, coupling_rows: Sequence[int], lam, c: float) -> MixedIntegerModel:
    """Model with the coupling rows moved into the objective as ``lam . R + c |R|_1``."""
    prob = DecomposableProblem(model, list(coupling_rows), {}, [])
    return MixedIntegerModel.from_compiled(RelaxedProblem(prob).compiled(lam, c), name=f"{model.name}_relaxed")


# --------------------------------------------------------------------------- pieces
def partition_units(units: Sequence[str], group_size: int, seed: int, cycle: int) -> list[list[str]]:
    if not units:
        raise SlblrError("no thermal units to decompose over")
    if group_size > len(units):
        raise SlblrError("group size exceeds the number of units")
    order = sorted(units)
    rng = np.random.default_rng([seed, cycle])
    perm = rng.permutation(len(order))
    shuffled = [order[i] for i in perm]
    return [sorted(shuffled[i : i + group_size]) for i in range(0, len(shuffled), group_size)]


def select_subproblem_group(k: int, units: Sequence[str], config: SlblrConfig) -> list[str]:
    """Group for iteration ``k``; every unit appears once per cycle of groups."""
    n_groups = math.ceil(len(units) / config.group_size) if units else 0
    groups = partition_units(units, config.group_size, config.seed, k // max(n_groups, 1))
    return groups[k % n_groups]


def compute_stepsize(q_bar: float, L: float, R, zeta: float, gamma: float) -> float:
    norm2 = float(np.dot(R, R))
    if norm2 <= 0:
        raise FeasiblePoint("coupling residual is zero")
    if q_bar <= L:
        raise LevelBreach(f"level {q_bar} <= surrogate value {L}")
    return zeta * gamma * (q_bar - L) / norm2


def update_multipliers(lam, R, s: float) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    R = np.asarray(R, dtype=float)
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(R)) and math.isfinite(s)):
        raise SlblrError("non-finite multiplier update")
    if s <= 0:
        raise SlblrError("stepsize must be positive")
    return lam + s * R


def level_reset(q_bar: float, L_best: float, factor: float, tol: float = 1e-9) -> float:
    """Move the level a fraction of the way down to the best surrogate value."""
    if q_bar <= L_best + tol * max(1.0, abs(L_best)):
        raise TerminalConvergence("level value has reached the best surrogate value")
    return L_best + factor * (q_bar - L_best)


@dataclass
class IterationRecord:
    k: int
    L: float
    q_bar: float
    stepsize: float
    r_norm1: float
    r_norm2_sq: float
    reset_flag: str
    group_ids: tuple[str, ...]


@dataclass
class SurrogateDualReport:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]


@dataclass
class IterationState:
    lam: np.ndarray
    q_bar: float
    L_best: float
    incumbent: np.ndarray
    L_incumbent: float
    k: int = 0
    c: float = 0.0
    delta: float = 1.0
    travel: float = 0.0
    travel_threshold: float | None = None
    L_at_reset: float = -math.inf
    stalls: int = 0
    history: list[np.ndarray] = field(default_factory=list)
    flip_iter: np.ndarray | None = None
    level_history: list[float] = field(default_factory=list)


@dataclass
class SubproblemResult:
    accepted: bool
    x: np.ndarray
    L: float
    group: list[str]
    merges: int
    status: str


def solve_subproblem(
    relaxed: RelaxedProblem,
    problem: DecomposableProblem,
    group: Sequence[str],
    incumbent: np.ndarray,
    lam: np.ndarray,
    c: float,
    delta: float,
    backend: Backend,
    options: SolveOptions,
    merge_groups: Sequence[Sequence[str]] = (),
) -> SubproblemResult:
    """Optimize one unit group with everything else held near the incumbent.

    Accepts the candidate only if it strictly lowers the relaxed objective;
    otherwise merges in the next group and tries again. When no merge helps the
    result carries ``accepted=False`` (the stall signal).
    """
    base = relaxed.base
    L_inc = relaxed.value(incumbent, lam, c)
    tol = 1e-9 * max(1.0, abs(L_inc))
    pv = np.asarray(problem.power_vars, dtype=int)
    members = list(group)
    last_status = "none"
    for merges in range(len(merge_groups) + 1):
        if merges:
            members = sorted(set(members) | set(merge_groups[merges - 1]))
        lb, ub = base.lb.copy(), base.ub.copy()
        free = set(members)
        for uid, idx in problem.unit_vars.items():
            if uid not in free:
                lb[idx] = ub[idx] = incumbent[idx]
        if pv.size:
            lb[pv] = np.maximum(base.lb[pv], incumbent[pv] - delta)
            ub[pv] = np.minimum(base.ub[pv], incumbent[pv] + delta)
        sol = backend.solve(relaxed.compiled(lam, c, lb, ub), options)
        last_status = sol.status
        if not sol.has_solution:
            continue
        x = sol.x[: relaxed.n]
        L = relaxed.value(x, lam, c)
        if L < L_inc - tol:
            return SubproblemResult(True, x, L, members, merges, sol.status)
    return SubproblemResult(False, incumbent, L_inc, members, len(merge_groups), last_status)


# --------------------------------------------------------------------------- recovery
@dataclass
class RecoveryResult:
    status: str
    x: np.ndarray | None
    objective: float
    freed: int
    attempts: int


def recover_primal(
    problem: DecomposableProblem,
    history: Sequence[np.ndarray],
    flip_iter: np.ndarray | None,
    backend: Backend,
    free_fraction: float,
    options: SolveOptions = SolveOptions(),
) -> RecoveryResult:
    """Fix binaries that stayed put over ``history`` and solve the restricted monolithic model.

    Unstable binaries stay free up to ``free_fraction`` of all binaries, the most
    recently flipped first. If the restricted model is infeasible the number of
    free binaries doubles until everything is free.
    """
    cm = problem.model.compile()
    bins = np.flatnonzero(cm.is_binary & (cm.ub > cm.lb))
    last = history[-1]
    window = np.array([h[bins] for h in history])
    unstable = bins[np.any(np.abs(window - window[-1]) > 0.5, axis=0)]
    recency = np.zeros(cm.n) if flip_iter is None else flip_iter
    # most recently flipped first; ties by variable name
    ranked_unstable = sorted(unstable, key=lambda j: (-recency[j], cm.var_names[j]))
    ranked_rest = sorted(set(bins) - set(unstable), key=lambda j: (-recency[j], cm.var_names[j]))
    ranked = ranked_unstable + ranked_rest
    n_free = min(len(ranked_unstable), int(math.floor(free_fraction * len(bins))))
    attempts = 0
    while True:
        attempts += 1
        free = set(ranked[:n_free])
        lb, ub = cm.lb.copy(), cm.ub.copy()
        for j in bins:
            if j not in free:
                lb[j] = ub[j] = round(last[j])
        sol = backend.solve(with_bounds(cm, lb, ub), options)
        if sol.has_solution:
            return RecoveryResult(sol.status, sol.x, sol.objective, n_free, attempts)
        if n_free >= len(ranked):
            return RecoveryResult("infeasible", None, math.nan, n_free, attempts)
        n_free = min(len(ranked), max(1, 2 * n_free))
        logger.info("restricted problem infeasible; freeing %d binaries", n_free)


def _keep_best(best: RecoveryResult | None, new: RecoveryResult) -> RecoveryResult:
    if best is None or best.x is None:
        return new
    if new.x is not None and new.objective < best.objective:
        return new
    return best


# --------------------------------------------------------------------------- driver
@dataclass
class SlblrResult:
    status: str
    x: np.ndarray | None
    objective: float
    lower_bound: float
    certified: bool
    gap: float
    multipliers: np.ndarray
    report: SurrogateDualReport
    iterations: int
    wall_time: float
    recovery: RecoveryResult | None = None
    stop_reason: str = ""


def _initial_level(problem: DecomposableProblem, backend: Backend, options: SolveOptions) -> float:
    """Cost of a quick feasible point: all operational units committed, no investment changes."""
    cm = problem.model.compile()
    for bounds in (problem.heuristic_bounds, {i: (0.0, 0.0) for i in problem.hold_fixed}):
        lb, ub = cm.lb.copy(), cm.ub.copy()
        for i, (lo, hi) in bounds.items():
            lb[i], ub[i] = lo, hi
        sol = backend.solve(with_bounds(cm, lb, ub), options)
        if sol.has_solution:
            return sol.objective
    return math.inf


def _initial_incumbent(relaxed, problem, lam, c, backend, options) -> np.ndarray:
    cm = relaxed.base
    for bounds in (problem.heuristic_bounds, {i: (0.0, 0.0) for i in problem.hold_fixed}, {}):
        lb, ub = cm.lb.copy(), cm.ub.copy()
        for i, (lo, hi) in bounds.items():
            lb[i], ub[i] = lo, hi
        sol = backend.solve(relaxed.compiled(lam, c, lb, ub), options)
        if sol.has_solution:
            return sol.x[: relaxed.n]
    raise RecoveryInfeasible("relaxed model has no feasible point")


def run(
    problem: DecomposableProblem,
    config: SlblrConfig = SlblrConfig(),
    backend: Backend | None = None,
    *,
    initial_multipliers=None,
    initial_level: float | None = None,
    recover: bool = True,
) -> SlblrResult:
    """Coordinate unit-group subproblems until the multipliers settle, then recover a primal point."""
    started = time.monotonic()
    backend = backend or default_backend()
    sub_opts = SolveOptions(relative_gap_tol=config.subproblem_gap_tol)
    relaxed = RelaxedProblem(problem)
    units = problem.units
    n_groups = math.ceil(len(units) / config.group_size)
    gamma = config.gamma if config.gamma is not None else 1.0 / n_groups

    if initial_multipliers is None:
        lp = backend.solve_lp_relaxation(problem.model)
        if lp.status != "optimal":
            if lp.status == "infeasible":
                raise RecoveryInfeasible("LP relaxation of the monolithic model is infeasible")
            lam = np.zeros(relaxed.m)
        else:
            lam = -lp.row_duals[relaxed.coupling]
    else:
        lam = np.asarray(initial_multipliers, dtype=float).copy()
    c = config.l1_penalty_c
    x0 = _initial_incumbent(relaxed, problem, lam, c, backend, sub_opts)
    L0 = relaxed.value(x0, lam, c)
    q_bar = initial_level if initial_level is not None else _initial_level(problem, backend, sub_opts)
    if not math.isfinite(q_bar) or q_bar <= L0:
        q_bar = L0 + max(1.0, 0.01 * abs(L0))
    delta = config.trust_region_delta or 0.1 * problem.largest_capacity
    st = IterationState(
        lam=lam, q_bar=q_bar, L_best=L0, incumbent=x0, L_incumbent=L0, c=c, delta=delta,
        travel_threshold=config.travel_threshold, L_at_reset=L0,
        history=[x0.copy()], flip_iter=np.zeros(relaxed.n), level_history=[q_bar],
    )
    report = SurrogateDualReport()
    stop = "max_iterations"
    best: RecoveryResult | None = None
    binaries = relaxed.mono.is_binary

    for k in range(config.max_iterations):
        st.k = k
        cycle_groups = partition_units(units, config.group_size, config.seed, k // n_groups)
        pos = k % n_groups
        group = cycle_groups[pos]
        merge = [cycle_groups[(pos + j) % n_groups] for j in range(1, n_groups)]
        sub = solve_subproblem(relaxed, problem, group, st.incumbent, st.lam, st.c, st.delta, backend, sub_opts, merge)
        flag = ""
        if sub.accepted:
            flips = np.flatnonzero(binaries & (np.abs(sub.x - st.incumbent) > 0.5))
            st.flip_iter[flips] = k + 1
            st.incumbent = sub.x
            st.history.append(sub.x.copy())
            st.history = st.history[-config.stability_window:]
        else:
            st.stalls += 1
            flag = "stall"
        L = sub.L
        st.L_incumbent = L
        improved = L > st.L_best + config.improvement_fraction * max(st.q_bar - st.L_best, 0.0)
        st.L_best = max(st.L_best, L)
        if improved:
            st.travel = 0.0
            st.stalls = 0
        R = relaxed.residual(st.incumbent)
        r1, r2 = float(np.abs(R).sum()), float(np.dot(R, R))
        step = 0.0
        if r2 == 0.0:
            # balanced incumbent: nothing to price, go straight to recovery
            report.records.append(IterationRecord(k, L, st.q_bar, 0.0, r1, r2, (flag + " feasible").strip(), tuple(sub.group)))
            stop = "feasible"
            break
        try:
            if st.stalls > config.stall_patience:
                st.stalls = 0
                raise LevelBreach("repeated stalls without improvement")
            step = compute_stepsize(st.q_bar, L, R, config.zeta, gamma)
        except LevelBreach:
            try:
                st.q_bar = level_reset(st.q_bar, st.L_best, config.gap_halving_factor)
            except TerminalConvergence:
                report.records.append(IterationRecord(k, L, st.q_bar, 0.0, r1, r2, "converged", tuple(sub.group)))
                stop = "converged"
                break
            st.delta *= config.delta_decay
            st.travel = 0.0
            flag = (flag + " reset").strip()
            if st.q_bar > L:
                step = compute_stepsize(st.q_bar, L, R, config.zeta, gamma)
        if step > 0:
            old = st.lam
            st.lam = update_multipliers(st.lam, R, step)
            moved = float(np.linalg.norm(st.lam - old))
            if st.travel_threshold is None:
                st.travel_threshold = config.travel_multiple * moved
            st.travel += moved
            if st.travel > st.travel_threshold:
                try:
                    st.q_bar = level_reset(st.q_bar, st.L_best, config.gap_halving_factor)
                    st.delta *= config.delta_decay
                    flag = (flag + " reset").strip()
                except TerminalConvergence:
                    stop = "converged"
                st.travel = 0.0
            rel_move = moved / max(1.0, float(np.linalg.norm(st.lam)))
        else:
            rel_move = math.inf
        st.level_history.append(st.q_bar)
        report.records.append(IterationRecord(k, L, st.q_bar, step, r1, r2, flag, tuple(sub.group)))
        if recover and config.recovery_every and (k + 1) % config.recovery_every == 0:
            best = _keep_best(best, recover_primal(
                problem, st.history, st.flip_iter, backend, config.primal_recovery_free_fraction, sub_opts))
            if (config.target_gap > 0 and best.x is not None
                    and best.objective - st.L_best <= config.target_gap * abs(best.objective)):
                stop = "gap"
                break
        if (k + 1) % n_groups == 0:
            st.c = min(st.c * config.l1_penalty_growth, config.l1_penalty_cap)
        if stop == "converged":
            break
        if rel_move < config.multiplier_convergence_tol and st.q_bar - st.L_best <= 1e-6 * max(1.0, abs(st.L_best)):
            stop = "converged"
            break
    iterations = len(report.records)

    lower, certified = st.L_best, False
    if config.certify_lower_bound:
        sol = backend.solve(relaxed.compiled(st.lam, st.c), sub_opts)
        if sol.status == "optimal" and math.isfinite(sol.bound):
            lower, certified = float(sol.bound), True

    if not recover:
        return SlblrResult("not_recovered", st.incumbent, math.nan, lower, certified, math.nan, st.lam,
                           report, iterations, time.monotonic() - started, None, stop)
    rec = _keep_best(best, recover_primal(
        problem, st.history, st.flip_iter, backend, config.primal_recovery_free_fraction, sub_opts))
    if rec.x is None:
        return SlblrResult("infeasible", None, math.nan, lower, certified, math.nan, st.lam,
                           report, iterations, time.monotonic() - started, rec, stop)
    gap = (rec.objective - lower) / abs(rec.objective) if rec.objective else 0.0
    return SlblrResult(rec.status, rec.x, rec.objective, lower, certified, gap, st.lam,
                       report, iterations, time.monotonic() - started, rec, stop)
