from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decarb.milp import EQ, GE, LE, LinExpr, MixedIntegerModel
from decarb.solver import HighsBackend, ReferenceBackend, SolveOptions, reference_solve
from decarb.slblr import (
    DecomposableProblem,
    FeasiblePoint,
    LevelBreach,
    RelaxedProblem,
    SlblrConfig,
    SlblrError,
    TerminalConvergence,
    build_relaxed_model,
    compute_stepsize,
    level_reset,
    partition_units,
    recover_primal,
    run,
    select_subproblem_group,
    solve_subproblem,
    update_multipliers,
)

# Two units serving 60 MW in one hour: (no-load cost, energy cost, p_min, p_max)
UNITS = {"u1": (100.0, 10.0, 10.0, 50.0), "u2": (50.0, 20.0, 10.0, 50.0)}
LOAD = 60.0
OPTS = SolveOptions(relative_gap_tol=1e-9)


def two_unit(load: float = LOAD) -> DecomposableProblem:
    m = MixedIntegerModel("two_unit")
    unit_vars, obj = {}, LinExpr()
    balance = LinExpr()
    for uid, (a, b, lo, hi) in UNITS.items():
        v = m.add_var(f"v[{uid}]", binary=True)
        p = m.add_var(f"p[{uid}]", 0.0, hi)
        m.add_constr(f"pmin[{uid}]", LinExpr({p: 1.0, v: -lo}), GE)
        m.add_constr(f"pmax[{uid}]", LinExpr({p: 1.0, v: -hi}), LE)
        obj.add_term(v, a).add_term(p, b)
        balance.add_term(p, 1.0)
        unit_vars[uid] = [v, p]
    row = m.add_constr("balance", balance, EQ, load)
    m.set_objective(obj)
    return DecomposableProblem(m, [row], unit_vars, [], largest_capacity=50.0)


def dual_value(lam: float) -> float:
    """Lagrangian dual of the 2-unit toy, by enumerating each unit's vertices."""
    total = -lam * LOAD
    for a, b, lo, hi in UNITS.values():
        total += min(0.0, a + (b + lam) * lo, a + (b + lam) * hi)
    return total


def enumerated_dual_optimum() -> float:
    # the dual is concave piecewise linear; its maximum sits on a breakpoint
    candidates = []
    for a, b, lo, hi in UNITS.values():
        candidates += [-b, -b - a / lo, -b - a / hi]
    return max(candidates, key=dual_value)


def test_enumerated_dual_optimum():
    assert enumerated_dual_optimum() == -21.0
    assert dual_value(-21.0) == pytest.approx(810.0)
    grid = np.linspace(-60, 20, 8001)
    assert max(dual_value(x) for x in grid) == pytest.approx(810.0)


# --------------------------------------------------------------------------- relaxed objective
def test_zero_multipliers_give_the_plain_objective(rng):
    prob = two_unit()
    rel = RelaxedProblem(prob)
    x = rng.uniform(0, 50, rel.n)
    assert rel.value(x, np.zeros(1), 0.0) == pytest.approx(rel.mono.objective(x))


def test_penalty_arithmetic():
    prob = two_unit()
    rel = RelaxedProblem(prob)
    x = np.zeros(rel.n)
    x[prob.unit_vars["u1"][1]] = LOAD + 3.0
    base = rel.mono.objective(x)
    assert rel.value(x, np.array([2.0]), 1.0) - base == pytest.approx(9.0)
    lifted = rel.lift(x)
    assert rel.compiled(np.array([2.0]), 1.0).objective(lifted) - base == pytest.approx(9.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-100, 100), st.floats(0, 50), st.floats(10, 50))
def test_balanced_points_ignore_multipliers(lam, c, p1):
    prob = two_unit()
    rel = RelaxedProblem(prob)
    x = np.zeros(rel.n)
    x[prob.unit_vars["u1"]] = [1.0, p1]
    x[prob.unit_vars["u2"]] = [1.0, LOAD - p1]
    assert rel.value(x, np.array([lam]), c) == pytest.approx(rel.mono.objective(x), abs=1e-9)


def test_relaxed_model_matches_array_form():
    prob = two_unit()
    lam = np.array([-25.0])
    relaxed = build_relaxed_model(prob.model, prob.coupling_rows, lam, 0.5)
    assert relaxed.num_vars == prob.model.num_vars + 2
    sol = reference_solve(relaxed, OPTS)
    rel = RelaxedProblem(prob)
    assert sol.objective == pytest.approx(rel.value(sol.x, lam, 0.5))


def test_coupling_rows_must_be_equalities():
    prob = two_unit()
    with pytest.raises(SlblrError):
        RelaxedProblem(DecomposableProblem(prob.model, [prob.model.row("pmin[u1]")], prob.unit_vars, []))


# --------------------------------------------------------------------------- grouping
UNIT_IDS = [f"g{i}" for i in range(6)]


def test_single_group_holds_everything():
    cfg = SlblrConfig(group_size=6)
    for k in range(5):
        assert select_subproblem_group(k, UNIT_IDS, cfg) == sorted(UNIT_IDS)


def test_groups_partition_the_fleet():
    cfg = SlblrConfig(group_size=2, seed=3)
    cycle = [select_subproblem_group(k, UNIT_IDS, cfg) for k in range(3)]
    flat = [u for g in cycle for u in g]
    assert all(len(g) == 2 for g in cycle)
    assert sorted(flat) == sorted(UNIT_IDS)


def test_grouping_is_deterministic():
    a = [partition_units(UNIT_IDS, 2, 11, c) for c in range(4)]
    b = [partition_units(list(reversed(UNIT_IDS)), 2, 11, c) for c in range(4)]
    assert a == b
    assert len({str(g) for g in a}) > 1


def test_group_size_checks():
    with pytest.raises(SlblrError):
        partition_units(UNIT_IDS, 7, 0, 0)
    with pytest.raises(SlblrError):
        partition_units([], 1, 0, 0)


# --------------------------------------------------------------------------- step and level
def test_stepsize_example():
    assert compute_stepsize(100.0, 90.0, np.array([2.0, 0.0]), 0.5, 0.2) == pytest.approx(0.25)


def test_stepsize_signals():
    with pytest.raises(LevelBreach):
        compute_stepsize(90.0, 90.0, np.array([1.0]), 0.5, 1.0)
    with pytest.raises(FeasiblePoint):
        compute_stepsize(100.0, 90.0, np.zeros(3), 0.5, 1.0)


def test_multiplier_update():
    assert update_multipliers([0.0, 0.0], [2.0, -1.0], 0.5).tolist() == [1.0, -0.5]
    assert update_multipliers([3.0, -1.0], [0.0, 0.0], 0.5).tolist() == [3.0, -1.0]
    with pytest.raises(SlblrError):
        update_multipliers([0.0], [1.0], 0.0)
    with pytest.raises(SlblrError):
        update_multipliers([np.nan], [1.0], 1.0)


def test_level_reset_example():
    assert level_reset(100.0, 80.0, 0.5) == 90.0


def test_repeated_resets_contract_geometrically():
    q, gaps = 100.0, []
    for _ in range(10):
        q = level_reset(q, 80.0, 0.5)
        gaps.append(q - 80.0)
    assert np.allclose(np.array(gaps[1:]) / np.array(gaps[:-1]), 0.5)


def test_level_at_best_value_is_terminal():
    with pytest.raises(TerminalConvergence):
        level_reset(80.0, 80.0, 0.5)


# --------------------------------------------------------------------------- configuration
def test_config_validation():
    with pytest.raises(ValueError):
        SlblrConfig(zeta=0.0)
    with pytest.raises(ValueError):
        SlblrConfig(gap_halving_factor=1.0)
    with pytest.raises(ValueError):
        SlblrConfig(group_size=0)
    with pytest.raises(ValueError):
        SlblrConfig.from_dict({"zeta": 0.5, "speed": "fast"})


def test_config_overrides_skip_none():
    cfg = SlblrConfig.from_dict({"max_iterations": 30}, seed=4, max_iterations=None)
    assert cfg.max_iterations == 30 and cfg.seed == 4


# --------------------------------------------------------------------------- subproblem
def incumbent_both_on(prob, p1=30.0, p2=30.0):
    x = np.zeros(prob.model.num_vars)
    x[prob.unit_vars["u1"]] = [1.0, p1]
    x[prob.unit_vars["u2"]] = [1.0, p2]
    return x


def test_overpriced_balance_turns_the_expensive_unit_off():
    prob = two_unit()
    rel = RelaxedProblem(prob)
    x0 = incumbent_both_on(prob)
    lam = np.array([-15.0])  # above u1's energy cost, below u2's
    res = solve_subproblem(rel, prob, ["u2"], x0, lam, 0.0, 100.0, HighsBackend(), OPTS)
    assert res.accepted and res.L < rel.value(x0, lam, 0.0)
    assert res.x[prob.unit_vars["u2"][0]] == 0.0
    # enumerate u2's commitment states and output vertices with u1 held at the incumbent
    vu, pu = prob.unit_vars["u2"]
    best = math.inf
    for v, p in ((0.0, 0.0), (1.0, 10.0), (1.0, 50.0)):
        x = x0.copy()
        x[vu], x[pu] = v, p
        best = min(best, rel.value(x, lam, 0.0))
    assert res.L == pytest.approx(best)


def test_optimal_incumbent_stalls():
    prob = two_unit()
    rel = RelaxedProblem(prob)
    lam = np.array([-15.0])
    sol = HighsBackend().solve(rel.compiled(lam, 0.0), OPTS)
    x_best = sol.x[: rel.n]
    res = solve_subproblem(rel, prob, ["u1"], x_best, lam, 0.0, 100.0, HighsBackend(), OPTS, [["u2"]])
    assert not res.accepted and res.merges == 1 and res.group == ["u1", "u2"]


def test_zero_trust_region_freezes_continuous_variables():
    prob = two_unit()
    prob.power_vars = [prob.unit_vars["u1"][1], prob.unit_vars["u2"][1]]
    rel = RelaxedProblem(prob)
    x0 = incumbent_both_on(prob)
    res = solve_subproblem(rel, prob, ["u1", "u2"], x0, np.array([-15.0]), 0.0, 0.0, HighsBackend(), OPTS)
    assert np.array_equal(res.x[prob.power_vars], x0[prob.power_vars])


@settings(max_examples=25, deadline=None)
@given(st.floats(-40, 0), st.floats(0, 5), st.sampled_from(["u1", "u2"]), st.floats(10, 50))
def test_accepted_candidates_strictly_descend(lam, c, group, p1):
    prob = two_unit()
    rel = RelaxedProblem(prob)
    x0 = incumbent_both_on(prob, p1, 10.0)
    res = solve_subproblem(rel, prob, [group], x0, np.array([lam]), c, 100.0, HighsBackend(), OPTS)
    before = rel.value(x0, np.array([lam]), c)
    if res.accepted:
        assert res.L < before
    else:
        assert res.L == before and np.array_equal(res.x, x0)


# --------------------------------------------------------------------------- recovery
def test_stable_binaries_leave_an_lp():
    prob = two_unit()
    x = incumbent_both_on(prob)
    rec = recover_primal(prob, [x] * 5, None, HighsBackend(), 0.25, OPTS)
    assert rec.freed == 0 and rec.attempts == 1
    assert rec.objective == pytest.approx(100 + 50 + 10 * 50 + 20 * 10)


def test_wrong_binaries_are_freed_by_doubling():
    prob = two_unit()
    off = np.zeros(prob.model.num_vars)
    rec = recover_primal(prob, [off], None, HighsBackend(), 0.0, OPTS)
    oracle = reference_solve(prob.model, OPTS)
    assert rec.attempts == 3 and rec.freed == 2
    assert rec.objective == pytest.approx(oracle.objective) == pytest.approx(850.0)


def test_unservable_load_reports_infeasible():
    prob = two_unit(load=150.0)
    rec = recover_primal(prob, [np.zeros(prob.model.num_vars)], None, HighsBackend(), 0.5, OPTS)
    assert rec.status == "infeasible" and rec.x is None


def test_single_unit_recovery_matches_oracle():
    m = MixedIntegerModel("one")
    v = m.add_var("v", binary=True)
    p = m.add_var("p", 0.0, 100.0)
    m.add_constr("pmin", LinExpr({p: 1.0, v: -20.0}), GE)
    m.add_constr("pmax", LinExpr({p: 1.0, v: -100.0}), LE)
    row = m.add_constr("balance", LinExpr({p: 1.0}), EQ, 70.0)
    m.set_objective(LinExpr({v: 40.0, p: 3.0}))
    prob = DecomposableProblem(m, [row], {"g": [v, p]}, [])
    res = run(prob, SlblrConfig(max_iterations=20))
    assert res.x[v] == 1.0
    assert res.objective == pytest.approx(reference_solve(m, OPTS).objective)


# --------------------------------------------------------------------------- driver
def test_balanced_start_stops_at_once():
    m = MixedIntegerModel("firm")
    v = m.add_var("v", binary=True)
    p = m.add_var("p", 0.0, 50.0)
    firm = m.add_var("firm", 60.0, 60.0)
    m.add_constr("pmax", LinExpr({p: 1.0, v: -50.0}), LE)
    row = m.add_constr("balance", LinExpr({p: 1.0, firm: 1.0}), EQ, 60.0)
    m.set_objective(LinExpr({v: 10.0, p: 5.0}))
    prob = DecomposableProblem(m, [row], {"g": [v, p]}, [])
    res = run(prob, SlblrConfig(), initial_multipliers=[0.0])
    assert res.stop_reason == "feasible" and res.iterations == 1
    assert res.gap == 0.0 and res.objective == 0.0


def test_zero_iterations_recover_from_the_start():
    res = run(two_unit(), SlblrConfig(max_iterations=0))
    assert res.iterations == 0 and len(res.report) == 0
    assert res.x is not None and res.objective >= 850.0 - 1e-6


@pytest.mark.parametrize("group_size", [1, 2])
@pytest.mark.parametrize("start", [0.0, -5.0, -40.0, None])
def test_multipliers_converge_on_two_unit_toy(group_size, start):
    res = run(two_unit(), SlblrConfig(group_size=group_size, max_iterations=200),
              initial_multipliers=None if start is None else [start])
    assert abs(res.multipliers[0] - enumerated_dual_optimum()) <= 1e-2
    steps = [s for s in res.report.column("stepsize")]
    assert all(s > 0 for s in steps)
    levels = res.report.column("q_bar")
    assert all(b <= a for a, b in zip(levels, levels[1:]))
    assert res.objective == pytest.approx(850.0)
    assert res.lower_bound <= res.objective + 1e-9


def test_reference_backend_drives_the_loop():
    res = run(two_unit(), SlblrConfig(max_iterations=40), ReferenceBackend())
    assert res.objective == pytest.approx(850.0)


def test_same_seed_same_trace():
    a = run(two_unit(), SlblrConfig(max_iterations=30, seed=5))
    b = run(two_unit(), SlblrConfig(max_iterations=30, seed=5))
    assert a.report.records == b.report.records
    assert math.isclose(a.objective, b.objective)
