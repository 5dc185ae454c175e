from __future__ import annotations

import itertools
import logging
import sys

import highspy
import numpy as np
import pytest
from scipy.optimize import linprog

from decarb.milp import EQ, GE, LE, LinExpr, MixedIntegerModel, ModelError
from decarb.solver import (
    BackendError,
    CommandBackend,
    HighsBackend,
    MpsError,
    ReferenceBackend,
    ScaleGuardError,
    SolutionParseError,
    SolveOptions,
    default_backend,
    emit_mps,
    get_backend,
    parse_solution,
    reference_solve,
    write_solution,
)
from decarb.solver.backend import SOLVER_CMD_ENV
from decarb.solver.simplex import solve_lp


# --------------------------------------------------------------------------- oracles
def enumerate_milp(model: MixedIntegerModel) -> float:
    """Optimum by trying every binary assignment and solving the remaining LP with scipy."""
    cm = model.compile()
    bins = np.flatnonzero(cm.is_binary)
    A = cm.A.toarray()
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        lb, ub = cm.lb.copy(), cm.ub.copy()
        lb[bins] = ub[bins] = bits
        up = np.isfinite(cm.row_hi)
        dn = np.isfinite(cm.row_lo)
        res = linprog(
            cm.c,
            A_ub=np.vstack([A[up], -A[dn]]),
            b_ub=np.concatenate([cm.row_hi[up], -cm.row_lo[dn]]),
            bounds=list(zip(lb, ub)),
            method="highs",
        )
        if res.status == 0:
            best = min(best, res.fun + cm.c0)
    return best


def random_milp(rng, n_bin: int, n_cont: int, n_rows: int) -> MixedIntegerModel:
    m = MixedIntegerModel("random")
    xs = [m.add_var(f"b{i}", binary=True) for i in range(n_bin)]
    xs += [m.add_var(f"c{i}", float(rng.integers(-3, 1)), float(rng.integers(1, 8))) for i in range(n_cont)]
    for r in range(n_rows):
        terms = {j: float(rng.integers(-6, 7)) for j in xs if rng.random() < 0.6}
        m.add_constr(f"r{r}", LinExpr(terms), [LE, GE, EQ][rng.integers(3) if r else 0], float(rng.integers(-4, 9)))
    m.set_objective(LinExpr({j: float(rng.normal()) for j in xs}, 1.5))
    return m


# --------------------------------------------------------------------------- reference solver
def test_pure_lp():
    m = MixedIntegerModel("lp")
    x = m.add_var("x", 0, 10)
    m.add_constr("lo", LinExpr({x: 1.0}), GE, 3.0)
    m.set_objective(LinExpr({x: 1.0}))
    sol = reference_solve(m)
    assert sol.status == "optimal" and sol.x[x] == pytest.approx(3.0)


def test_conflicting_rows_are_infeasible():
    m = MixedIntegerModel("bad")
    x = m.add_var("x", 0, 10)
    m.add_constr("lo", LinExpr({x: 1.0}), GE, 2.0)
    m.add_constr("hi", LinExpr({x: 1.0}), LE, 1.0)
    assert reference_solve(m).status == "infeasible"


def test_inverted_bounds_rejected():
    m = MixedIntegerModel("bad")
    with pytest.raises(ModelError):
        m.add_var("x", 2.0, 1.0)


def test_knapsack_matches_enumeration():
    values, weights, cap = [10.0, 13.0, 7.0], [4.0, 6.0, 3.0], 9.0
    m = MixedIntegerModel("knap")
    take = [m.add_var(f"take{i}", binary=True) for i in range(3)]
    m.add_constr("cap", LinExpr(dict(zip(take, weights))), LE, cap)
    m.set_objective(LinExpr({t: -v for t, v in zip(take, values)}))
    best = max(
        sum(v for v, s in zip(values, pick) if s)
        for pick in itertools.product((0, 1), repeat=3)
        if sum(w for w, s in zip(weights, pick) if s) <= cap
    )
    sol = reference_solve(m, SolveOptions(relative_gap_tol=1e-9))
    assert -sol.objective == pytest.approx(best) == 20.0


@pytest.mark.parametrize("seed", range(12))
def test_random_milps_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = random_milp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 4)), int(rng.integers(2, 6)))
    truth = enumerate_milp(m)
    sol = reference_solve(m, SolveOptions(relative_gap_tol=1e-9))
    if np.isinf(truth):
        assert sol.status == "infeasible"
    else:
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(truth, abs=1e-6)
        assert m.compile().max_violation(sol.x) <= 1e-6
        assert sol.bound <= sol.objective + 1e-9


def test_scale_guard():
    m = MixedIntegerModel("big")
    bins = [m.add_var(f"b{i}", binary=True) for i in range(41)]
    m.add_constr("one", LinExpr({b: 1.0 for b in bins}), GE, 1.0)
    with pytest.raises(ScaleGuardError, match="emit_mps"):
        reference_solve(m)
    # fixed binaries do not count
    m2 = MixedIntegerModel("fixed")
    for i in range(45):
        m2.add_var(f"b{i}", 1.0, 1.0, binary=True)
    assert reference_solve(m2).status == "optimal"


def test_backends_agree(rng):
    for _ in range(5):
        m = random_milp(rng, 5, 3, 4)
        a, b = ReferenceBackend().solve(m, SolveOptions(relative_gap_tol=1e-9)), HighsBackend().solve(m)
        assert a.status == b.status
        if a.has_solution:
            assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_lp_relaxation_duals_agree(rng):
    m = random_milp(rng, 0, 5, 4)
    ref, hi = ReferenceBackend().solve_lp_relaxation(m), HighsBackend().solve_lp_relaxation(m)
    assert ref.status == hi.status
    if ref.status == "optimal":
        assert ref.objective == pytest.approx(hi.objective, abs=1e-7)


def test_get_backend():
    assert isinstance(get_backend("HiGHS"), HighsBackend)
    with pytest.raises(BackendError):
        get_backend("cplex-ish")


# --------------------------------------------------------------------------- simplex
@pytest.mark.parametrize("seed", range(20))
def test_simplex_matches_scipy(seed):
    rng = np.random.default_rng(100 + seed)
    n, m = int(rng.integers(2, 8)), int(rng.integers(1, 7))
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    lo = np.where(rng.random(m) < 0.5, -np.inf, rng.integers(-10, 3, m).astype(float))
    hi = np.where(rng.random(m) < 0.3, np.inf, rng.integers(3, 15, m).astype(float))
    lb = rng.integers(-5, 1, n).astype(float)
    ub = np.where(rng.random(n) < 0.2, np.inf, rng.integers(1, 10, n).astype(float))
    c = rng.normal(size=n)
    ours = solve_lp(A, c, lo, hi, lb, ub)
    up, dn = np.isfinite(hi), np.isfinite(lo)
    ref = linprog(c, A_ub=np.vstack([A[up], -A[dn]]), b_ub=np.concatenate([hi[up], -lo[dn]]),
                  bounds=list(zip(lb, ub)), method="highs")
    expected = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
    assert ours.status == expected
    if expected == "optimal":
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)


def test_simplex_warm_start_after_bound_change():
    A = np.array([[1.0, 1.0], [1.0, -1.0]])
    c = np.array([-1.0, -2.0])
    first = solve_lp(A, c, [-np.inf, -np.inf], [4.0, 1.0], [0, 0], [3, 3])
    assert first.objective == pytest.approx(-7.0)
    warm = solve_lp(A, c, [-np.inf, -np.inf], [4.0, 1.0], [0, 0], [3, 2], warm=first.basis)
    cold = solve_lp(A, c, [-np.inf, -np.inf], [4.0, 1.0], [0, 0], [3, 2])
    assert warm.objective == pytest.approx(cold.objective) == pytest.approx(-6.0)


# --------------------------------------------------------------------------- MPS
def highs_read(data: bytes, tmp_path) -> highspy.Highs:
    path = tmp_path / "m.mps"
    path.write_bytes(data)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    return h


def test_empty_model_is_valid(tmp_path):
    data = emit_mps(MixedIntegerModel("empty"))
    for section in (b"NAME", b"ROWS", b"COLUMNS", b"RHS", b"ENDATA"):
        assert section in data
    highs_read(data, tmp_path)


def test_identical_models_give_identical_bytes(rng):
    seed = int(rng.integers(1000))
    a = random_milp(np.random.default_rng(seed), 4, 3, 4)
    b = random_milp(np.random.default_rng(seed), 4, 3, 4)
    assert emit_mps(a) == emit_mps(b)


def test_names_that_collide_after_sanitizing():
    m = MixedIntegerModel("clash")
    m.add_var("a b")
    m.add_var("a_b")
    with pytest.raises(MpsError):
        emit_mps(m)


def test_long_names_are_clipped_uniquely(tmp_path):
    m = MixedIntegerModel("long")
    for i in range(3):
        m.add_var("x" * 300 + str(i), 0, 1)
    data = emit_mps(m)
    h = highs_read(data, tmp_path)
    assert h.getNumCol() == 3


@pytest.mark.parametrize("seed", range(15))
def test_random_models_round_trip_through_highs(seed, tmp_path):
    rng = np.random.default_rng(500 + seed)
    m = random_milp(rng, 4, 3, 4)
    free = m.add_var("free var", -np.inf, np.inf)
    m.add_constr("free_cap", LinExpr({free: 1.0}), LE, 5.0)
    m.add_constr("free_floor", LinExpr({free: 1.0}), GE, -5.0)
    h = highs_read(emit_mps(m), tmp_path)
    h.run()
    ours = HighsBackend().solve(m, SolveOptions(relative_gap_tol=1e-9))
    status = h.getModelStatus()
    if ours.status == "optimal":
        assert status == highspy.HighsModelStatus.kOptimal
        assert h.getInfo().objective_function_value == pytest.approx(ours.objective, abs=1e-6)
    else:
        assert status != highspy.HighsModelStatus.kOptimal


# --------------------------------------------------------------------------- solution files
def small_model():
    m = MixedIntegerModel("small")
    x = m.add_var("x", 0, 5)
    y = m.add_var("y", 0, 5, binary=True)
    m.add_constr("r", LinExpr({x: 1.0, y: 1.0}), LE, 4.0)
    m.set_objective(LinExpr({x: 2.0, y: 1.0}))
    return m


def test_parse_single_value():
    sol = parse_solution("x 1.0\ny 0\n", small_model())
    assert sol.values == {"x": 1.0, "y": 0.0}
    assert sol.objective == 2.0


def test_missing_variable_defaults_to_zero(caplog):
    with caplog.at_level(logging.WARNING):
        sol = parse_solution("x 1.0\n", small_model())
    assert sol.values["y"] == 0.0
    assert "absent" in caplog.text


def test_infeasible_status_needs_no_values():
    sol = parse_solution("# status: infeasible\n", small_model())
    assert sol.status == "infeasible" and not sol.has_solution


@pytest.mark.parametrize("text,line", [("x 1.0\ny\n", 2), ("x abc\n", 1), ("\n\nz 1\n", 3), ("# status: weird\n", 1)])
def test_malformed_lines_report_their_number(text, line):
    with pytest.raises(SolutionParseError) as err:
        parse_solution(text, small_model())
    assert err.value.lineno == line


def test_write_then_parse_is_identity(rng):
    m = small_model()
    sol = HighsBackend().solve(m)
    back = parse_solution(write_solution(sol, m), m)
    assert back.status == sol.status and np.array_equal(back.x, sol.x) and back.objective == sol.objective


HIGHS_WRAPPER = """
import sys, highspy
mps, out = sys.argv[1], sys.argv[2]
h = highspy.Highs()
h.setOptionValue("output_flag", False)
h.readModel(mps)
h.run()
st = h.getModelStatus()
with open(out, "w") as fh:
    if st != highspy.HighsModelStatus.kOptimal:
        fh.write("# status: infeasible\\n")
        sys.exit(0)
    lp = h.getLp()
    fh.write("# status: optimal\\n")
    for name, v in zip(lp.col_names_, h.getSolution().col_value):
        fh.write(f"{name} {v!r}\\n")
"""


def test_command_backend_runs_external_solver(tmp_path, rng):
    script = tmp_path / "wrap.py"
    script.write_text(HIGHS_WRAPPER)
    backend = CommandBackend(f"{sys.executable} {script} {{mps}} {{sol}}")
    for _ in range(4):
        m = random_milp(rng, 4, 2, 3)
        ours, ext = HighsBackend().solve(m), backend.solve(m)
        assert ours.status == ext.status
        if ours.has_solution:
            assert ext.objective == pytest.approx(ours.objective, abs=1e-6)


def test_command_template_needs_placeholders():
    with pytest.raises(BackendError):
        CommandBackend("solver --in model.mps")


def test_environment_command_drives_the_decomposition(tmp_path, monkeypatch):
    from decarb.slblr import SlblrConfig, run
    from test_slblr import two_unit

    script = tmp_path / "wrap.py"
    script.write_text(HIGHS_WRAPPER)
    monkeypatch.setenv(SOLVER_CMD_ENV, f"{sys.executable} {script} {{mps}} {{sol}}")
    assert isinstance(default_backend(), CommandBackend)
    res = run(two_unit(), SlblrConfig(max_iterations=10))
    assert res.objective == pytest.approx(850.0)
