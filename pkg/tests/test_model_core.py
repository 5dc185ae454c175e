from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import block, solve
from decarb.milp import EQ, LinExpr
from decarb.model_core import (
    FR,
    LF_UP,
    ConfigError,
    DataGapError,
    DegeneracyError,
    GridError,
    HydroResource,
    Line,
    RenewableResource,
    ReserveSpec,
    StorageResource,
    ThermalUnit,
    TimeGrid,
    WeekSample,
    Zone,
    build_hydro_constraints,
    build_network_and_balance,
    build_renewable_constraints,
    build_reserve_constraints,
    build_storage_constraints,
    build_thermal_constraints,
    circular_run_lengths,
    feasible_commitment,
    tau,
    uc_cost_expression,
)

KEY = (2023, "w1")


# --------------------------------------------------------------------------- circular time
@pytest.mark.parametrize("t,T,expected", [(5, 168, 5), (168, 168, 0), (-1, 168, 167), (-169, 168, 167), (337, 168, 1)])
def test_tau_examples(t, T, expected):
    assert tau(t, T) == expected


def test_tau_rejects_empty_period():
    with pytest.raises(GridError):
        tau(3, 0)


@given(st.integers(-10_000, 10_000), st.integers(1, 500))
def test_tau_is_canonical(t, T):
    h = tau(t, T)
    assert 0 <= h < T and (h - t) % T == 0


def test_time_grid_checks_weights_and_years():
    weeks = (WeekSample("a", 30), WeekSample("b", 22))
    grid = TimeGrid(weeks, (2023, 2025), 4)
    assert grid.T == 4 and grid.weight("b") == 22
    assert grid.blocks() == [(2023, "a"), (2023, "b"), (2025, "a"), (2025, "b")]
    with pytest.raises(GridError):
        TimeGrid((WeekSample("a", 30),), (2023,), 4)
    with pytest.raises(GridError):
        TimeGrid(weeks, (2025, 2023), 4)
    with pytest.raises(GridError):
        WeekSample("z", 0)


def test_circular_run_lengths_joins_across_wrap():
    assert circular_run_lengths([1, 0, 0, 1, 1]) == [(0, 2), (1, 3)]
    assert circular_run_lengths([1, 1, 1]) == [(1, 3)]


# --------------------------------------------------------------------------- thermal
def thermal_model(unit: ThermalUnit, T: int):
    blk, m = block(T)
    build_thermal_constraints(unit, blk, m)
    return blk, m


def pattern_feasible(unit: ThermalUnit, pattern) -> bool:
    blk, m = thermal_model(unit, len(pattern))
    fix = dict(zip(blk.thermal[unit.id].v, map(float, pattern)))
    return solve(m, fix).has_solution


def mismatches(unit: ThermalUnit, T: int) -> list[tuple[int, ...]]:
    blk, m = thermal_model(unit, T)
    bad = []
    for pattern in itertools.product((0, 1), repeat=T):
        fix = dict(zip(blk.thermal[unit.id].v, map(float, pattern)))
        if solve(m, fix).has_solution != feasible_commitment(unit, pattern):
            bad.append(pattern)
    return bad


def test_uptime_example_is_infeasible():
    unit = ThermalUnit("g", "A", 10, 100, min_uptime=3)
    assert not pattern_feasible(unit, (1, 1, 0, 0, 0, 0))
    assert pattern_feasible(unit, (1, 1, 1, 0, 0, 0))


def test_one_hour_limits_admit_every_pattern():
    unit = ThermalUnit("g", "A", 10, 100)
    assert all(pattern_feasible(unit, p) for p in itertools.product((0, 1), repeat=6))


@pytest.mark.parametrize(
    "unit",
    [
        ThermalUnit("g", "A", 10, 100, min_uptime=3, min_downtime=2),
        ThermalUnit("g", "A", 10, 100, min_uptime=2, min_downtime=3, ramp_up=30, startup_limit=40),
        ThermalUnit("g", "A", 0, 50, min_uptime=4, min_downtime=1, shutdown_limit=20),
    ],
)
def test_all_64_patterns_match_rule_simulator(unit):
    assert mismatches(unit, 6) == []


def test_startup_limit_caps_first_hour_output():
    unit = ThermalUnit("g", "A", 10, 100, ramp_up=10, startup_limit=50)
    blk, m = thermal_model(unit, 2)
    tv = blk.thermal["g"]
    m.set_objective(LinExpr({tv.p[1]: -1.0}))
    sol = solve(m, {tv.v[0]: 0.0, tv.v[1]: 1.0})
    assert sol.x[tv.p[1]] == pytest.approx(50.0)


def test_ramp_limit_after_startup_hour():
    unit = ThermalUnit("g", "A", 10, 100, ramp_up=10, startup_limit=50)
    blk, m = thermal_model(unit, 4)
    tv = blk.thermal["g"]
    m.set_objective(LinExpr({tv.p[2]: -1.0}))
    sol = solve(m, {tv.v[0]: 0.0, tv.v[1]: 1.0, tv.v[2]: 1.0, tv.v[3]: 0.0})
    # p[1] <= 50, ramp +10, and the stop limit on hour 2 is p_max
    assert sol.x[tv.p[2]] == pytest.approx(60.0)


def test_window_longer_than_period_is_degenerate():
    with pytest.raises(DegeneracyError):
        thermal_model(ThermalUnit("g", "A", 10, 100, min_uptime=5), 4)
    with pytest.raises(DegeneracyError):
        thermal_model(ThermalUnit("g", "A", 10, 100, min_downtime=5), 4)


def test_thermal_unit_validation():
    with pytest.raises(ConfigError):
        ThermalUnit("g", "A", 120, 100)
    with pytest.raises(ConfigError):
        ThermalUnit("g", "A", 50, 100, startup_limit=40)
    # start and stop limits above p_max are clipped
    assert ThermalUnit("g", "A", 10, 100, startup_limit=500).su == 100


def test_start_and_stop_indicators_count_cycles():
    unit = ThermalUnit("g", "A", 10, 100, startup_cost=500, shutdown_cost=300)
    blk, m = thermal_model(unit, 3)
    m.set_objective(uc_cost_expression(blk, [unit], [], []))
    tv = blk.thermal["g"]
    sol = solve(m, {tv.v[0]: 0.0, tv.v[1]: 1.0, tv.v[2]: 0.0, tv.p[1]: 10.0})
    cost_without_energy = sol.objective
    assert cost_without_energy == pytest.approx(800.0)
    assert [round(sol.x[i]) for i in tv.start] == [0, 1, 0]
    assert [round(sol.x[i]) for i in tv.stop] == [0, 0, 1]


units = st.builds(
    lambda pmin, span, ut, dt, su, sd, ru: ThermalUnit(
        "g", "A", pmin, pmin + span, min_uptime=ut, min_downtime=dt,
        startup_limit=pmin + su, shutdown_limit=pmin + sd, ramp_up=ru, ramp_down=ru,
    ),
    st.sampled_from([0.0, 10.0, 40.0]),
    st.sampled_from([0.0, 20.0, 60.0]),
    st.integers(1, 5),
    st.integers(1, 5),
    st.sampled_from([0.0, 5.0, 100.0]),
    st.sampled_from([0.0, 5.0, 100.0]),
    st.sampled_from([0.0, 5.0, 50.0]),
)


@settings(max_examples=60, deadline=None)
@given(units, st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_random_units_match_rule_simulator(unit, pattern):
    assert pattern_feasible(unit, pattern) == feasible_commitment(unit, pattern)


# --------------------------------------------------------------------------- renewables
def renewable_model(pf: float, ic: float, firm: bool = False, T: int = 1):
    r = RenewableResource("pv", "A", {KEY: np.full(T, pf)}, is_firm=firm)
    blk, m = block(T)
    build_renewable_constraints(r, ic, blk, m)
    return blk, m


def test_renewable_output_is_capacity_times_factor():
    blk, m = renewable_model(0.5, 100)
    p, c = blk.renewable["pv"][0], blk.curtail["pv"][0]
    sol = solve(m, {c: 0.0})
    assert sol.x[p] == pytest.approx(50.0)
    assert solve(m, {c: 50.0}).x[p] == pytest.approx(0.0)
    assert not solve(m, {c: 51.0}).has_solution


def test_firm_renewable_has_no_curtailment():
    blk, m = renewable_model(0.9, 10, firm=True)
    assert "pv" not in blk.curtail
    p = blk.renewable["pv"][0]
    m.set_objective(LinExpr({p: 1.0}))
    assert solve(m).x[p] == pytest.approx(9.0)
    assert not solve(m, {p: 8.0}).has_solution


def test_renewable_profile_gap_names_the_block():
    r = RenewableResource("pv", "A", {(2023, "w2"): np.ones(4)})
    blk, m = block(4)
    with pytest.raises(DataGapError, match="pv.*2023.*w1"):
        build_renewable_constraints(r, 10.0, blk, m)
    r = RenewableResource("pv", "A", {KEY: np.array([0.1, 0.2, np.nan, 0.3])})
    with pytest.raises(DataGapError, match="hour 2"):
        build_renewable_constraints(r, 10.0, *block(4))


def test_production_factor_outside_unit_interval_rejected():
    with pytest.raises(ConfigError):
        RenewableResource("pv", "A", {KEY: np.array([1.2])})


# --------------------------------------------------------------------------- hydro
def hydro_model(pmin, pmax, budget, ramp, T=4):
    h = HydroResource("h", "A", pmin, pmax, ramp, {KEY: budget})
    blk, m = block(T)
    build_hydro_constraints(h, blk, m)
    return blk.hydro["h"], m


def test_hydro_forced_by_bounds():
    p, m = hydro_model(10, 10, 40, 100)
    sol = solve(m)
    assert np.allclose(sol.x[p], 10.0)


def test_hydro_zero_budget():
    p, m = hydro_model(0, 10, 0, 100)
    m.set_objective(LinExpr({i: -1.0 for i in p}))
    assert np.allclose(solve(m).x[p], 0.0)


def test_hydro_ramp_wraps_around_the_week():
    p, m = hydro_model(0, 20, 1000, 2)
    for sign, expected in ((1.0, 12.0), (-1.0, 8.0)):
        m.set_objective(LinExpr({p[0]: -sign}))
        assert solve(m, {p[3]: 10.0}).x[p[0]] == pytest.approx(expected)


def test_hydro_budget_binds():
    p, m = hydro_model(0, 200, 200, 100)
    m.set_objective(LinExpr({i: -1.0 for i in p}))
    assert solve(m).x[p].sum() == pytest.approx(200.0)


def test_hydro_missing_budget():
    h = HydroResource("h", "A", 0, 10, 5, {})
    with pytest.raises(DataGapError):
        build_hydro_constraints(h, *block(4))


# --------------------------------------------------------------------------- storage
def storage_model(eta=1.0, delta=0.0, power=100.0, energy=1000.0, T=2, soc_min=0.0, soc_max=1.0):
    s = StorageResource(
        "b", "A", charge_efficiency=eta, discharge_efficiency=eta, self_discharge=delta,
        soc_min_fraction=soc_min, soc_max_fraction=soc_max, buildable_power_limit=power,
    )
    blk, m = block(T)
    build_storage_constraints(s, power, energy, blk, m)
    return blk.storage["b"], m


def test_lossless_balance_step():
    sv, m = storage_model(T=3)
    sol = solve(m, {sv.soc[0]: 10.0, sv.charge[1]: 5.0, sv.discharge[1]: 0.0})
    assert sol.x[sv.soc[1]] == pytest.approx(15.0)


def test_round_trip_efficiency_example():
    sv, m = storage_model(eta=0.9)
    m.set_objective(LinExpr({sv.discharge[1]: -1.0}))
    sol = solve(m, {sv.charge[0]: 10.0, sv.charge[1]: 0.0, sv.discharge[0]: 0.0})
    assert sol.x[sv.discharge[1]] == pytest.approx(8.1)


def test_charge_and_discharge_are_exclusive():
    sv, m = storage_model()
    assert not solve(m, {sv.charge[0]: 1.0, sv.discharge[0]: 1.0}).has_solution


def test_state_of_charge_window():
    sv, m = storage_model(energy=100.0, soc_min=0.1, soc_max=0.9)
    for sign, expected in ((1.0, 10.0), (-1.0, 90.0)):
        m.set_objective(LinExpr({sv.soc[0]: sign}))
        assert solve(m).x[sv.soc[0]] == pytest.approx(expected)


def test_power_capacity_limits_rates():
    sv, m = storage_model(power=20.0)
    m.set_objective(LinExpr({sv.charge[0]: -1.0}))
    assert solve(m).x[sv.charge[0]] == pytest.approx(20.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16))
def test_lossless_storage_telescopes(costs):
    sv, m = storage_model(T=4)
    idx = sv.charge + sv.discharge + sv.soc + sv.mode
    m.set_objective(LinExpr(dict(zip(idx, costs))))
    sol = solve(m)
    assert abs(sol.x[sv.charge].sum() - sol.x[sv.discharge].sum()) <= 1e-6


def test_storage_validation():
    with pytest.raises(ConfigError, match="b"):
        StorageResource("b", "A", soc_min_fraction=0.8, soc_max_fraction=0.2)
    with pytest.raises(ConfigError):
        StorageResource("b", "A", charge_efficiency=0.0)


# --------------------------------------------------------------------------- network
def balanced(zones, lines, thermal=(), renewables=(), caps=None, T=1):
    blk, m = block(T)
    for u in thermal:
        build_thermal_constraints(u, blk, m)
    for r in renewables:
        build_renewable_constraints(r, (caps or {})[r.id], blk, m)
    res = build_network_and_balance(zones, lines, thermal, renewables, [], [], blk, m)
    for z, exprs in res.items():
        for t, e in enumerate(exprs):
            m.add_constr(f"bal[{z},{t}]", e, EQ)
    return blk, m, res


def test_balanced_island():
    firm = RenewableResource("f", "A", {KEY: np.ones(1)}, is_firm=True)
    zone = Zone("A", {KEY: np.array([10.0])})
    blk, m, res = balanced([zone], [], renewables=[firm], caps={"f": 10.0})
    sol = solve(m)
    assert sol.has_solution and res["A"][0].value(sol.x) == pytest.approx(0.0)


def two_zone(flow_max):
    firm = RenewableResource("f", "A", {KEY: np.ones(1)}, is_firm=True)
    zones = [Zone("A", {KEY: np.array([5.0])}), Zone("B", {KEY: np.array([5.0])})]
    line = Line("ab", "A", "B", -flow_max, flow_max, wheeling_cost=1.0)
    return balanced(zones, [line], renewables=[firm], caps={"f": 10.0})


def test_transfer_over_line():
    blk, m, _ = two_zone(5.0)
    m.set_objective(uc_cost_expression(blk, [], [], [Line("ab", "A", "B", -5, 5, wheeling_cost=1.0)]))
    sol = solve(m)
    assert sol.x[blk.flow_pos["ab"][0]] - sol.x[blk.flow_neg["ab"][0]] == pytest.approx(5.0)


def test_line_too_small_is_infeasible():
    _, m, _ = two_zone(3.0)
    assert not solve(m).has_solution


def test_line_to_unknown_zone():
    with pytest.raises(ConfigError, match="Z"):
        balanced([Zone("A", {KEY: np.zeros(1)})], [Line("az", "A", "Z", -1, 1)])


# --------------------------------------------------------------------------- reserves
def reserve_model(load, unit=None, wind_cap=0.0, spec=None, p_fix=None):
    T = 1
    unit = unit or ThermalUnit("gas", "A", 0, 1000, ten_minute_ramp=1000)
    wind = RenewableResource("wind", "A", {KEY: np.ones(T)}, elcc_axis="wind")
    spec = spec or ReserveSpec(
        freq_response_mw=770, load_following_up_series={KEY: np.zeros(T)},
        load_following_down_series={KEY: np.zeros(T)},
    )
    zone = Zone("A", {KEY: np.full(T, load)}, True, spec)
    blk, m = block(T)
    build_thermal_constraints(unit, blk, m)
    build_renewable_constraints(wind, wind_cap, blk, m)
    build_reserve_constraints(zone, [unit], [wind], [], [], {}, blk, m)
    return blk, m


def test_frequency_response_capped_by_output_fraction():
    spec = ReserveSpec(freq_response_mw=0, load_following_up_series={KEY: np.zeros(1)},
                       load_following_down_series={KEY: np.zeros(1)})
    blk, m = reserve_model(0.0, spec=spec)
    r = blk.reserves[(FR, "gas")][0]
    m.set_objective(LinExpr({r: -1.0}))
    sol = solve(m, {blk.thermal["gas"].p[0]: 500.0, blk.thermal["gas"].v[0]: 1.0})
    assert sol.x[r] == pytest.approx(40.0)


def test_zero_load_leaves_only_frequency_response():
    blk, m = reserve_model(0.0)
    gas = blk.thermal["gas"]
    m.set_objective(LinExpr({gas.p[0]: 1.0}))
    sol = solve(m)
    # 770 MW of frequency response at 8% of output needs 9625 MW, beyond a 1000 MW unit
    assert not sol.has_solution
    spec = ReserveSpec(freq_response_mw=40, load_following_up_series={KEY: np.zeros(1)},
                       load_following_down_series={KEY: np.zeros(1)})
    blk, m = reserve_model(0.0, spec=spec)
    gas = blk.thermal["gas"]
    m.set_objective(LinExpr({gas.p[0]: 1.0}))
    sol = solve(m)
    assert sol.x[gas.p[0]] == pytest.approx(500.0)
    for (product, rid), idx in blk.reserves.items():
        if product != FR:
            assert sol.x[idx[0]] == pytest.approx(0.0, abs=1e-9)


def test_wind_covers_at_most_half_of_load_following():
    spec = ReserveSpec(freq_response_mw=0, regulation_up_fraction_of_load=0, regulation_down_fraction_of_load=0,
                       spin_fraction_of_load=0, load_following_up_series={KEY: np.array([100.0])},
                       load_following_down_series={KEY: np.zeros(1)})
    blk, m = reserve_model(0.0, wind_cap=200.0, spec=spec)
    lf = blk.reserves[(LF_UP, "wind")][0]
    m.set_objective(LinExpr({lf: -1.0}))
    sol = solve(m, {blk.curtail["wind"][0]: 200.0})
    assert sol.x[lf] == pytest.approx(50.0)


def test_missing_load_following_series():
    spec = ReserveSpec(load_following_up_series={}, load_following_down_series={KEY: np.zeros(1)})
    with pytest.raises(DataGapError, match="load-following up"):
        reserve_model(0.0, spec=spec)


# --------------------------------------------------------------------------- cost
def test_uc_cost_arithmetic():
    unit = ThermalUnit("g", "A", 0, 100, gen_cost_intercept=100, gen_cost_slope=20)
    blk, m = thermal_model(unit, 2)
    cost = uc_cost_expression(blk, [unit], [], [])
    tv = blk.thermal["g"]
    x = np.zeros(m.num_vars)
    assert cost.value(x) == 0.0
    x[tv.v[0]], x[tv.p[0]] = 1.0, 50.0
    assert cost.value(x) == pytest.approx(1100.0)
