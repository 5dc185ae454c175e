"""Multi-year investment layer wrapped around the weekly unit-commitment blocks.

:func:`build_planning_model` assembles the monolithic model: every
``(year, week)`` block from :mod:`decarb.model_core`, investment accumulation and
commitment gating, the policy-zone emissions, RPS and reserve-margin rows, and
the discounted objective. The zonal balance rows are recorded separately so
the decomposition can drop and penalize them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .milp import EQ, GE, INF, LE, LinExpr, MixedIntegerModel
from .model_core import (
    ConfigError,
    Line,
    RenewableResource,
    StorageResource,
    ThermalUnit,
    TimeGrid,
    WeekBlock,
    build_hydro_constraints,
    build_network_and_balance,
    build_renewable_constraints,
    build_reserve_constraints,
    build_storage_constraints,
    build_thermal_constraints,
    by_year,
    series_at,
    uc_cost_expression,
)

HORIZON_END = 2065
STORAGE_DURATION_HOURS = 4.0


@dataclass(frozen=True)
class PolicySchedules:
    emissions_cap_by_year: Mapping[int, float] = field(default_factory=dict)
    rps_fraction_by_year: Mapping[int, float] = field(default_factory=dict)
    prm_requirement_by_year: Mapping[int, float] = field(default_factory=dict)
    discount_rate: float = 0.05
    base_year: int | None = None
    horizon_end_year: int = HORIZON_END

    def __post_init__(self):
        if any(v < 0 for v in self.emissions_cap_by_year.values()):
            raise ConfigError("emissions caps must be >= 0")
        if any(not 0 <= v <= 1 for v in self.rps_fraction_by_year.values()):
            raise ConfigError("RPS fractions must lie in [0, 1]")
        if any(v < 0 for v in self.prm_requirement_by_year.values()):
            raise ConfigError("PRM requirements must be >= 0")
        if self.discount_rate <= -1:
            raise ConfigError("discount rate must exceed -1")


@dataclass(frozen=True)
class ELCCSurface:
    # year -> [(intercept MW, slope on wind axis, slope on solar axis)]
    facets: Mapping[int, Sequence[tuple[float, float, float]]] = field(default_factory=dict)
    # year -> [(intercept MW, slope)]
    storage_facets: Mapping[int, Sequence[tuple[float, float]]] = field(default_factory=dict)
    four_hour_divisor: float = STORAGE_DURATION_HOURS

    def __post_init__(self):
        for year, fs in self.facets.items():
            for _, sw, ss in fs:
                if not (0 <= sw <= 1 and 0 <= ss <= 1):
                    raise ConfigError(f"ELCC facet slopes for {year} must lie in [0, 1]")
        for year, fs in self.storage_facets.items():
            for _, sl in fs:
                if not 0 <= sl <= 1:
                    raise ConfigError(f"storage ELCC facet slopes for {year} must lie in [0, 1]")

    def bound(self, year: int, wind_mw: float, solar_mw: float) -> float:
        """Value of the renewable surface: the minimum over its facets."""
        return min(i + sw * wind_mw + ss * solar_mw for i, sw, ss in self.facets[year])

    def storage_bound(self, year: int, mw: float) -> float:
        return min(i + sl * mw for i, sl in self.storage_facets[year])


@dataclass
class InvestmentVars:
    """Variable indices of every investment quantity, keyed by ``(resource id, year)``."""

    unit_status: dict = field(default_factory=dict)
    unit_build: dict = field(default_factory=dict)
    unit_retire: dict = field(default_factory=dict)
    renewable_cap: dict = field(default_factory=dict)
    renewable_build: dict = field(default_factory=dict)
    storage_power: dict = field(default_factory=dict)
    storage_energy: dict = field(default_factory=dict)
    storage_power_build: dict = field(default_factory=dict)
    storage_energy_build: dict = field(default_factory=dict)
    storage_power_retire: dict = field(default_factory=dict)
    storage_energy_retire: dict = field(default_factory=dict)


@dataclass
class InvestmentDecision:
    """Investment quantities read off a solution vector."""

    unit_status: dict[tuple[str, int], float]
    unit_build: dict[tuple[str, int], float]
    unit_retire: dict[tuple[str, int], float]
    renewable_cap: dict[tuple[str, int], float]
    renewable_build: dict[tuple[str, int], float]
    storage_power: dict[tuple[str, int], float]
    storage_energy: dict[tuple[str, int], float]
    storage_power_build: dict[tuple[str, int], float]
    storage_energy_build: dict[tuple[str, int], float]

    @classmethod
    def from_values(cls, inv: InvestmentVars, x) -> "InvestmentDecision":
        pick = lambda d: {k: float(x[i]) for k, i in d.items()}  # noqa: E731
        return cls(
            pick(inv.unit_status),
            pick(inv.unit_build),
            pick(inv.unit_retire),
            pick(inv.renewable_cap),
            pick(inv.renewable_build),
            pick(inv.storage_power),
            pick(inv.storage_energy),
            pick(inv.storage_power_build),
            pick(inv.storage_energy_build),
        )


# --------------------------------------------------------------------------- weights
def discount_factor(year: int, schedules: PolicySchedules, base_year: int) -> float:
    return (1.0 / (1.0 + schedules.discount_rate)) ** (year - base_year)


def yearly_weight(y: int, schedules: PolicySchedules, years: Sequence[int]) -> float:
    """Discounted number of real years a modeled year stands for.

    Interior years use the discount factor of the modeled year times the gap to
    the next modeled year. The last modeled year covers every real year through
    ``horizon_end_year``, each discounted individually.
    """
    years = list(years)
    if y not in years:
        raise ValueError(f"{y} is not a modeled year")
    base = years[0] if schedules.base_year is None else schedules.base_year
    i = years.index(y)
    if i + 1 < len(years):
        return discount_factor(y, schedules, base) * (years[i + 1] - y)
    end = max(schedules.horizon_end_year, y)
    return sum(discount_factor(yr, schedules, base) for yr in range(y, end + 1))


def annuity_factor(rate: float, life: int) -> float:
    """Level annual payment per dollar of capital financed over ``life`` years."""
    if life <= 0:
        raise ConfigError("financing life must be positive")
    if abs(rate) < 1e-12:
        return 1.0 / life
    return rate / (1.0 - (1.0 + rate) ** (-life))


# --------------------------------------------------------------------------- model
@dataclass
class PlanningModel:
    model: MixedIntegerModel
    grid: TimeGrid
    policy_zone: str
    blocks: dict[tuple[int, str], WeekBlock]
    investment: InvestmentVars
    balance_rows: list[int]
    balance_keys: list[tuple[str, int, str, int]]
    gen_cost: dict[tuple[int, str], LinExpr]
    maintenance_cost: dict[int, LinExpr]
    investment_cost: dict[int, LinExpr]
    emissions: dict[int, LinExpr]
    year_weights: dict[int, float]
    unit_vars: dict[str, list[int]]
    power_vars: list[int]
    policy_rows: dict[tuple[str, int], int] = field(default_factory=dict)

    @property
    def balance_exprs(self) -> list[LinExpr]:
        return [LinExpr(r.coefs, -r.rhs) for r in (self.model.rows[i] for i in self.balance_rows)]

    def yearly_costs(self, x) -> dict[int, dict[str, float]]:
        """Undiscounted annual operation, maintenance and investment cost at ``x``."""
        out = {}
        for y in self.grid.years:
            gen = sum(self.grid.weight(w) * self.gen_cost[(y, w)].value(x) for w in self.grid.week_ids)
            out[y] = {
                "operation": float(gen),
                "maintenance": self.maintenance_cost[y].value(x),
                "investment": self.investment_cost[y].value(x),
            }
        return out


def _check_policy_zone(resource_id: str, zone_id: str, policy_zone: str, buildable: bool):
    if buildable and zone_id != policy_zone:
        raise ConfigError(f"{resource_id}: new capacity may only be built in the policy zone {policy_zone!r}")


def build_investment_linking(
    thermal: Sequence[ThermalUnit],
    renewables: Sequence[RenewableResource],
    storage: Sequence[StorageResource],
    years: Sequence[int],
    policy_zone: str,
    model: MixedIntegerModel,
) -> InvestmentVars:
    """Status and capacity accumulation: planned value plus cumulative builds minus retirements."""
    inv = InvestmentVars()
    for u in thermal:
        _check_policy_zone(u.id, u.zone_id, policy_zone, u.buildable)
        for y in years:
            if u.planned_status_by_year.get(y, 0) not in (0, 1):
                raise ConfigError(f"thermal {u.id}: planned status in {y} must be 0 or 1")
        for y in years:
            inv.unit_status[(u.id, y)] = model.add_var(f"IU[{u.id},{y}]", 0.0, 1.0)
            if u.buildable:
                inv.unit_build[(u.id, y)] = model.add_var(f"IUb[{u.id},{y}]", binary=True)
            if u.retirable:
                inv.unit_retire[(u.id, y)] = model.add_var(f"IUr[{u.id},{y}]", binary=True)
        for i, y in enumerate(years):
            e = LinExpr.of(inv.unit_status[(u.id, y)])
            for yy in years[: i + 1]:
                if (u.id, yy) in inv.unit_build:
                    e.add_term(inv.unit_build[(u.id, yy)], -1.0)
                if (u.id, yy) in inv.unit_retire:
                    e.add_term(inv.unit_retire[(u.id, yy)], 1.0)
            model.add_constr(f"IUacc[{u.id},{y}]", e, EQ, float(u.planned(y)))
        for kind, table in (("b", inv.unit_build), ("r", inv.unit_retire)):
            idx = [table[(u.id, y)] for y in years if (u.id, y) in table]
            if len(idx) > 1:
                model.add_constr(f"IU{kind}once[{u.id}]", LinExpr({i: 1.0 for i in idx}), LE, 1.0)

    for r in renewables:
        _check_policy_zone(r.id, r.zone_id, policy_zone, r.buildable_limit > 0)
        _accumulate(
            model, r.id, years, "IC", r.planned_capacity_by_year, r.buildable_limit,
            inv.renewable_cap, inv.renewable_build, None,
        )
    for s in storage:
        _check_policy_zone(s.id, s.zone_id, policy_zone, s.buildable_power_limit > 0 or s.buildable_energy_limit > 0)
        _accumulate(
            model, s.id, years, "ICS", s.planned_power_by_year, s.buildable_power_limit,
            inv.storage_power, inv.storage_power_build, inv.storage_power_retire if s.allow_retirement else None,
        )
        _accumulate(
            model, s.id, years, "ICE", s.planned_energy_by_year, s.buildable_energy_limit,
            inv.storage_energy, inv.storage_energy_build, inv.storage_energy_retire if s.allow_retirement else None,
        )
    return inv


def _accumulate(model, rid, years, tag, planned, limit, cap, build, retire):
    for y in years:
        cap[(rid, y)] = model.add_var(f"{tag}[{rid},{y}]", 0.0, INF)
        if limit > 0:
            build[(rid, y)] = model.add_var(f"{tag}b[{rid},{y}]", 0.0, limit)
        if retire is not None:
            retire[(rid, y)] = model.add_var(f"{tag}r[{rid},{y}]", 0.0, INF)
    for i, y in enumerate(years):
        e = LinExpr.of(cap[(rid, y)])
        for yy in years[: i + 1]:
            if (rid, yy) in build:
                e.add_term(build[(rid, yy)], -1.0)
            if retire is not None:
                e.add_term(retire[(rid, yy)], 1.0)
        model.add_constr(f"{tag}acc[{rid},{y}]", e, EQ, float(planned.get(y, 0.0)))
    if limit > 0 and len(years) > 1:
        model.add_constr(f"{tag}limit[{rid}]", LinExpr({build[(rid, y)]: 1.0 for y in years}), LE, limit)


def _cap_expr(table: Mapping, rid: str, year: int) -> LinExpr:
    return LinExpr.of(table[(rid, year)])


def maintenance_expression(scn, inv: InvestmentVars, year: int) -> LinExpr:
    e = LinExpr()
    for u in scn.thermal:
        e.add_term(inv.unit_status[(u.id, year)], u.maintenance_cost)
    for s in scn.storage:
        e.add_term(inv.storage_energy[(s.id, year)], s.maintenance_cost_energy)
        e.add_term(inv.storage_power[(s.id, year)], s.maintenance_cost_power)
    for r in scn.renewables:
        e.add_term(inv.renewable_cap[(r.id, year)], r.maintenance_cost)
    for h in scn.hydro:
        e.const += h.p_max * h.maintenance_cost
    return e


def investment_expression(scn, inv: InvestmentVars, year: int) -> LinExpr:
    """Annual financing payments due in ``year`` for builds made in this or earlier modeled years."""
    rate = scn.policy.discount_rate
    years = list(scn.grid.years)
    e = LinExpr()

    def charge(table, rid, cost_by_year, life):
        for yb in years:
            if yb > year or year - yb >= life or (rid, yb) not in table:
                continue
            e.add_term(table[(rid, yb)], by_year(cost_by_year, yb) * annuity_factor(rate, life))

    for u in scn.thermal:
        charge(inv.unit_build, u.id, u.capital_cost_by_year, u.financing_life)
    for s in scn.storage:
        charge(inv.storage_power_build, s.id, s.capital_cost_power_by_year, s.financing_life)
        charge(inv.storage_energy_build, s.id, s.capital_cost_energy_by_year, s.financing_life)
    for r in scn.renewables:
        charge(inv.renewable_build, r.id, r.capital_cost_by_year, r.financing_life)
    return e


def aggregate_objective(
    gen_cost: Mapping[tuple[int, str], LinExpr],
    maintenance: Mapping[int, LinExpr],
    investment: Mapping[int, LinExpr],
    grid: TimeGrid,
    year_weights: Mapping[int, float],
) -> LinExpr:
    """Sum over years of yearly weight times (weighted weekly operation + maintenance + investment)."""
    obj = LinExpr()
    for y in grid.years:
        yearly = LinExpr()
        for w in grid.weeks:
            yearly.iadd(gen_cost[(y, w.week_id)], w.weight)
        yearly.iadd(maintenance[y]).iadd(investment[y])
        obj.iadd(yearly, year_weights[y])
    return obj


def emissions_expression(
    year: int, grid: TimeGrid, blocks, thermal: Sequence[ThermalUnit], lines: Sequence[Line], policy_zone: str
) -> LinExpr:
    """Week-weighted tons from policy-zone units plus imports only.

    An import is positive flow on a line into the zone or negative flow on a
    line out of it; the direction-split flow variables carry exactly these.
    """
    e = LinExpr()
    for w in grid.weeks:
        blk = blocks[(year, w.week_id)]
        for t in blk.hours():
            for u in thermal:
                if u.zone_id == policy_zone:
                    e.add_term(blk.thermal[u.id].p[t], w.weight * u.emissions_rate)
            for ln in lines:
                if ln.to_zone == policy_zone:
                    e.add_term(blk.flow_pos[ln.id][t], w.weight * ln.import_emissions_rate)
                elif ln.from_zone == policy_zone:
                    e.add_term(blk.flow_neg[ln.id][t], w.weight * ln.import_emissions_rate)
    return e


def build_emissions_constraint(year: int, expr: LinExpr, cap: float, model: MixedIntegerModel) -> int:
    return model.add_constr(f"emissions[{year}]", expr, LE, cap)


def rps_expressions(year, grid, blocks, renewables, zones, policy_zone) -> tuple[LinExpr, float]:
    """Weighted eligible generation and weighted annual policy-zone load."""
    gen = LinExpr()
    load = 0.0
    zone = next(z for z in zones if z.id == policy_zone)
    for w in grid.weeks:
        blk = blocks[(year, w.week_id)]
        load += w.weight * float(series_at(zone.load_series, blk.key, blk.T, f"zone {zone.id} load").sum())
        for r in renewables:
            if r.rps_eligible and r.zone_id == policy_zone:
                for i in blk.renewable[r.id]:
                    gen.add_term(i, w.weight)
    return gen, load


def build_rps_constraint(year: int, gen: LinExpr, load: float, fraction: float, model: MixedIntegerModel) -> int:
    return model.add_constr(f"rps[{year}]", gen, GE, fraction * load)


def build_elcc_and_prm(
    year: int,
    surface: ELCCSurface,
    requirement: float,
    scn,
    inv: InvestmentVars,
    model: MixedIntegerModel,
) -> list[int]:
    """ELCC variables bounded by every facet, the 4-hour storage term, and the reserve-margin row."""
    pz = scn.policy_zone
    if not surface.facets.get(year) or not surface.storage_facets.get(year):
        raise ConfigError(f"ELCC surface has no facets for {year}")
    rows = []
    elcc = model.add_var(f"ELCC[{year}]", -INF, INF)
    elcc_s = model.add_var(f"ELCCS[{year}]", -INF, INF)
    axes = {"wind": LinExpr(), "solar": LinExpr()}
    for r in scn.renewables:
        if r.zone_id == pz and r.elcc_axis in axes:
            axes[r.elcc_axis].add_term(inv.renewable_cap[(r.id, year)], by_year(r.elcc_axis_multiplier_by_year, year, 1.0))
    for f, (icpt, sw, ss) in enumerate(surface.facets[year]):
        e = LinExpr.of(elcc) - axes["wind"] * sw - axes["solar"] * ss
        rows.append(model.add_constr(f"elcc[{year},{f}]", e, LE, icpt))
    duration = LinExpr()
    for s in scn.storage:
        if s.zone_id != pz:
            continue
        m = model.add_var(f"dur4[{s.id},{year}]", 0.0, INF)
        rows.append(model.add_constr(f"dur4p[{s.id},{year}]", LinExpr({m: 1.0, inv.storage_power[(s.id, year)]: -1.0}), LE))
        rows.append(
            model.add_constr(
                f"dur4e[{s.id},{year}]",
                LinExpr({m: 1.0, inv.storage_energy[(s.id, year)]: -1.0 / surface.four_hour_divisor}),
                LE,
            )
        )
        duration.add_term(m, by_year(s.elcc_multiplier_by_year, year, 1.0))
    for f, (icpt, sl) in enumerate(surface.storage_facets[year]):
        rows.append(model.add_constr(f"elccs[{year},{f}]", LinExpr.of(elcc_s) - duration * sl, LE, icpt))
    prm = LinExpr({elcc: 1.0, elcc_s: 1.0})
    for u in scn.thermal:
        if u.zone_id == pz:
            prm.add_term(inv.unit_status[(u.id, year)], u.p_max * u.nqc_fraction)
    for h in scn.hydro:
        if h.zone_id == pz:
            prm.const += h.p_max * h.nqc_fraction
    rows.append(model.add_constr(f"prm[{year}]", prm, GE, requirement))
    return rows


def build_planning_model(scn, name: str = "decarb") -> PlanningModel:
    """Assemble the full monolithic model for a scenario.

    ``scn`` needs ``grid``, ``zones``, ``lines``, ``thermal``, ``renewables``,
    ``hydro``, ``storage``, ``policy``, ``elcc`` and ``policy_zone``. Blocks are
    built in ``(year, week)`` order so variable and row order is reproducible.
    """
    grid: TimeGrid = scn.grid
    model = MixedIntegerModel(name)
    pz = scn.policy_zone
    years = list(grid.years)
    inv = build_investment_linking(scn.thermal, scn.renewables, scn.storage, years, pz, model)

    blocks: dict[tuple[int, str], WeekBlock] = {}
    balance_rows, balance_keys = [], []
    gen_cost = {}
    for y, w in grid.blocks():
        blk = WeekBlock(y, w, grid.T)
        blocks[(y, w)] = blk
        for u in scn.thermal:
            build_thermal_constraints(u, blk, model)
            for t in blk.hours():
                model.add_constr(
                    blk.name("gate", u.id, t),
                    LinExpr({blk.thermal[u.id].v[t]: 1.0, inv.unit_status[(u.id, y)]: -1.0}),
                    LE,
                )
        for r in scn.renewables:
            build_renewable_constraints(r, _cap_expr(inv.renewable_cap, r.id, y), blk, model)
        for h in scn.hydro:
            build_hydro_constraints(h, blk, model)
        storage_power = {}
        for s in scn.storage:
            storage_power[s.id] = _cap_expr(inv.storage_power, s.id, y)
            build_storage_constraints(s, storage_power[s.id], _cap_expr(inv.storage_energy, s.id, y), blk, model)
        residuals = build_network_and_balance(
            scn.zones, scn.lines, scn.thermal, scn.renewables, scn.hydro, scn.storage, blk, model
        )
        for z in scn.zones:
            for t in blk.hours():
                balance_rows.append(model.add_constr(blk.name("balance", z.id, t), residuals[z.id][t], EQ))
                balance_keys.append((z.id, y, w, t))
        for z in scn.zones:
            if z.is_policy_zone:
                build_reserve_constraints(z, scn.thermal, scn.renewables, scn.hydro, scn.storage, storage_power, blk, model)
        gen_cost[(y, w)] = uc_cost_expression(blk, scn.thermal, scn.renewables, scn.lines)

    policy_rows = {}
    emissions = {}
    for y in years:
        emissions[y] = emissions_expression(y, grid, blocks, scn.thermal, scn.lines, pz)
        cap = scn.policy.emissions_cap_by_year.get(y)
        if cap is not None:
            policy_rows[("emissions", y)] = build_emissions_constraint(y, emissions[y], cap, model)
        frac = scn.policy.rps_fraction_by_year.get(y, 0.0)
        if frac > 0:
            gen, load = rps_expressions(y, grid, blocks, scn.renewables, scn.zones, pz)
            policy_rows[("rps", y)] = build_rps_constraint(y, gen, load, frac, model)
        req = scn.policy.prm_requirement_by_year.get(y)
        if req is not None:
            policy_rows[("prm", y)] = build_elcc_and_prm(y, scn.elcc, req, scn, inv, model)[-1]

    maintenance = {y: maintenance_expression(scn, inv, y) for y in years}
    investment = {y: investment_expression(scn, inv, y) for y in years}
    weights = {y: yearly_weight(y, scn.policy, years) for y in years}
    model.set_objective(aggregate_objective(gen_cost, maintenance, investment, grid, weights))

    unit_vars = {u.id: [] for u in scn.thermal}
    power_vars = []
    for blk in blocks.values():
        for uid, tv in blk.thermal.items():
            unit_vars[uid].extend(tv.v + tv.p + tv.avail + tv.start + tv.stop)
        for (product, rid), idx in blk.reserves.items():
            if rid in unit_vars:
                unit_vars[rid].extend(idx)
        for idx in list(blk.renewable.values()) + list(blk.curtail.values()) + list(blk.hydro.values()):
            power_vars.extend(idx)
        for sv in blk.storage.values():
            power_vars.extend(sv.charge + sv.discharge)
        for idx in list(blk.flow_pos.values()) + list(blk.flow_neg.values()):
            power_vars.extend(idx)
    for table in (inv.unit_status, inv.unit_build, inv.unit_retire):
        for (uid, _), i in table.items():
            unit_vars[uid].append(i)

    return PlanningModel(
        model=model,
        grid=grid,
        policy_zone=pz,
        blocks=blocks,
        investment=inv,
        balance_rows=balance_rows,
        balance_keys=balance_keys,
        gen_cost=gen_cost,
        maintenance_cost=maintenance,
        investment_cost=investment,
        emissions=emissions,
        year_weights=weights,
        unit_vars={k: sorted(v) for k, v in unit_vars.items()},
        power_vars=sorted(power_vars),
        policy_rows=policy_rows,
    )
