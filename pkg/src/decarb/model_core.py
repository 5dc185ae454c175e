"""Single-week unit commitment on a circular hourly grid.

Every builder appends variables and rows for one ``(year, week)`` block to a
shared :class:`~decarb.milp.MixedIntegerModel` and records the indices it
created on a :class:`WeekBlock`, so the planning layer and the decomposition
loop can find them again by resource id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .milp import EQ, GE, INF, LE, LinExpr, MixedIntegerModel

FR, REG_UP, REG_DN, SPIN, LF_UP, LF_DN = "FR", "REG_UP", "REG_DN", "SPIN", "LF_UP", "LF_DN"
UP_PRODUCTS = (FR, REG_UP, SPIN, LF_UP)
DOWN_PRODUCTS = (REG_DN, LF_DN)
RESERVE_PRODUCTS = (FR, REG_UP, REG_DN, SPIN, LF_UP, LF_DN)


class GridError(ValueError):
    """Invalid time grid (non-positive period, bad weights, unordered years)."""


class DegeneracyError(ValueError):
    """A circular window would wrap onto itself."""


class DataGapError(KeyError):
    """A time series does not cover a requested hour."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing data"


class ConfigError(ValueError):
    """Inconsistent scenario data detected while building."""


def tau(t: int, T: int) -> int:
    """Canonical zero-based hour on a circle of ``T`` hours (negative ``t`` wraps backward)."""
    if T <= 0:
        raise GridError(f"period length must be positive, got {T}")
    return int(t) % int(T)


# --------------------------------------------------------------------------- types
@dataclass(frozen=True)
class WeekSample:
    week_id: str
    weight: float
    source_week_of_year: int = 1

    def __post_init__(self):
        if not self.weight > 0:
            raise GridError(f"week {self.week_id!r} has non-positive weight {self.weight}")
        if not 1 <= self.source_week_of_year <= 52:
            raise GridError(f"week {self.week_id!r}: source week must lie in 1..52")


@dataclass(frozen=True)
class TimeGrid:
    weeks: tuple[WeekSample, ...]
    years: tuple[int, ...]
    hours_per_week: int = 168

    def __post_init__(self):
        object.__setattr__(self, "weeks", tuple(self.weeks))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        if self.hours_per_week < 2:
            raise GridError("hours_per_week must be at least 2")
        if not self.years or any(b <= a for a, b in zip(self.years, self.years[1:])):
            raise GridError("years must be non-empty and strictly increasing")
        if not self.weeks:
            raise GridError("at least one week sample is required")
        ids = [w.week_id for w in self.weeks]
        if len(set(ids)) != len(ids):
            raise GridError("week ids must be unique")
        total = sum(w.weight for w in self.weeks)
        if abs(total - 52.0) > 1e-9:
            raise GridError(f"week weights sum to {total}, expected 52")

    @property
    def T(self) -> int:
        return self.hours_per_week

    @property
    def week_ids(self) -> list[str]:
        return [w.week_id for w in self.weeks]

    def weight(self, week_id: str) -> float:
        for w in self.weeks:
            if w.week_id == week_id:
                return w.weight
        raise KeyError(week_id)

    def blocks(self) -> list[tuple[int, str]]:
        return [(y, w.week_id) for y in self.years for w in self.weeks]


# Hourly data are keyed by (year, week_id) and hold arrays of length T.
Series = Mapping[tuple[int, str], np.ndarray]


def series_at(series: Series, key: tuple[int, str], T: int, owner: str) -> np.ndarray:
    """Fetch one week of an hourly series, naming the gap precisely when absent."""
    year, week = key
    if key not in series:
        raise DataGapError(f"{owner}: no data for year {year}, week {week}")
    arr = np.asarray(series[key], dtype=float)
    if arr.shape[0] < T or not np.all(np.isfinite(arr[:T])):
        bad = arr.shape[0] if arr.shape[0] < T else int(np.flatnonzero(~np.isfinite(arr[:T]))[0])
        raise DataGapError(f"{owner}: missing value for year {year}, week {week}, hour {bad}")
    return arr[:T]


def by_year(table: Mapping[int, float], year: int, default: float = 0.0) -> float:
    return float(table.get(year, default)) if table else default


@dataclass(frozen=True)
class ThermalUnit:
    id: str
    zone_id: str
    p_min: float
    p_max: float
    min_uptime: int = 1
    min_downtime: int = 1
    ramp_up: float | None = None
    ramp_down: float | None = None
    startup_limit: float | None = None
    shutdown_limit: float | None = None
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    gen_cost_slope: float = 0.0
    gen_cost_intercept: float = 0.0
    emissions_rate: float = 0.0
    nqc_fraction: float = 1.0
    maintenance_cost: float = 0.0
    capital_cost_by_year: Mapping[int, float] = field(default_factory=dict)
    planned_status_by_year: Mapping[int, int] = field(default_factory=dict)
    retirable: bool = False
    buildable: bool = False
    ten_minute_ramp: float | None = None
    freq_response_fraction: float = 0.08
    financing_life: int = 20

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError(f"thermal {self.id}: need 0 <= p_min <= p_max")
        if self.min_uptime < 1 or self.min_downtime < 1:
            raise ConfigError(f"thermal {self.id}: min up/down times must be >= 1")
        if self.su < self.p_min or self.sd < self.p_min:
            raise ConfigError(f"thermal {self.id}: startup/shutdown limits must be >= p_min")

    # Limits default to "no restriction"; start/stop limits are clipped to p_max.
    @property
    def ru(self) -> float:
        return self.p_max if self.ramp_up is None else self.ramp_up

    @property
    def rd(self) -> float:
        return self.p_max if self.ramp_down is None else self.ramp_down

    @property
    def su(self) -> float:
        return self.p_max if self.startup_limit is None else min(self.startup_limit, self.p_max)

    @property
    def sd(self) -> float:
        return self.p_max if self.shutdown_limit is None else min(self.shutdown_limit, self.p_max)

    @property
    def tmr(self) -> float:
        return self.p_max if self.ten_minute_ramp is None else self.ten_minute_ramp

    def planned(self, year: int) -> int:
        return int(self.planned_status_by_year.get(year, 0))


@dataclass(frozen=True)
class RenewableResource:
    id: str
    zone_id: str
    production_factor_series: Series
    curtailment_cost: float = 0.0
    is_firm: bool = False
    rps_eligible: bool = True
    elcc_axis: str = "none"
    elcc_axis_multiplier_by_year: Mapping[int, float] = field(default_factory=dict)
    planned_capacity_by_year: Mapping[int, float] = field(default_factory=dict)
    buildable_limit: float = 0.0
    capital_cost_by_year: Mapping[int, float] = field(default_factory=dict)
    maintenance_cost: float = 0.0
    financing_life: int = 20

    def __post_init__(self):
        if self.elcc_axis not in ("wind", "solar", "none"):
            raise ConfigError(f"renewable {self.id}: elcc_axis must be wind, solar or none")
        for key, arr in self.production_factor_series.items():
            arr = np.asarray(arr, dtype=float)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ConfigError(f"renewable {self.id}: production factor outside [0, 1] in {key}")

    @property
    def provides_load_following(self) -> bool:
        return not self.is_firm and self.elcc_axis in ("wind", "solar")


@dataclass(frozen=True)
class HydroResource:
    id: str
    zone_id: str
    p_min: float
    p_max: float
    ramp_limit: float
    weekly_energy_budget: Mapping[tuple[int, str], float]
    nqc_fraction: float = 1.0
    maintenance_cost: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError(f"hydro {self.id}: need 0 <= p_min <= p_max")
        if self.ramp_limit < 0:
            raise ConfigError(f"hydro {self.id}: ramp limit must be >= 0")


@dataclass(frozen=True)
class StorageResource:
    id: str
    zone_id: str
    max_charge_rate: float = 1.0  # per MW of installed power capacity
    max_discharge_rate: float = 1.0
    soc_min_fraction: float = 0.0
    soc_max_fraction: float = 1.0
    charge_efficiency: float = 1.0
    discharge_efficiency: float = 1.0
    self_discharge: float = 0.0
    elcc_multiplier_by_year: Mapping[int, float] = field(default_factory=dict)
    maintenance_cost_power: float = 0.0
    maintenance_cost_energy: float = 0.0
    capital_cost_power_by_year: Mapping[int, float] = field(default_factory=dict)
    capital_cost_energy_by_year: Mapping[int, float] = field(default_factory=dict)
    planned_power_by_year: Mapping[int, float] = field(default_factory=dict)
    planned_energy_by_year: Mapping[int, float] = field(default_factory=dict)
    buildable_power_limit: float = 0.0
    buildable_energy_limit: float = 0.0
    allow_retirement: bool = False
    financing_life: int = 20

    def __post_init__(self):
        if not 0 <= self.soc_min_fraction < self.soc_max_fraction <= 1:
            raise ConfigError(f"storage {self.id}: need 0 <= soc_min_fraction < soc_max_fraction <= 1")
        if not (0 < self.charge_efficiency <= 1 and 0 < self.discharge_efficiency <= 1):
            raise ConfigError(f"storage {self.id}: efficiencies must lie in (0, 1]")
        if not 0 <= self.self_discharge < 1:
            raise ConfigError(f"storage {self.id}: self discharge must lie in [0, 1)")

    def power_bound(self) -> float:
        """Largest power capacity any year can reach (used as big-M)."""
        planned = max(self.planned_power_by_year.values(), default=0.0)
        return float(planned + self.buildable_power_limit)


@dataclass(frozen=True)
class ReserveSpec:
    freq_response_mw: float = 770.0
    freq_response_min_battery_gas_fraction: float = 0.5
    regulation_up_fraction_of_load: float = 0.01
    regulation_down_fraction_of_load: float = 0.01
    spin_fraction_of_load: float = 0.01
    load_following_up_series: Series = field(default_factory=dict)
    load_following_down_series: Series = field(default_factory=dict)

    def __post_init__(self):
        fracs = (
            self.freq_response_min_battery_gas_fraction,
            self.regulation_up_fraction_of_load,
            self.regulation_down_fraction_of_load,
            self.spin_fraction_of_load,
        )
        if self.freq_response_mw < 0 or any(not 0 <= f <= 1 for f in fracs):
            raise ConfigError("reserve requirements must be >= 0 and fractions <= 1")


@dataclass(frozen=True)
class Zone:
    id: str
    load_series: Series
    is_policy_zone: bool = False
    reserve_requirements: ReserveSpec | None = None


@dataclass(frozen=True)
class Line:
    id: str
    from_zone: str
    to_zone: str
    flow_min: float
    flow_max: float
    wheeling_cost: float = 0.0
    import_emissions_rate: float = 0.0

    def __post_init__(self):
        if not self.flow_min <= 0 <= self.flow_max:
            raise ConfigError(f"line {self.id}: need flow_min <= 0 <= flow_max")
        if self.from_zone == self.to_zone:
            raise ConfigError(f"line {self.id}: endpoints must differ")


# --------------------------------------------------------------------------- block
@dataclass
class ThermalVars:
    v: list[int]
    p: list[int]
    avail: list[int]
    start: list[int]
    stop: list[int]


@dataclass
class StorageVars:
    charge: list[int]
    discharge: list[int]
    soc: list[int]
    mode: list[int]


@dataclass
class WeekBlock:
    """Index bookkeeping for one ``(year, week)`` unit-commitment block."""

    year: int
    week: str
    T: int
    thermal: dict[str, ThermalVars] = field(default_factory=dict)
    renewable: dict[str, list[int]] = field(default_factory=dict)
    curtail: dict[str, list[int]] = field(default_factory=dict)
    hydro: dict[str, list[int]] = field(default_factory=dict)
    storage: dict[str, StorageVars] = field(default_factory=dict)
    flow_pos: dict[str, list[int]] = field(default_factory=dict)
    flow_neg: dict[str, list[int]] = field(default_factory=dict)
    # (product, resource id) -> per-hour reserve variable indices
    reserves: dict[tuple[str, str], list[int]] = field(default_factory=dict)

    @property
    def key(self) -> tuple[int, str]:
        return (self.year, self.week)

    def name(self, kind: str, rid: str, t: int) -> str:
        return f"{kind}[{rid},{self.year},{self.week},{t}]"

    def hours(self) -> range:
        return range(self.T)


def _sum(idx: Sequence[int], coef: float = 1.0) -> LinExpr:
    out = LinExpr()
    for i in idx:
        out.add_term(i, coef)
    return out


# --------------------------------------------------------------------------- builders
def build_thermal_constraints(unit: ThermalUnit, block: WeekBlock, model: MixedIntegerModel) -> list[int]:
    """Commitment, output, min up/down, ramping and start/stop indicator rows for one unit.

    Up/down windows cover hours ``t .. t+UT-1`` so that an on-run of exactly
    ``UT`` hours is feasible.
    """
    T = block.T
    UT, DT = unit.min_uptime, unit.min_downtime
    if UT > T or DT > T:
        raise DegeneracyError(f"thermal {unit.id}: min up/down time exceeds the {T}-hour circle")
    nm = lambda kind, t: block.name(kind, unit.id, t)  # noqa: E731
    tv = ThermalVars(
        v=[model.add_var(nm("v", t), binary=True) for t in block.hours()],
        p=[model.add_var(nm("p", t), 0.0, unit.p_max) for t in block.hours()],
        avail=[model.add_var(nm("pavail", t), 0.0, unit.p_max) for t in block.hours()],
        start=[model.add_var(nm("start", t), 0.0, 1.0) for t in block.hours()],
        stop=[model.add_var(nm("stop", t), 0.0, 1.0) for t in block.hours()],
    )
    block.thermal[unit.id] = tv
    v, p = tv.v, tv.p
    Pmax, Pmin = unit.p_max, unit.p_min
    rows = []
    for t in block.hours():
        tp, tn = tau(t - 1, T), tau(t + 1, T)
        add = lambda kind, expr, sense, rhs=0.0: rows.append(  # noqa: E731
            model.add_constr(nm(kind, t), expr, sense, rhs)
        )
        add("pmin", LinExpr({p[t]: 1.0, v[t]: -Pmin}), GE)
        add("pavail", LinExpr({p[t]: 1.0, tv.avail[t]: -1.0}), LE)
        add("pmax", LinExpr({tv.avail[t]: 1.0, v[t]: -Pmax}), LE)
        if UT > 1:
            e = _sum([v[tau(n, T)] for n in range(t, t + UT)])
            e.add_term(v[t], -UT).add_term(v[tp], UT)
            add("uptime", e, GE)
        if DT > 1:
            e = _sum([v[tau(n, T)] for n in range(t, t + DT)], -1.0)
            e.add_term(v[t], DT).add_term(v[tp], -DT)
            add("downtime", e, GE, -DT)
        e = LinExpr({p[t]: 1.0}).add_term(p[tp], -1.0)
        e.add_term(v[tp], -unit.ru + unit.su).add_term(v[t], -unit.su + Pmax)
        add("rampup", e, LE, Pmax)
        e = LinExpr({p[t]: 1.0}).add_term(v[tn], -Pmax + unit.sd).add_term(v[t], -unit.sd)
        add("sdramp", e, LE)
        e = LinExpr({p[t]: 1.0}).add_term(p[tp], -1.0)
        e.add_term(v[t], unit.rd - unit.sd).add_term(v[tp], unit.sd - Pmax)
        add("rampdown", e, GE, -Pmax)
        add("startlink", LinExpr({tv.start[t]: 1.0, v[t]: -1.0}).add_term(v[tp], 1.0), GE)
        add("stoplink", LinExpr({tv.stop[t]: 1.0, v[tp]: -1.0}).add_term(v[t], 1.0), GE)
    return rows


def build_renewable_constraints(
    r: RenewableResource, installed_mw: LinExpr | float, block: WeekBlock, model: MixedIntegerModel
) -> list[int]:
    """Output equals installed capacity times production factor minus curtailment.

    ``curt <= IC * PF`` follows from the equality and ``p >= 0``. Firm resources
    have no curtailment variable at all.
    """
    pf = series_at(r.production_factor_series, block.key, block.T, f"renewable {r.id}")
    cap = installed_mw if isinstance(installed_mw, LinExpr) else LinExpr(const=float(installed_mw))
    p = [model.add_var(block.name("p", r.id, t), 0.0, INF) for t in block.hours()]
    block.renewable[r.id] = p
    curt = None
    if not r.is_firm:
        curt = [model.add_var(block.name("curt", r.id, t), 0.0, INF) for t in block.hours()]
        block.curtail[r.id] = curt
    rows = []
    for t in block.hours():
        e = LinExpr({p[t]: 1.0}) - cap * pf[t]
        if curt is not None:
            e.add_term(curt[t], 1.0)
        rows.append(model.add_constr(block.name("renew", r.id, t), e, EQ))
    return rows


def build_hydro_constraints(h: HydroResource, block: WeekBlock, model: MixedIntegerModel) -> list[int]:
    """Weekly energy budget, circular ramp band and output bounds."""
    if block.key not in h.weekly_energy_budget:
        raise DataGapError(f"hydro {h.id}: no energy budget for year {block.year}, week {block.week}")
    budget = float(h.weekly_energy_budget[block.key])
    p = [model.add_var(block.name("p", h.id, t), h.p_min, h.p_max) for t in block.hours()]
    block.hydro[h.id] = p
    rows = [model.add_constr(f"hbudget[{h.id},{block.year},{block.week}]", _sum(p), LE, budget)]
    for t in block.hours():
        step = LinExpr({p[tau(t + 1, block.T)]: 1.0}).add_term(p[t], -1.0)
        rows.append(model.add_constr(block.name("hrampup", h.id, t), step, LE, h.ramp_limit))
        rows.append(model.add_constr(block.name("hrampdn", h.id, t), step, GE, -h.ramp_limit))
    return rows


def build_storage_constraints(
    s: StorageResource,
    power_cap: LinExpr | float,
    energy_cap: LinExpr | float,
    block: WeekBlock,
    model: MixedIntegerModel,
    big_m: float | None = None,
) -> list[int]:
    """Mode-exclusive charge/discharge, state-of-charge bounds and the circular SoC recursion.

    ``big_m`` bounds the installed power capacity in any year; it defaults to
    planned plus buildable power.
    """
    pc_cap = power_cap if isinstance(power_cap, LinExpr) else LinExpr(const=float(power_cap))
    e_cap = energy_cap if isinstance(energy_cap, LinExpr) else LinExpr(const=float(energy_cap))
    M = s.power_bound() if big_m is None else float(big_m)
    Mc, Md = M * s.max_charge_rate, M * s.max_discharge_rate
    nm = lambda kind, t: block.name(kind, s.id, t)  # noqa: E731
    sv = StorageVars(
        charge=[model.add_var(nm("pc", t), 0.0, Mc) for t in block.hours()],
        discharge=[model.add_var(nm("pd", t), 0.0, Md) for t in block.hours()],
        soc=[model.add_var(nm("soc", t), 0.0, INF) for t in block.hours()],
        mode=[model.add_var(nm("mode", t), binary=True) for t in block.hours()],
    )
    block.storage[s.id] = sv
    keep = 1.0 - s.self_discharge
    rows = []
    for t in block.hours():
        pc, pd, soc, mode = sv.charge[t], sv.discharge[t], sv.soc[t], sv.mode[t]
        add = lambda kind, expr, sense, rhs=0.0: rows.append(  # noqa: E731
            model.add_constr(nm(kind, t), expr, sense, rhs)
        )
        add("pcmax", LinExpr({pc: 1.0}) - pc_cap * s.max_charge_rate, LE)
        add("pdmax", LinExpr({pd: 1.0}) - pc_cap * s.max_discharge_rate, LE)
        add("pcmode", LinExpr({pc: 1.0, mode: Mc}), LE, Mc)
        add("pdmode", LinExpr({pd: 1.0, mode: -Md}), LE)
        add("socmin", LinExpr({soc: 1.0}) - e_cap * s.soc_min_fraction, GE)
        add("socmax", LinExpr({soc: 1.0}) - e_cap * s.soc_max_fraction, LE)
        e = LinExpr({soc: 1.0, pc: -s.charge_efficiency, pd: 1.0 / s.discharge_efficiency})
        e.add_term(sv.soc[tau(t - 1, block.T)], -keep)
        add("socbal", e, EQ)
    return rows


def build_network_and_balance(
    zones: Sequence[Zone],
    lines: Sequence[Line],
    thermal: Sequence[ThermalUnit],
    renewables: Sequence[RenewableResource],
    hydro: Sequence[HydroResource],
    storage: Sequence[StorageResource],
    block: WeekBlock,
    model: MixedIntegerModel,
) -> dict[str, list[LinExpr]]:
    """Declare direction-split flows and return balance residuals per zone and hour.

    The residual is supply plus net imports minus load. Nothing is asserted
    here; the caller either pins each residual to zero or relaxes it.
    """
    zone_ids = {z.id for z in zones}
    for ln in lines:
        for end in (ln.from_zone, ln.to_zone):
            if end not in zone_ids:
                raise ConfigError(f"line {ln.id} references unknown zone {end!r}")
        block.flow_pos[ln.id] = [
            model.add_var(block.name("fpos", ln.id, t), 0.0, ln.flow_max) for t in block.hours()
        ]
        block.flow_neg[ln.id] = [
            model.add_var(block.name("fneg", ln.id, t), 0.0, -ln.flow_min) for t in block.hours()
        ]
    residuals: dict[str, list[LinExpr]] = {}
    for z in zones:
        load = series_at(z.load_series, block.key, block.T, f"zone {z.id} load")
        out = []
        for t in block.hours():
            e = LinExpr(const=-float(load[t]))
            for u in thermal:
                if u.zone_id == z.id:
                    e.add_term(block.thermal[u.id].p[t], 1.0)
            for r in renewables:
                if r.zone_id == z.id:
                    e.add_term(block.renewable[r.id][t], 1.0)
            for h in hydro:
                if h.zone_id == z.id:
                    e.add_term(block.hydro[h.id][t], 1.0)
            for s in storage:
                if s.zone_id == z.id:
                    e.add_term(block.storage[s.id].discharge[t], 1.0)
                    e.add_term(block.storage[s.id].charge[t], -1.0)
            for ln in lines:
                sign = 1.0 if ln.to_zone == z.id else -1.0 if ln.from_zone == z.id else 0.0
                if sign:
                    e.add_term(block.flow_pos[ln.id][t], sign)
                    e.add_term(block.flow_neg[ln.id][t], -sign)
            out.append(e)
        residuals[z.id] = out
    return residuals


def build_reserve_constraints(
    zone: Zone,
    thermal: Sequence[ThermalUnit],
    renewables: Sequence[RenewableResource],
    hydro: Sequence[HydroResource],
    storage: Sequence[StorageResource],
    storage_power: Mapping[str, LinExpr | float],
    block: WeekBlock,
    model: MixedIntegerModel,
) -> list[int]:
    """Ancillary-service requirements for the policy zone.

    Each provider carries all its products and its energy dispatch inside one
    headroom (or footroom) pool. Thermal frequency response is capped by a
    fraction of current output, other thermal products by the ten-minute ramp.
    Wind and solar offer load following only, up through curtailed energy and
    down through output, and together cover at most half of each requirement.
    """
    spec = zone.reserve_requirements or ReserveSpec()
    key, T = block.key, block.T
    load = series_at(zone.load_series, key, T, f"zone {zone.id} load")
    lf_up = series_at(spec.load_following_up_series, key, T, f"zone {zone.id} load-following up")
    lf_dn = series_at(spec.load_following_down_series, key, T, f"zone {zone.id} load-following down")

    units = [u for u in thermal if u.zone_id == zone.id]
    hyd = [h for h in hydro if h.zone_id == zone.id]
    sto = [s for s in storage if s.zone_id == zone.id]
    vre = [r for r in renewables if r.zone_id == zone.id and r.provides_load_following]

    def declare(product, rid):
        idx = [model.add_var(block.name(f"res_{product}", rid, t), 0.0, INF) for t in block.hours()]
        block.reserves[(product, rid)] = idx
        return idx

    for rid in [u.id for u in units] + [h.id for h in hyd] + [s.id for s in sto]:
        for product in RESERVE_PRODUCTS:
            declare(product, rid)
    for r in vre:
        declare(LF_UP, r.id)
        declare(LF_DN, r.id)

    rows = []
    res = block.reserves
    for t in block.hours():
        def add(kind, rid, expr, sense, rhs=0.0):
            rows.append(model.add_constr(block.name(kind, rid, t), expr, sense, rhs))

        for u in units:
            tv, rid = block.thermal[u.id], u.id
            add("fr_cap", rid, LinExpr({res[(FR, rid)][t]: 1.0, tv.p[t]: -u.freq_response_fraction}), LE)
            for product in RESERVE_PRODUCTS:
                if product != FR:
                    add(f"ramp_{product}", rid, LinExpr({res[(product, rid)][t]: 1.0, tv.v[t]: -u.tmr}), LE)
            up = _sum([res[(k, rid)][t] for k in UP_PRODUCTS]).add_term(tv.p[t], 1.0).add_term(tv.avail[t], -1.0)
            add("headroom", rid, up, LE)
            dn = LinExpr({tv.p[t]: 1.0, tv.v[t]: -u.p_min}) - _sum([res[(k, rid)][t] for k in DOWN_PRODUCTS])
            add("footroom", rid, dn, GE)
        for h in hyd:
            p = block.hydro[h.id][t]
            add("headroom", h.id, _sum([res[(k, h.id)][t] for k in UP_PRODUCTS]).add_term(p, 1.0), LE, h.p_max)
            add("footroom", h.id, LinExpr({p: 1.0}) - _sum([res[(k, h.id)][t] for k in DOWN_PRODUCTS]), GE, h.p_min)
        for s in sto:
            sv = block.storage[s.id]
            cap = storage_power[s.id]
            cap = cap if isinstance(cap, LinExpr) else LinExpr(const=float(cap))
            up = _sum([res[(k, s.id)][t] for k in UP_PRODUCTS]).add_term(sv.discharge[t], 1.0)
            up.add_term(sv.charge[t], -1.0)
            add("headroom", s.id, up - cap * s.max_discharge_rate, LE)
            dn = _sum([res[(k, s.id)][t] for k in DOWN_PRODUCTS]).add_term(sv.charge[t], 1.0)
            dn.add_term(sv.discharge[t], -1.0)
            add("footroom", s.id, dn - cap * s.max_charge_rate, LE)
        for r in vre:
            add("lfup_curt", r.id, LinExpr({res[(LF_UP, r.id)][t]: 1.0, block.curtail[r.id][t]: -1.0}), LE)
            add("lfdn_out", r.id, LinExpr({res[(LF_DN, r.id)][t]: 1.0, block.renewable[r.id][t]: -1.0}), LE)

        dispatchable = [u.id for u in units] + [h.id for h in hyd] + [s.id for s in sto]
        gas_batt = [u.id for u in units] + [s.id for s in sto]
        need = {
            FR: spec.freq_response_mw,
            REG_UP: spec.regulation_up_fraction_of_load * load[t],
            REG_DN: spec.regulation_down_fraction_of_load * load[t],
            SPIN: spec.spin_fraction_of_load * load[t],
            LF_UP: lf_up[t],
            LF_DN: lf_dn[t],
        }
        for product in RESERVE_PRODUCTS:
            providers = dispatchable + ([r.id for r in vre] if product in (LF_UP, LF_DN) else [])
            add(f"req_{product}", zone.id, _sum([res[(product, rid)][t] for rid in providers]), GE, need[product])
        add(
            "req_FR_gas_batt",
            zone.id,
            _sum([res[(FR, rid)][t] for rid in gas_batt]),
            GE,
            spec.freq_response_min_battery_gas_fraction * spec.freq_response_mw,
        )
        for product in (LF_UP, LF_DN):
            if vre:
                add(f"vre_cap_{product}", zone.id, _sum([res[(product, r.id)][t] for r in vre]), LE, 0.5 * need[product])
    return rows


def uc_cost_expression(
    block: WeekBlock,
    thermal: Sequence[ThermalUnit],
    renewables: Sequence[RenewableResource],
    lines: Sequence[Line],
) -> LinExpr:
    """Start/stop, no-load, incremental fuel, wheeling and curtailment cost of one week."""
    cost = LinExpr()
    for u in thermal:
        tv = block.thermal[u.id]
        for t in block.hours():
            cost.add_term(tv.start[t], u.startup_cost)
            cost.add_term(tv.stop[t], u.shutdown_cost)
            cost.add_term(tv.v[t], u.gen_cost_intercept)
            cost.add_term(tv.p[t], u.gen_cost_slope)
    for ln in lines:
        for t in block.hours():
            cost.add_term(block.flow_pos[ln.id][t], ln.wheeling_cost)
            cost.add_term(block.flow_neg[ln.id][t], ln.wheeling_cost)
    for r in renewables:
        if r.id in block.curtail:
            for t in block.hours():
                cost.add_term(block.curtail[r.id][t], r.curtailment_cost)
    return cost


def circular_run_lengths(pattern: Sequence[int]) -> list[tuple[int, int]]:
    """``(value, length)`` of each maximal run on the circle; a constant pattern is one run."""
    T = len(pattern)
    if T == 0:
        return []
    if all(x == pattern[0] for x in pattern):
        return [(int(pattern[0]), T)]
    start = next(t for t in range(T) if pattern[t] != pattern[t - 1])
    runs, t = [], 0
    while t < T:
        val, n = pattern[(start + t) % T], 0
        while t < T and pattern[(start + t) % T] == val:
            n += 1
            t += 1
        runs.append((int(val), n))
    return runs


def feasible_commitment(unit: ThermalUnit, pattern: Sequence[int]) -> bool:
    """Direct rule check of a circular on/off pattern for a single unit.

    Runs must respect min up/down times. Output is then traced forward from
    ``p_min`` on every on-hour, which satisfies start, stop and ramp limits
    whenever those limits admit ``p_min`` at all.
    """
    T = len(pattern)
    if unit.min_uptime > T or unit.min_downtime > T:
        return False
    for val, n in circular_run_lengths(pattern):
        if n == T:
            return True
        if val == 1 and n < unit.min_uptime:
            return False
        if val == 0 and n < unit.min_downtime:
            return False
    p = [unit.p_min if on else 0.0 for on in pattern]
    for t in range(T):
        prev, on, nxt = pattern[t - 1], pattern[t], pattern[(t + 1) % T]
        if on and not prev and p[t] > unit.su:
            return False
        if on and not nxt and p[t] > unit.sd:
            return False
    return True

