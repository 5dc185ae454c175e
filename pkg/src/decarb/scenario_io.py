"""Scenario manifests, validation, result tables and reports.

A scenario is a JSON manifest plus one CSV per hourly series with the columns
``year, week, hour, value``. Loading never stops at the first problem: every
violation is collected with the JSON pointer of the offending entry and raised
together as a :class:`ScenarioError`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .model_core import (
    ConfigError,
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
)
from .planning import ELCCSurface, PolicySchedules
from .sampler import read_candidate_csv
from .slblr import SlblrConfig

logger = logging.getLogger(__name__)

BUNDLED = ("two_zone_toy",)

# --------------------------------------------------------------------------- schema
_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_frac = {"type": "number", "minimum": 0, "maximum": 1}
_yearly = {"oneOf": [_num, {"type": "object", "patternProperties": {r"^\d{4}$": _num}, "additionalProperties": False}]}
_yearly_nonneg = {
    "oneOf": [_nonneg, {"type": "object", "patternProperties": {r"^\d{4}$": _nonneg}, "additionalProperties": False}]
}


def _obj(required, **props):
    return {"type": "object", "required": list(required), "properties": props, "additionalProperties": False}


SCHEMA = _obj(
    ["scenario_id", "time", "zones", "policy", "elcc"],
    scenario_id={"type": "string", "minLength": 1},
    seed={"type": "integer"},
    time=_obj(
        ["years", "weeks"],
        hours_per_week={"type": "integer", "minimum": 2},
        years={"type": "array", "items": {"type": "integer"}, "minItems": 1},
        weeks={
            "type": "array",
            "minItems": 1,
            "items": _obj(
                ["week_id", "weight"],
                week_id={"type": "string", "minLength": 1},
                weight={"type": "number", "exclusiveMinimum": 0},
                source_week_of_year={"type": "integer", "minimum": 1, "maximum": 52},
            ),
        },
    ),
    zones={
        "type": "array",
        "minItems": 1,
        "items": _obj(
            ["id", "load"],
            id={"type": "string"},
            policy_zone={"type": "boolean"},
            load={"type": "string"},
            reserves=_obj(
                [],
                freq_response_mw=_nonneg,
                freq_response_min_battery_gas_fraction=_frac,
                regulation_up_fraction_of_load=_frac,
                regulation_down_fraction_of_load=_frac,
                spin_fraction_of_load=_frac,
                load_following_up={"type": "string"},
                load_following_down={"type": "string"},
            ),
        ),
    },
    lines={
        "type": "array",
        "items": _obj(
            ["id", "from_zone", "to_zone", "flow_min", "flow_max"],
            id={"type": "string"},
            from_zone={"type": "string"},
            to_zone={"type": "string"},
            flow_min={"type": "number", "maximum": 0},
            flow_max=_nonneg,
            wheeling_cost=_nonneg,
            import_emissions_rate=_nonneg,
        ),
    },
    thermal={
        "type": "array",
        "items": _obj(
            ["id", "zone", "p_min", "p_max"],
            id={"type": "string"},
            zone={"type": "string"},
            p_min=_nonneg,
            p_max=_nonneg,
            min_uptime={"type": "integer", "minimum": 1},
            min_downtime={"type": "integer", "minimum": 1},
            ramp_up=_nonneg,
            ramp_down=_nonneg,
            startup_limit=_nonneg,
            shutdown_limit=_nonneg,
            startup_cost=_nonneg,
            shutdown_cost=_nonneg,
            gen_cost_slope=_nonneg,
            gen_cost_intercept=_nonneg,
            emissions_rate=_nonneg,
            nqc_fraction=_frac,
            maintenance_cost=_nonneg,
            capital_cost=_yearly_nonneg,
            planned_status=_yearly,
            retirable={"type": "boolean"},
            buildable={"type": "boolean"},
            ten_minute_ramp=_nonneg,
            freq_response_fraction=_frac,
            financing_life={"type": "integer", "minimum": 1},
        ),
    },
    renewables={
        "type": "array",
        "items": _obj(
            ["id", "zone", "production_factor"],
            id={"type": "string"},
            zone={"type": "string"},
            production_factor={"type": "string"},
            curtailment_cost=_nonneg,
            is_firm={"type": "boolean"},
            rps_eligible={"type": "boolean"},
            elcc_axis={"enum": ["wind", "solar", "none"]},
            elcc_axis_multiplier=_yearly_nonneg,
            planned_capacity=_yearly_nonneg,
            buildable_limit=_nonneg,
            capital_cost=_yearly_nonneg,
            maintenance_cost=_nonneg,
            financing_life={"type": "integer", "minimum": 1},
        ),
    },
    hydro={
        "type": "array",
        "items": _obj(
            ["id", "zone", "p_min", "p_max", "ramp_limit", "weekly_energy_budget"],
            id={"type": "string"},
            zone={"type": "string"},
            p_min=_nonneg,
            p_max=_nonneg,
            ramp_limit=_nonneg,
            weekly_energy_budget={
                "oneOf": [
                    _nonneg,
                    {
                        "type": "array",
                        "items": _obj(["year", "week", "value"], year={"type": "integer"},
                                      week={"type": "string"}, value=_nonneg),
                    },
                ]
            },
            nqc_fraction=_frac,
            maintenance_cost=_nonneg,
        ),
    },
    storage={
        "type": "array",
        "items": _obj(
            ["id", "zone"],
            id={"type": "string"},
            zone={"type": "string"},
            max_charge_rate=_nonneg,
            max_discharge_rate=_nonneg,
            soc_min_fraction=_num,
            soc_max_fraction=_num,
            charge_efficiency=_num,
            discharge_efficiency=_num,
            self_discharge=_num,
            elcc_multiplier=_yearly_nonneg,
            maintenance_cost_power=_nonneg,
            maintenance_cost_energy=_nonneg,
            capital_cost_power=_yearly_nonneg,
            capital_cost_energy=_yearly_nonneg,
            planned_power=_yearly_nonneg,
            planned_energy=_yearly_nonneg,
            buildable_power_limit=_nonneg,
            buildable_energy_limit=_nonneg,
            allow_retirement={"type": "boolean"},
            financing_life={"type": "integer", "minimum": 1},
        ),
    },
    policy=_obj(
        [],
        emissions_cap=_yearly_nonneg,
        rps_fraction={"oneOf": [_frac, {"type": "object", "patternProperties": {r"^\d{4}$": _frac},
                                        "additionalProperties": False}]},
        prm_requirement=_yearly_nonneg,
        discount_rate={"type": "number", "exclusiveMinimum": -1},
        base_year={"type": "integer"},
        horizon_end_year={"type": "integer"},
    ),
    elcc=_obj(
        ["facets", "storage_facets"],
        facets={"oneOf": [{"type": "array"}, {"type": "object"}]},
        storage_facets={"oneOf": [{"type": "array"}, {"type": "object"}]},
    ),
    slblr={"type": "object"},
    sampler=_obj(
        [],
        target_count={"type": "integer", "minimum": 1},
        bins={"type": "integer", "minimum": 1},
        candidate_weeks={"type": "string"},
    ),
)


# --------------------------------------------------------------------------- errors
@dataclass(frozen=True)
class Issue:
    pointer: str
    message: str

    def __str__(self):
        return f"{self.pointer or '/'}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, issues: list[Issue]):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


# --------------------------------------------------------------------------- config
@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    seed: int
    grid: TimeGrid
    zones: tuple[Zone, ...]
    lines: tuple[Line, ...]
    thermal: tuple[ThermalUnit, ...]
    renewables: tuple[RenewableResource, ...]
    hydro: tuple[HydroResource, ...]
    storage: tuple[StorageResource, ...]
    policy: PolicySchedules
    elcc: ELCCSurface
    slblr_options: dict = field(default_factory=dict)
    sampler_options: dict = field(default_factory=dict)
    root: Path | None = None

    @property
    def policy_zone(self) -> str:
        return next(z.id for z in self.zones if z.is_policy_zone)

    def with_policy(self, **changes) -> "ScenarioConfig":
        return replace(self, policy=replace(self.policy, **changes))


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _yearly_table(value, years, default=0.0) -> dict[int, float]:
    if value is None:
        return {y: default for y in years}
    if isinstance(value, dict):
        return {int(k): float(v) for k, v in value.items()}
    return {y: float(value) for y in years}


def read_series_csv(path: Path, T: int) -> dict[tuple[int, str], np.ndarray]:
    """Read a ``year, week, hour, value`` file into per-week arrays; gaps become NaN."""
    out: dict[tuple[int, str], np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"year", "week", "hour", "value"} - set(reader.fieldnames or [])
        if missing:
            raise ConfigError(f"{path.name}: missing columns {sorted(missing)}")
        for row in reader:
            key = (int(row["year"]), str(row["week"]))
            hour = int(row["hour"])
            if not 0 <= hour < T:
                raise ConfigError(f"{path.name}: hour {hour} outside 0..{T - 1}")
            arr = out.setdefault(key, np.full(T, np.nan))
            arr[hour] = float(row["value"])
    return out


class _Loader:
    def __init__(self, data: dict, root: Path):
        self.data = data
        self.root = root
        self.issues: list[Issue] = []

    def issue(self, path, message):
        self.issues.append(Issue(_pointer(path), message))

    def guard(self, path, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, GridError, ValueError, KeyError) as exc:
            self.issue(path, str(exc.args[0]) if exc.args else repr(exc))
            return None

    def series(self, path, fname, grid: TimeGrid, owner: str, lo=None, hi=None):
        f = self.root / fname
        if not f.exists():
            self.issue(path, f"{owner}: file {fname!r} not found")
            return None
        table = self.guard(path, read_series_csv, f, grid.T)
        if table is None:
            return None
        ok = True
        for y, w in grid.blocks():
            arr = table.get((y, w))
            if arr is None:
                self.issue(path, f"{owner}: data gap for year {y}, week {w}")
                ok = False
                continue
            gaps = np.flatnonzero(np.isnan(arr))
            if gaps.size:
                self.issue(path, f"{owner}: data gap for year {y}, week {w}, hour {int(gaps[0])}")
                ok = False
                continue
            if (lo is not None and np.any(arr < lo)) or (hi is not None and np.any(arr > hi)):
                self.issue(path, f"{owner}: values outside [{lo}, {hi}] in year {y}, week {w}")
                ok = False
        return table if ok else None

    def load(self) -> ScenarioConfig | None:
        d = self.data
        validator = jsonschema.Draft202012Validator(SCHEMA)
        for err in sorted(validator.iter_errors(d), key=lambda e: list(map(str, e.absolute_path))):
            self.issue(list(err.absolute_path), err.message)
        if self.issues:
            return None

        tm = d["time"]
        grid = self.guard(
            ["time"],
            lambda: TimeGrid(
                weeks=[WeekSample(w["week_id"], float(w["weight"]), int(w.get("source_week_of_year", 1)))
                       for w in tm["weeks"]],
                years=tm["years"],
                hours_per_week=int(tm.get("hours_per_week", 168)),
            ),
        )
        if grid is None:
            return None
        years = list(grid.years)
        T = grid.T

        zones, zone_ids = [], set()
        for i, z in enumerate(d["zones"]):
            path = ["zones", i]
            if z["id"] in zone_ids:
                self.issue(path + ["id"], f"duplicate zone id {z['id']!r}")
            zone_ids.add(z["id"])
            load = self.series(path + ["load"], z["load"], grid, f"zone {z['id']} load", lo=0.0)
            spec = None
            if z.get("policy_zone"):
                r = dict(z.get("reserves", {}))
                lf = {}
                for key in ("load_following_up", "load_following_down"):
                    if key in r:
                        lf[key] = self.series(path + ["reserves", key], r.pop(key), grid,
                                              f"zone {z['id']} {key.replace('_', '-')}", lo=0.0)
                    else:
                        self.issue(path + ["reserves", key], f"zone {z['id']}: {key} series is required")
                spec = self.guard(
                    path + ["reserves"],
                    ReserveSpec,
                    load_following_up_series=lf.get("load_following_up") or {},
                    load_following_down_series=lf.get("load_following_down") or {},
                    **r,
                )
            if load is not None:
                zones.append(Zone(z["id"], load, bool(z.get("policy_zone", False)), spec))
        policy_zones = [z["id"] for z in d["zones"] if z.get("policy_zone")]
        if len(policy_zones) != 1:
            self.issue(["zones"], f"exactly one policy zone required, found {len(policy_zones)}")
        pz = policy_zones[0] if policy_zones else None

        def check_zone(path, zid):
            if zid not in zone_ids:
                self.issue(path, f"unknown zone {zid!r}")

        ids: set[str] = set()

        def check_id(path, rid):
            if rid in ids:
                self.issue(path, f"duplicate resource id {rid!r}")
            ids.add(rid)

        lines = []
        for i, ln in enumerate(d.get("lines", [])):
            path = ["lines", i]
            check_id(path + ["id"], ln["id"])
            check_zone(path + ["from_zone"], ln["from_zone"])
            check_zone(path + ["to_zone"], ln["to_zone"])
            obj = self.guard(path, Line, ln["id"], ln["from_zone"], ln["to_zone"], float(ln["flow_min"]),
                             float(ln["flow_max"]), float(ln.get("wheeling_cost", 0.0)),
                             float(ln.get("import_emissions_rate", 0.0)))
            if obj:
                lines.append(obj)

        def build_rule(path, zid, can_build):
            if can_build and pz is not None and zid != pz:
                self.issue(path, f"new capacity may only be built in the policy zone {pz!r}")

        thermal = []
        for i, u in enumerate(d.get("thermal", [])):
            path = ["thermal", i]
            check_id(path + ["id"], u["id"])
            check_zone(path + ["zone"], u["zone"])
            build_rule(path + ["buildable"], u["zone"], u.get("buildable", False))
            planned = _yearly_table(u.get("planned_status"), years)
            for y, v in planned.items():
                if v not in (0.0, 1.0):
                    self.issue(path + ["planned_status"], f"thermal {u['id']}: planned status in {y} must be 0 or 1")
            for key in ("min_uptime", "min_downtime"):
                if u.get(key, 1) > T:
                    self.issue(path + [key], f"thermal {u['id']}: {key} exceeds the {T}-hour week")
            kw = {k: u[k] for k in (
                "min_uptime", "min_downtime", "ramp_up", "ramp_down", "startup_limit", "shutdown_limit",
                "startup_cost", "shutdown_cost", "gen_cost_slope", "gen_cost_intercept", "emissions_rate",
                "nqc_fraction", "maintenance_cost", "retirable", "buildable", "ten_minute_ramp",
                "freq_response_fraction", "financing_life") if k in u}
            obj = self.guard(path, ThermalUnit, u["id"], u["zone"], float(u["p_min"]), float(u["p_max"]),
                             capital_cost_by_year=_yearly_table(u.get("capital_cost"), years),
                             planned_status_by_year={y: int(v) for y, v in planned.items()}, **kw)
            if obj:
                thermal.append(obj)

        renewables = []
        for i, r in enumerate(d.get("renewables", [])):
            path = ["renewables", i]
            check_id(path + ["id"], r["id"])
            check_zone(path + ["zone"], r["zone"])
            build_rule(path + ["buildable_limit"], r["zone"], r.get("buildable_limit", 0) > 0)
            pf = self.series(path + ["production_factor"], r["production_factor"], grid,
                             f"renewable {r['id']} production factor", lo=0.0, hi=1.0)
            if pf is None:
                continue
            kw = {k: r[k] for k in ("curtailment_cost", "is_firm", "rps_eligible", "elcc_axis",
                                    "buildable_limit", "maintenance_cost", "financing_life") if k in r}
            obj = self.guard(path, RenewableResource, r["id"], r["zone"], pf,
                             elcc_axis_multiplier_by_year=_yearly_table(r.get("elcc_axis_multiplier"), years, 1.0),
                             planned_capacity_by_year=_yearly_table(r.get("planned_capacity"), years),
                             capital_cost_by_year=_yearly_table(r.get("capital_cost"), years), **kw)
            if obj:
                renewables.append(obj)

        hydro = []
        for i, h in enumerate(d.get("hydro", [])):
            path = ["hydro", i]
            check_id(path + ["id"], h["id"])
            check_zone(path + ["zone"], h["zone"])
            b = h["weekly_energy_budget"]
            if isinstance(b, list):
                budget = {(int(e["year"]), str(e["week"])): float(e["value"]) for e in b}
            else:
                budget = {key: float(b) for key in grid.blocks()}
            for y, w in grid.blocks():
                if (y, w) not in budget:
                    self.issue(path + ["weekly_energy_budget"], f"hydro {h['id']}: data gap for year {y}, week {w}")
                elif budget[(y, w)] < h["p_min"] * T:
                    self.issue(path + ["weekly_energy_budget"],
                               f"hydro {h['id']}: budget for year {y}, week {w} is below p_min times the week length")
            kw = {k: h[k] for k in ("nqc_fraction", "maintenance_cost") if k in h}
            obj = self.guard(path, HydroResource, h["id"], h["zone"], float(h["p_min"]), float(h["p_max"]),
                             float(h["ramp_limit"]), budget, **kw)
            if obj:
                hydro.append(obj)

        storage = []
        for i, s in enumerate(d.get("storage", [])):
            path = ["storage", i]
            check_id(path + ["id"], s["id"])
            check_zone(path + ["zone"], s["zone"])
            build_rule(path + ["buildable_power_limit"], s["zone"],
                       s.get("buildable_power_limit", 0) > 0 or s.get("buildable_energy_limit", 0) > 0)
            kw = {k: s[k] for k in (
                "max_charge_rate", "max_discharge_rate", "soc_min_fraction", "soc_max_fraction",
                "charge_efficiency", "discharge_efficiency", "self_discharge", "maintenance_cost_power",
                "maintenance_cost_energy", "buildable_power_limit", "buildable_energy_limit",
                "allow_retirement", "financing_life") if k in s}
            obj = self.guard(path, StorageResource, s["id"], s["zone"],
                             elcc_multiplier_by_year=_yearly_table(s.get("elcc_multiplier"), years, 1.0),
                             capital_cost_power_by_year=_yearly_table(s.get("capital_cost_power"), years),
                             capital_cost_energy_by_year=_yearly_table(s.get("capital_cost_energy"), years),
                             planned_power_by_year=_yearly_table(s.get("planned_power"), years),
                             planned_energy_by_year=_yearly_table(s.get("planned_energy"), years), **kw)
            if obj is not None:
                storage.append(obj)

        p = d["policy"]
        policy = self.guard(
            ["policy"],
            PolicySchedules,
            emissions_cap_by_year=_yearly_table(p["emissions_cap"], years) if "emissions_cap" in p else {},
            rps_fraction_by_year=_yearly_table(p.get("rps_fraction"), years),
            prm_requirement_by_year=_yearly_table(p["prm_requirement"], years) if "prm_requirement" in p else {},
            discount_rate=float(p.get("discount_rate", 0.05)),
            base_year=p.get("base_year"),
            horizon_end_year=int(p.get("horizon_end_year", 2065)),
        )

        e = d["elcc"]

        def per_year(key, width):
            raw = e[key]
            table = raw if isinstance(raw, dict) else {str(y): raw for y in years}
            out = {}
            for y in years:
                fs = table.get(str(y))
                if not fs:
                    self.issue(["elcc", key], f"no ELCC facets for {y}")
                    continue
                if any(not isinstance(f, list) or len(f) != width for f in fs):
                    self.issue(["elcc", key], f"each facet must list {width} numbers")
                    continue
                out[y] = [tuple(float(v) for v in f) for f in fs]
            return out

        elcc = self.guard(["elcc"], ELCCSurface, per_year("facets", 3), per_year("storage_facets", 2))

        self.guard(["slblr"], SlblrConfig.from_dict, d.get("slblr", {}))
        cand = d.get("sampler", {}).get("candidate_weeks")
        if cand is not None:
            f = self.root / cand
            if not f.exists():
                self.issue(["sampler", "candidate_weeks"], f"file {cand!r} not found")
            else:
                self.guard(["sampler", "candidate_weeks"], read_candidate_csv, f)

        if self.issues:
            return None
        return ScenarioConfig(
            scenario_id=d["scenario_id"],
            seed=int(d.get("seed", 0)),
            grid=grid,
            zones=tuple(zones),
            lines=tuple(lines),
            thermal=tuple(thermal),
            renewables=tuple(renewables),
            hydro=tuple(hydro),
            storage=tuple(storage),
            policy=policy,
            elcc=elcc,
            slblr_options=dict(d.get("slblr", {})),
            sampler_options=dict(d.get("sampler", {})),
            root=self.root,
        )


def resolve_scenario_path(path: str | Path) -> Path:
    """Accept a manifest file, a directory holding ``manifest.json`` or a bundled fixture name."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    if p.exists():
        return p
    if str(path) in BUNDLED:
        return Path(str(resources.files("decarb") / "data" / str(path) / "manifest.json"))
    raise ScenarioError([Issue("", f"scenario {str(path)!r} not found")])


def load_scenario(path: str | Path) -> ScenarioConfig:
    manifest = resolve_scenario_path(path)
    try:
        data = json.loads(manifest.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([Issue("", f"invalid JSON: {exc}")]) from None
    return load_scenario_dict(data, manifest.parent)


def load_scenario_dict(data: dict[str, Any], root: str | Path) -> ScenarioConfig:
    loader = _Loader(data, Path(root))
    cfg = loader.load()
    if loader.issues or cfg is None:
        raise ScenarioError(loader.issues or [Issue("", "scenario could not be loaded")])
    return cfg




# --------------------------------------------------------------------------- results
COST_CATEGORIES = ("operation", "maintenance", "investment")
ITERATION_COLUMNS = ("k", "L_k", "q_bar", "stepsize", "r_norm1", "r_norm2_sq", "reset_flag", "group_ids")


@dataclass
class ResultSet:
    """Solved plan in long tables, ready to write or recheck.

    ``fleet`` rows are ``(year, resource, quantity, value)``; ``dispatch`` rows are
    ``(year, week, hour, resource, quantity, value)``; ``soc`` rows are
    ``(year, week, hour, storage, value)``. Costs are undiscounted annual dollars.
    """

    scenario_id: str
    method: str
    status: str
    objective: float
    years: list[int]
    year_weights: dict[int, float]
    costs: dict[int, dict[str, float]]
    emissions: dict[int, float]
    fleet: list[tuple] = field(default_factory=list)
    dispatch: list[tuple] = field(default_factory=list)
    soc: list[tuple] = field(default_factory=list)
    iterations: list[tuple] = field(default_factory=list)
    lower_bound: float | None = None
    certified_bound: bool = False
    duality_gap: float | None = None
    metadata: dict = field(default_factory=dict)

    def total(self, year: int) -> float:
        c = self.costs[year]
        return c["operation"] + c["maintenance"] + c["investment"]

    def totals(self) -> dict[str, float]:
        out = {k: sum(self.costs[y][k] for y in self.years) for k in COST_CATEGORIES}
        out["total"] = sum(self.total(y) for y in self.years)
        return out

    def fleet_value(self, resource: str, quantity: str, year: int) -> float:
        for y, r, q, v in self.fleet:
            if (y, r, q) == (year, resource, quantity):
                return v
        raise KeyError((resource, quantity, year))


def _val(x, i) -> float:
    v = float(x[i])
    return 0.0 if abs(v) < 1e-12 else v


def extract(pm, scn: ScenarioConfig, x, *, method: str, status: str, objective: float | None = None) -> ResultSet:
    """Read the plan, dispatch, costs and emissions of solution ``x`` off a built planning model."""
    x = np.asarray(x, dtype=float)
    inv = pm.investment
    years = list(scn.grid.years)
    fleet = []
    for y in years:
        for u in scn.thermal:
            fleet.append((y, u.id, "status", _val(x, inv.unit_status[(u.id, y)])))
            if (u.id, y) in inv.unit_build:
                fleet.append((y, u.id, "build", _val(x, inv.unit_build[(u.id, y)])))
            if (u.id, y) in inv.unit_retire:
                fleet.append((y, u.id, "retire", _val(x, inv.unit_retire[(u.id, y)])))
        for r in scn.renewables:
            fleet.append((y, r.id, "capacity", _val(x, inv.renewable_cap[(r.id, y)])))
            if (r.id, y) in inv.renewable_build:
                fleet.append((y, r.id, "build", _val(x, inv.renewable_build[(r.id, y)])))
        for s in scn.storage:
            fleet.append((y, s.id, "power_capacity", _val(x, inv.storage_power[(s.id, y)])))
            fleet.append((y, s.id, "energy_capacity", _val(x, inv.storage_energy[(s.id, y)])))
            for q, table in (("power_build", inv.storage_power_build), ("energy_build", inv.storage_energy_build),
                             ("power_retire", inv.storage_power_retire), ("energy_retire", inv.storage_energy_retire)):
                if (s.id, y) in table:
                    fleet.append((y, s.id, q, _val(x, table[(s.id, y)])))
        for h in scn.hydro:
            fleet.append((y, h.id, "capacity", h.p_max))

    dispatch, soc = [], []
    for (y, w), blk in sorted(pm.blocks.items(), key=lambda kv: (kv[0][0], scn.grid.week_ids.index(kv[0][1]))):
        for t in blk.hours():
            for u in scn.thermal:
                tv = blk.thermal[u.id]
                for q, idx in (("commitment", tv.v), ("output", tv.p), ("startup", tv.start), ("shutdown", tv.stop)):
                    dispatch.append((y, w, t, u.id, q, _val(x, idx[t])))
            for r in scn.renewables:
                dispatch.append((y, w, t, r.id, "output", _val(x, blk.renewable[r.id][t])))
                if r.id in blk.curtail:
                    dispatch.append((y, w, t, r.id, "curtailment", _val(x, blk.curtail[r.id][t])))
            for h in scn.hydro:
                dispatch.append((y, w, t, h.id, "output", _val(x, blk.hydro[h.id][t])))
            for s in scn.storage:
                sv = blk.storage[s.id]
                dispatch.append((y, w, t, s.id, "charge", _val(x, sv.charge[t])))
                dispatch.append((y, w, t, s.id, "discharge", _val(x, sv.discharge[t])))
                soc.append((y, w, t, s.id, _val(x, sv.soc[t])))
            for ln in scn.lines:
                dispatch.append((y, w, t, ln.id, "flow_pos", _val(x, blk.flow_pos[ln.id][t])))
                dispatch.append((y, w, t, ln.id, "flow_neg", _val(x, blk.flow_neg[ln.id][t])))

    costs = pm.yearly_costs(x)
    costs = {y: {k: float(v) for k, v in c.items()} for y, c in costs.items()}
    cm = pm.model.compile()
    bins = cm.is_binary
    meta = {
        "max_violation": cm.max_violation(x, scaled=False),
        "max_integrality_violation": float(np.max(np.abs(x[bins] - np.round(x[bins])), initial=0.0)),
        "variables": cm.n,
        "binaries": int(bins.sum()),
        "rows": cm.m,
    }
    return ResultSet(
        scenario_id=scn.scenario_id,
        method=method,
        status=status,
        objective=float(cm.objective(x) if objective is None else objective),
        years=years,
        year_weights={y: float(pm.year_weights[y]) for y in years},
        costs=costs,
        emissions={y: float(pm.emissions[y].value(x)) for y in years},
        fleet=fleet,
        dispatch=dispatch,
        soc=soc,
        metadata=meta,
    )


def compute_costs(rs: ResultSet, scn: ScenarioConfig) -> tuple[dict[int, dict[str, float]], dict[int, float]]:
    """Recompute yearly costs and policy-zone emissions from the result tables and the config alone."""
    from .planning import annuity_factor

    weight = {w.week_id: w.weight for w in scn.grid.weeks}
    thermal = {u.id: u for u in scn.thermal}
    renew = {r.id: r for r in scn.renewables}
    lines = {ln.id: ln for ln in scn.lines}
    pz = scn.policy_zone
    years = list(scn.grid.years)
    op = {y: 0.0 for y in years}
    em = {y: 0.0 for y in years}
    for y, w, _t, rid, q, v in rs.dispatch:
        wt = weight[w]
        if rid in thermal:
            u = thermal[rid]
            rate = {"commitment": u.gen_cost_intercept, "output": u.gen_cost_slope,
                    "startup": u.startup_cost, "shutdown": u.shutdown_cost}[q]
            op[y] += wt * rate * v
            if q == "output" and u.zone_id == pz:
                em[y] += wt * u.emissions_rate * v
        elif rid in lines:
            ln = lines[rid]
            op[y] += wt * ln.wheeling_cost * v
            imports = (q == "flow_pos" and ln.to_zone == pz) or (q == "flow_neg" and ln.from_zone == pz)
            if imports:
                em[y] += wt * ln.import_emissions_rate * v
        elif rid in renew and q == "curtailment":
            op[y] += wt * renew[rid].curtailment_cost * v

    fleet = {(y, r, q): v for y, r, q, v in rs.fleet}
    rate = scn.policy.discount_rate
    out = {}
    for y in years:
        maint = sum(u.maintenance_cost * fleet[(y, u.id, "status")] for u in scn.thermal)
        maint += sum(r.maintenance_cost * fleet[(y, r.id, "capacity")] for r in scn.renewables)
        maint += sum(s.maintenance_cost_power * fleet[(y, s.id, "power_capacity")]
                     + s.maintenance_cost_energy * fleet[(y, s.id, "energy_capacity")] for s in scn.storage)
        maint += sum(h.maintenance_cost * h.p_max for h in scn.hydro)
        invest = 0.0
        for yb in years:
            if yb > y:
                continue
            for rid, quantity, cost_by_year, life in (
                [(u.id, "build", u.capital_cost_by_year, u.financing_life) for u in scn.thermal]
                + [(r.id, "build", r.capital_cost_by_year, r.financing_life) for r in scn.renewables]
                + [(s.id, "power_build", s.capital_cost_power_by_year, s.financing_life) for s in scn.storage]
                + [(s.id, "energy_build", s.capital_cost_energy_by_year, s.financing_life) for s in scn.storage]
            ):
                built = fleet.get((yb, rid, quantity))
                if built and y - yb < life:
                    invest += built * cost_by_year.get(yb, 0.0) * annuity_factor(rate, life)
        out[y] = {"operation": op[y], "maintenance": maint, "investment": invest}
    return out, em


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(0.0 if v == 0 else v)
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


RESULT_FILES = ("costs_by_year.csv", "fleet_by_year.csv", "dispatch.csv", "soc.csv", "emissions.csv",
                "iterations.csv", "summary.json")


def write_results(rs: ResultSet, out_dir: str | Path) -> list[Path]:
    """Write the result tables and ``summary.json``; identical inputs give identical bytes."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    paths = [out / f for f in RESULT_FILES]
    cost_rows = [(y, rs.costs[y]["operation"], rs.costs[y]["maintenance"], rs.costs[y]["investment"], rs.total(y),
                  rs.year_weights[y]) for y in rs.years]
    _write_csv(paths[0], ("year", "operation", "maintenance", "investment", "total", "year_weight"), cost_rows)
    _write_csv(paths[1], ("year", "resource", "quantity", "value"), sorted(rs.fleet, key=lambda r: r[:3]))
    _write_csv(paths[2], ("year", "week", "hour", "resource", "quantity", "value"), rs.dispatch)
    _write_csv(paths[3], ("year", "week", "hour", "storage", "soc"), rs.soc)
    _write_csv(paths[4], ("year", "emissions", "cap"),
               [(y, rs.emissions[y], float(rs.metadata.get("emissions_cap", {}).get(y, math.nan))) for y in rs.years])
    _write_csv(paths[5], ITERATION_COLUMNS, rs.iterations)
    summary = {
        "scenario_id": rs.scenario_id,
        "method": rs.method,
        "status": rs.status,
        "objective": rs.objective,
        "lower_bound": rs.lower_bound,
        "certified_lower_bound": rs.certified_bound,
        "duality_gap": rs.duality_gap,
        "totals": rs.totals(),
        "emissions": {str(y): rs.emissions[y] for y in rs.years},
        "metadata": {k: v for k, v in rs.metadata.items() if k != "emissions_cap"},
    }
    paths[6].write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
    return paths


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_results(out_dir: str | Path) -> ResultSet:
    """Load a result directory written by :func:`write_results`."""
    out = Path(out_dir)
    missing = [f for f in RESULT_FILES if not (out / f).exists()]
    if missing:
        raise ConfigError(f"{out}: missing result files {missing}")
    summary = json.loads((out / "summary.json").read_text())
    costs, weights = {}, {}
    for r in _read_rows(out / "costs_by_year.csv"):
        y = int(r["year"])
        costs[y] = {k: float(r[k]) for k in COST_CATEGORIES}
        weights[y] = float(r["year_weight"])
    years = sorted(costs)
    em_rows = _read_rows(out / "emissions.csv")
    emissions = {int(r["year"]): float(r["emissions"]) for r in em_rows}
    metadata = dict(summary.get("metadata", {}))
    metadata["emissions_cap"] = {int(r["year"]): float(r["cap"]) for r in em_rows}
    fleet = [(int(r["year"]), r["resource"], r["quantity"], float(r["value"])) for r in _read_rows(out / "fleet_by_year.csv")]
    dispatch = [(int(r["year"]), r["week"], int(r["hour"]), r["resource"], r["quantity"], float(r["value"]))
                for r in _read_rows(out / "dispatch.csv")]
    soc = [(int(r["year"]), r["week"], int(r["hour"]), r["storage"], float(r["soc"])) for r in _read_rows(out / "soc.csv")]
    iterations = [tuple(r[c] for c in ITERATION_COLUMNS) for r in _read_rows(out / "iterations.csv")]
    return ResultSet(
        scenario_id=summary["scenario_id"], method=summary["method"], status=summary["status"],
        objective=summary["objective"], years=years, year_weights=weights, costs=costs, emissions=emissions,
        fleet=fleet, dispatch=dispatch, soc=soc, iterations=iterations, lower_bound=summary.get("lower_bound"),
        certified_bound=bool(summary.get("certified_lower_bound")), duality_gap=summary.get("duality_gap"),
        metadata=metadata,
    )


REPORT_FILES = ("report_fleet.csv", "report_costs.csv", "report_soc.csv")


def render_report(rs: ResultSet, out_dir: str | Path) -> dict[str, Path]:
    """Long-format tables behind the fleet-over-time, yearly cost and storage trace views."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in REPORT_FILES}
    keep = {"status", "capacity", "power_capacity", "energy_capacity"}
    _write_csv(paths["report_fleet.csv"], ("period", "resource", "metric", "value"),
               sorted((y, r, q, v) for y, r, q, v in rs.fleet if q in keep))
    cost_rows = []
    for y in rs.years:
        c = rs.costs[y]
        cost_rows += [(y, "Op.", c["operation"]), (y, "Maint.", c["maintenance"]),
                      (y, "Invest.", c["investment"]), (y, "Total", rs.total(y))]
    _write_csv(paths["report_costs.csv"], ("period", "category", "value"), cost_rows)
    _write_csv(paths["report_soc.csv"], ("storage", "period", "week", "hour", "soc"),
               [(s, y, w, t, v) for y, w, t, s, v in rs.soc])
    return paths


# --------------------------------------------------------------------------- solve pipeline
class InfeasibleScenario(ConfigError):
    """The planning model has no feasible point; ``culprits`` names policy rows that cause it."""

    def __init__(self, message: str, culprits: list[str]):
        super().__init__(message)
        self.culprits = culprits


def _policy_label(kind: str, year: int) -> str:
    return {"emissions": "emissions cap", "rps": "RPS", "prm": "planning reserve margin"}[kind] + f" {year}"


def diagnose_infeasibility(pm, backend=None) -> InfeasibleScenario | None:
    """Return a report if the LP relaxation is infeasible, else None.

    Each policy row is dropped in turn; those whose removal alone restores
    feasibility are named in the report.
    """
    from .solver.backend import HighsBackend

    backend = backend or HighsBackend()
    if backend.solve_lp_relaxation(pm.model).status != "infeasible":
        return None
    culprits = [
        _policy_label(kind, y)
        for (kind, y), row in sorted(pm.policy_rows.items(), key=lambda kv: (kv[0][1], kv[0][0]))
        if backend.solve_lp_relaxation(pm.model.without_rows([row])).status != "infeasible"
    ]
    if culprits:
        msg = "scenario is infeasible; relaxing any one of these restores feasibility: " + ", ".join(culprits)
    else:
        msg = "scenario is infeasible even with any single policy constraint removed"
    return InfeasibleScenario(msg, culprits)


def solve_scenario(
    scn: ScenarioConfig,
    *,
    oracle: bool = False,
    config: SlblrConfig | None = None,
    backend=None,
    gap_tol: float | None = None,
) -> ResultSet:
    """Build the planning model and solve it with SLBLR or, with ``oracle``, the bundled exact solver."""
    from . import slblr
    from .planning import build_planning_model
    from .solver.bnb import SolveOptions, reference_solve

    pm = build_planning_model(scn)
    caps = dict(scn.policy.emissions_cap_by_year)
    report = diagnose_infeasibility(pm)
    if report is not None:
        raise report
    if oracle:
        sol = reference_solve(pm.model, SolveOptions(relative_gap_tol=gap_tol or 1e-4))
        if not sol.has_solution:
            raise ConfigError(f"oracle solve ended with status {sol.status}")
        rs = extract(pm, scn, sol.x, method="oracle", status=sol.status)
        rs.lower_bound = float(sol.bound)
        rs.certified_bound = sol.status == "optimal"
        rs.duality_gap = (rs.objective - rs.lower_bound) / abs(rs.objective) if rs.objective else 0.0
    else:
        config = config or SlblrConfig.from_dict(scn.slblr_options, seed=scn.seed)
        res = slblr.run(slblr.DecomposableProblem.from_planning(pm), config, backend)
        if res.x is None:
            raise ConfigError(f"SLBLR found no feasible plan: {res.status}")
        rs = extract(pm, scn, res.x, method="slblr", status=res.status)
        rs.lower_bound = res.lower_bound
        rs.certified_bound = res.certified
        rs.duality_gap = res.gap
        rs.iterations = [
            (r.k, r.L, r.q_bar, r.stepsize, r.r_norm1, r.r_norm2_sq, r.reset_flag, ";".join(r.group_ids))
            for r in res.report.records
        ]
        rs.metadata.update(iterations=res.iterations, stop_reason=res.stop_reason, seed=config.seed)
    rs.metadata["emissions_cap"] = caps
    return rs
