"""Representative-week selection by histogram matching.

Every candidate week is summarized by per-feature histograms of its hourly
values. The selection MILP picks ``target_count`` weeks and continuous weights
summing to 52 so that the weighted mix of weekly histograms is as close as
possible, in L1 distance, to the histogram of the whole year.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .milp import EQ, GE, LE, LinExpr, MixedIntegerModel
from .solver.backend import Backend, HighsBackend
from .solver.bnb import SolveOptions

WEEKS_PER_YEAR = 52
DEFAULT_BINS = 20


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class WeekFeatureHistogram:
    """Per-feature bin frequencies for the whole year and for each candidate week.

    ``weekly_freq[w, b]`` and ``yearly_freq[b]`` run over the concatenated bins of
    all features; within one feature each row sums to 1.
    """

    features: tuple[str, ...]
    edges: tuple[np.ndarray, ...]
    week_ids: tuple[str, ...]
    source_weeks: tuple[int, ...]
    yearly_freq: np.ndarray
    weekly_freq: np.ndarray

    def __post_init__(self):
        if len(self.features) != len(self.edges):
            raise SamplerError("one edge array per feature expected")
        for f, e in zip(self.features, self.edges):
            if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
                raise SamplerError(f"bin edges of {f} must be strictly increasing")
        if self.weekly_freq.shape != (len(self.week_ids), len(self.yearly_freq)):
            raise SamplerError("weekly frequency table does not match the week and bin counts")
        for f, sl in zip(self.features, self.feature_slices()):
            if abs(self.yearly_freq[sl].sum() - 1) > 1e-9 or np.any(np.abs(self.weekly_freq[:, sl].sum(1) - 1) > 1e-9):
                raise SamplerError(f"frequencies of {f} do not sum to one")

    @property
    def bins(self) -> list[tuple[str, float, float]]:
        return [(f, float(e[i]), float(e[i + 1])) for f, e in zip(self.features, self.edges) for i in range(len(e) - 1)]

    def feature_slices(self) -> list[slice]:
        out, start = [], 0
        for e in self.edges:
            out.append(slice(start, start + len(e) - 1))
            start += len(e) - 1
        return out

    def distance(self, weights: Mapping[str, float], total: float = WEEKS_PER_YEAR) -> float:
        """L1 distance between the yearly histogram and a weighted week mix."""
        pos = {w: i for i, w in enumerate(self.week_ids)}
        mix = np.zeros_like(self.yearly_freq)
        for w, wt in weights.items():
            mix += wt / total * self.weekly_freq[pos[w]]
        return float(np.abs(self.yearly_freq - mix).sum())


@dataclass(frozen=True)
class SampledWeek:
    week_id: str
    source_week_of_year: int
    weight: float


@dataclass(frozen=True)
class SamplingPlan:
    weeks: tuple[SampledWeek, ...]
    target_count: int
    distance: float
    total_weight: float = WEEKS_PER_YEAR

    def __post_init__(self):
        if len(self.weeks) != self.target_count:
            raise SamplerError(f"plan holds {len(self.weeks)} weeks, expected {self.target_count}")
        if abs(sum(w.weight for w in self.weeks) - self.total_weight) > 1e-9:
            raise SamplerError("plan weights do not sum to the year length")

    @property
    def weights(self) -> dict[str, float]:
        return {w.week_id: w.weight for w in self.weeks}

    def to_json(self) -> str:
        body = {
            "target_count": self.target_count,
            "distance": self.distance,
            "weeks": [
                {"week_id": w.week_id, "source_week_of_year": w.source_week_of_year, "weight": w.weight}
                for w in self.weeks
            ],
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _edges_for(values: np.ndarray, n_bins: int) -> np.ndarray:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, n_bins + 1)


def featurize_weeks(
    series: Mapping[str, np.ndarray],
    bins: int | Mapping[str, Sequence[float]] = DEFAULT_BINS,
    week_ids: Sequence[str] | None = None,
    source_weeks: Sequence[int] | None = None,
) -> WeekFeatureHistogram:
    """Histogram every feature per week and over the whole year.

    ``series[f]`` has shape ``(weeks, hours)``. ``bins`` is either a bin count,
    giving equal-width bins over the observed range, or explicit edges per
    feature; values outside explicit edges land in the nearest edge bin.
    """
    if not series:
        raise SamplerError("no features to histogram")
    features = tuple(series)
    arrays = [np.asarray(series[f], dtype=float) for f in features]
    n_weeks = arrays[0].shape[0]
    for f, a in zip(features, arrays):
        if a.ndim != 2 or a.shape[0] != n_weeks or a.shape[1] == 0:
            raise SamplerError(f"feature {f} must be a (weeks, hours) array matching the others")
        if not np.all(np.isfinite(a)):
            raise SamplerError(f"feature {f} has missing or non-finite values")
    week_ids = tuple(week_ids) if week_ids is not None else tuple(f"w{i + 1}" for i in range(n_weeks))
    source_weeks = tuple(source_weeks) if source_weeks is not None else tuple(range(1, n_weeks + 1))
    if len(week_ids) != n_weeks or len(source_weeks) != n_weeks:
        raise SamplerError("week labels do not match the number of weeks")

    edges, yearly, weekly = [], [], []
    for f, a in zip(features, arrays):
        if isinstance(bins, int):
            if bins < 1:
                raise SamplerError("bin count must be positive")
            e = _edges_for(a, bins)
        else:
            e = np.asarray(bins[f], dtype=float)
            outside = (a < e[0]) | (a > e[-1])
            if np.any(outside):
                warnings.warn(f"{int(outside.sum())} values of {f} fall outside the bins; clamped to the edge bins",
                              stacklevel=2)
                a = np.clip(a, e[0], e[-1])
        nb = len(e) - 1
        # right-closed last bin, matching np.histogram
        idx = np.clip(np.searchsorted(e, a, side="right") - 1, 0, nb - 1)
        counts = np.zeros((n_weeks, nb))
        for w in range(n_weeks):
            counts[w] = np.bincount(idx[w], minlength=nb)
        edges.append(e)
        weekly.append(counts / counts.sum(axis=1, keepdims=True))
        yearly.append(counts.sum(axis=0) / counts.sum())
    return WeekFeatureHistogram(
        features=features,
        edges=tuple(edges),
        week_ids=week_ids,
        source_weeks=source_weeks,
        yearly_freq=np.concatenate(yearly),
        weekly_freq=np.hstack(weekly),
    )


def selection_model(hist: WeekFeatureHistogram, target_count: int, total: float = WEEKS_PER_YEAR) -> MixedIntegerModel:
    """MILP choosing ``target_count`` weeks and weights that minimize the L1 histogram distance."""
    n_weeks = len(hist.week_ids)
    if target_count <= 0:
        raise SamplerError("target_count must be positive")
    if target_count > n_weeks:
        raise SamplerError(f"target_count {target_count} exceeds the {n_weeks} candidate weeks")
    m = MixedIntegerModel("week_selection")
    pick = [m.add_var(f"pick[{w}]", 0.0, 1.0, binary=True) for w in hist.week_ids]
    weight = [m.add_var(f"weight[{w}]", 0.0, total) for w in hist.week_ids]
    for w, p, x in zip(hist.week_ids, pick, weight):
        m.add_constr(f"weight_gate[{w}]", LinExpr({x: 1.0, p: -total}), LE, 0.0)
    m.add_constr("weight_total", LinExpr({x: 1.0 for x in weight}), EQ, total)
    m.add_constr("pick_count", LinExpr({p: 1.0 for p in pick}), EQ, float(target_count))
    objective = LinExpr()
    for b, (f, lo, hi) in enumerate(hist.bins):
        over = m.add_var(f"over[{f},{b}]")
        under = m.add_var(f"under[{f},{b}]")
        e = LinExpr({x: hist.weekly_freq[i, b] / total for i, x in enumerate(weight)})
        e.add_term(over, -1.0).add_term(under, 1.0)
        m.add_constr(f"fit[{f},{b}]", e, EQ, float(hist.yearly_freq[b]))
        objective.add_term(over, 1.0).add_term(under, 1.0)
    m.set_objective(objective)
    return m


def _even_weights_model(hist, target_count, total, best_distance, slack):
    """Selection model restricted to near-optimal fits, minimizing deviation from equal weights."""
    m = selection_model(hist, target_count, total)
    fit = LinExpr({i: 1.0 for i in m.objective.terms})
    m.add_constr("fit_budget", fit, LE, best_distance + slack)
    even = total / target_count
    spread = LinExpr()
    for w in hist.week_ids:
        x, p = m.var(f"weight[{w}]"), m.var(f"pick[{w}]")
        dev = m.add_var(f"dev[{w}]")
        m.add_constr(f"dev_hi[{w}]", LinExpr({dev: 1.0, x: -1.0, p: even}), GE)
        m.add_constr(f"dev_lo[{w}]", LinExpr({dev: 1.0, x: 1.0, p: -even}), GE)
        spread.add_term(dev, 1.0)
    m.set_objective(spread)
    return m


def _plan(hist, sol, target_count, total) -> SamplingPlan:
    vals = sol.values
    chosen = [i for i, w in enumerate(hist.week_ids) if vals[f"pick[{w}]"] > 0.5]
    raw = np.array([max(vals[f"weight[{hist.week_ids[i]}]"], 0.0) for i in chosen])
    # drop solver noise below 1e-9 weeks, then restore the exact total
    weights = np.round(raw * (total / raw.sum()), 9)
    weeks = [SampledWeek(hist.week_ids[i], int(hist.source_weeks[i]), float(wt)) for i, wt in zip(chosen, weights)]
    # exact renormalization can leave a rounding residue; fold it into the heaviest week
    residue = total - sum(w.weight for w in weeks)
    if residue:
        j = int(np.argmax([w.weight for w in weeks]))
        weeks[j] = SampledWeek(weeks[j].week_id, weeks[j].source_week_of_year, weeks[j].weight + residue)
    picked = {w.week_id: w.weight for w in weeks}
    return SamplingPlan(tuple(weeks), target_count, hist.distance(picked, total), total)


def select_weeks(
    hist: WeekFeatureHistogram,
    target_count: int = 8,
    backend: Backend | None = None,
    total: float = WEEKS_PER_YEAR,
    gap_tol: float = 1e-9,
    even_tiebreak: bool = True,
) -> SamplingPlan:
    """Pick ``target_count`` weeks minimizing the histogram distance.

    Optimal fits are rarely unique. With ``even_tiebreak`` a second solve looks
    for the most evenly weighted fit at the same distance, and is kept only if
    its distance is no worse.
    """
    m = selection_model(hist, target_count, total)
    backend = backend or HighsBackend()
    opts = SolveOptions(relative_gap_tol=gap_tol)
    sol = backend.solve(m, opts)
    if not sol.has_solution:
        raise SamplerError(f"week selection failed: {sol.status}")
    plan = _plan(hist, sol, target_count, total)
    if even_tiebreak:
        tie = backend.solve(_even_weights_model(hist, target_count, total, sol.objective, 1e-9), opts)
        if tie.has_solution:
            alt = _plan(hist, tie, target_count, total)
            if alt.distance <= plan.distance:
                plan = alt
    return plan


def read_candidate_csv(path: str | Path) -> tuple[list[int], dict[str, np.ndarray]]:
    """Read a long ``feature, week, hour, value`` file into ``(weeks, hours)`` arrays per feature."""
    rows: dict[str, dict[tuple[int, int], float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"feature", "week", "hour", "value"} - set(reader.fieldnames or [])
        if missing:
            raise SamplerError(f"{Path(path).name}: missing columns {sorted(missing)}")
        for r in reader:
            rows.setdefault(r["feature"], {})[(int(r["week"]), int(r["hour"]))] = float(r["value"])
    if not rows:
        raise SamplerError(f"{Path(path).name}: no data")
    weeks = sorted({w for table in rows.values() for w, _ in table})
    hours = sorted({h for table in rows.values() for _, h in table})
    out = {}
    for f in sorted(rows):
        table = rows[f]
        gaps = [(w, h) for w in weeks for h in hours if (w, h) not in table]
        if gaps:
            raise SamplerError(f"{Path(path).name}: feature {f} lacks week {gaps[0][0]} hour {gaps[0][1]}")
        out[f] = np.array([[table[(w, h)] for h in hours] for w in weeks])
    return weeks, out
