"""Fixed-layout MPS writer and whitespace ``.sol`` reader.

The writer aligns fields in the classic fixed columns but never relies on
position, so any free-format reader accepts the output as well. Names containing
whitespace are rewritten with underscores and clipped to 255 characters.
"""

from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ..milp import EQ, GE, LE, MixedIntegerModel

logger = logging.getLogger(__name__)

MAX_NAME = 255
OBJ_ROW = "OBJ"
_WS = re.compile(r"\s+")
_STATUSES = ("optimal", "feasible", "infeasible", "unbounded", "limit")


class MpsError(ValueError):
    """Raised when a model cannot be serialized unambiguously."""


class SolutionParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _fmt(v: float) -> str:
    v = float(v)
    if v == 0:
        return "0"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def mps_names(names: list[str], kind: str) -> list[str]:
    """Sanitize names for MPS; clipped names are made unique with a ``~k`` suffix."""
    out, seen, given = [], set(), set(names)
    for name in names:
        clean = _WS.sub("_", name) or "_"
        if clean != name and clean in given:
            raise MpsError(f"{kind} name {name!r} collides with {clean!r} after sanitizing")
        if len(clean) > MAX_NAME:
            base, k = clean[: MAX_NAME - 6], 0
            clean = f"{base}~{k}"
            while clean in seen:
                k += 1
                clean = f"{base}~{k}"
        if clean in seen:
            raise MpsError(f"duplicate {kind} name {clean!r}")
        seen.add(clean)
        out.append(clean)
    return out


def emit_mps(model: MixedIntegerModel) -> bytes:
    """Serialize ``model`` deterministically (minimization, ``N`` row ``OBJ``)."""
    cols = mps_names(model.var_names, "variable")
    rows = mps_names([r.name for r in model.rows], "row")
    if OBJ_ROW in rows:
        raise MpsError(f"row name {OBJ_ROW!r} is reserved for the objective")

    by_col: list[list[tuple[str, float]]] = [[] for _ in cols]
    for idx, coef in sorted(model.objective.terms.items()):
        if coef:
            by_col[idx].append((OBJ_ROW, coef))
    for rname, row in zip(rows, model.rows):
        for idx in sorted(row.coefs):
            by_col[idx].append((rname, row.coefs[idx]))

    buf = io.StringIO()
    w = buf.write
    w(f"NAME          {_WS.sub('_', model.name) or 'model'}\n")
    w("ROWS\n")
    w(f" N  {OBJ_ROW}\n")
    code = {LE: "L", GE: "G", EQ: "E"}
    for rname, row in zip(rows, model.rows):
        w(f" {code[row.sense]}  {rname}\n")
    w("COLUMNS\n")
    in_int, marker = False, 0
    for j, cname in enumerate(cols):
        if model.binary[j] != in_int:
            tag = "'INTORG'" if model.binary[j] else "'INTEND'"
            w(f"    MARKER{marker:<6d}  'MARKER'                 {tag}\n")
            marker += 1
            in_int = model.binary[j]
        entries = by_col[j] or [(OBJ_ROW, 0.0)]
        for rname, coef in entries:
            w(f"    {cname:<8s}  {rname:<8s}  {_fmt(coef):>12s}\n")
    if in_int:
        w(f"    MARKER{marker:<6d}  'MARKER'                 'INTEND'\n")
    w("RHS\n")
    if model.objective.const:
        w(f"    RHS       {OBJ_ROW:<8s}  {_fmt(-model.objective.const):>12s}\n")
    for rname, row in zip(rows, model.rows):
        if row.rhs:
            w(f"    RHS       {rname:<8s}  {_fmt(row.rhs):>12s}\n")
    w("BOUNDS\n")
    for j, cname in enumerate(cols):
        lb, ub = model.lb[j], model.ub[j]
        if lb == ub:
            w(f" FX BND       {cname:<8s}  {_fmt(lb):>12s}\n")
            continue
        if lb == -math.inf and ub == math.inf:
            w(f" FR BND       {cname}\n")
            continue
        if lb == -math.inf:
            w(f" MI BND       {cname}\n")
        elif lb != 0:
            w(f" LO BND       {cname:<8s}  {_fmt(lb):>12s}\n")
        if ub != math.inf:
            w(f" UP BND       {cname:<8s}  {_fmt(ub):>12s}\n")
    w("ENDATA\n")
    return buf.getvalue().encode("ascii")


@dataclass
class SolutionVector:
    """Solver answer mapped back onto a model's variables."""

    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    bound: float = math.nan
    var_names: list[str] = field(default_factory=list, repr=False)

    @property
    def values(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return {n: float(v) for n, v in zip(self.var_names, self.x)}

    @property
    def has_solution(self) -> bool:
        return self.x is not None and self.status in ("optimal", "feasible")


def parse_solution(text: str | bytes, model: MixedIntegerModel) -> SolutionVector:
    """Read ``name value`` lines, with optional ``# status:``/``# objective:``/``# bound:`` comments."""
    if isinstance(text, bytes):
        text = text.decode()
    names = mps_names(model.var_names, "variable")
    index = {n: i for i, n in enumerate(names)}
    status, objective, bound = "optimal", None, None
    x = np.zeros(model.num_vars)
    seen = np.zeros(model.num_vars, dtype=bool)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            key, val = key.strip().lower(), val.strip()
            if key == "status":
                if val.lower() not in _STATUSES:
                    raise SolutionParseError(lineno, f"unknown status {val!r}")
                status = val.lower()
            elif key in ("objective", "bound"):
                try:
                    num = float(val)
                except ValueError:
                    raise SolutionParseError(lineno, f"bad number {val!r}") from None
                if key == "objective":
                    objective = num
                else:
                    bound = num
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionParseError(lineno, f"expected 'name value', got {raw!r}")
        name, val = parts
        if name not in index:
            raise SolutionParseError(lineno, f"unknown variable {name!r}")
        try:
            x[index[name]] = float(val)
        except ValueError:
            raise SolutionParseError(lineno, f"bad number {val!r}") from None
        seen[index[name]] = True
    if status in ("infeasible", "unbounded") or (status == "limit" and not seen.any()):
        return SolutionVector(status, None, math.nan, math.nan, list(model.var_names))
    missing = int((~seen).sum())
    if missing:
        logger.warning("%d variables absent from solution; set to 0", missing)
    cm = model.compile()
    obj = cm.objective(x) if objective is None else objective
    return SolutionVector(status, x, obj, obj if bound is None else bound, list(model.var_names))


def write_solution(sol: SolutionVector, model: MixedIntegerModel) -> str:
    """Inverse of :func:`parse_solution`; used by wrapper scripts and tests."""
    lines = [f"# status: {sol.status}"]
    if sol.x is not None:
        lines.append(f"# objective: {sol.objective!r}")
        for name, v in zip(mps_names(model.var_names, "variable"), sol.x):
            lines.append(f"{name} {float(v)!r}")
    return "\n".join(lines) + "\n"
