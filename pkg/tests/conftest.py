from __future__ import annotations

import json

import numpy as np
import pytest

from decarb.milp import MixedIntegerModel
from decarb.model_core import WeekBlock
from decarb.scenario_io import load_scenario, load_scenario_dict, resolve_scenario_path, solve_scenario
from decarb.solver import HighsBackend, SolveOptions

_CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _CRITERIA[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def block(T: int, year: int = 2023, week: str = "w1"):
    return WeekBlock(year, week, T), MixedIntegerModel("unit_test")


def solve(model, fix: dict[int, float] | None = None, gap: float = 1e-9):
    """Solve with HiGHS after pinning the given variables."""
    cm = model.compile()
    lb, ub = cm.lb.copy(), cm.ub.copy()
    for i, v in (fix or {}).items():
        lb[i] = ub[i] = v
    from decarb.solver import with_bounds

    return HighsBackend().solve(with_bounds(cm, lb, ub), SolveOptions(relative_gap_tol=gap))


def toy_manifest() -> tuple[dict, object]:
    path = resolve_scenario_path("two_zone_toy")
    return json.loads(path.read_text()), path.parent


def toy_variant(edit) -> object:
    data, root = toy_manifest()
    edit(data)
    return load_scenario_dict(data, root)


@pytest.fixture(scope="session")
def toy():
    return load_scenario("two_zone_toy")


@pytest.fixture(scope="session")
def toy_oracle(toy):
    return solve_scenario(toy, oracle=True)


@pytest.fixture(scope="session")
def toy_slblr(toy):
    return solve_scenario(toy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
