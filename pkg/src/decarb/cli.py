"""Command-line entry point: ``decarb <subcommand> --scenario PATH ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .milp import ModelError
from .model_core import ConfigError
from .sampler import SamplerError, featurize_weeks, read_candidate_csv, select_weeks
from .scenario_io import (
    ScenarioError,
    load_scenario,
    read_results,
    render_report,
    solve_scenario,
    write_results,
)
from .slblr import SlblrConfig
from .solver.bnb import ScaleGuardError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decarb", description="Zonal capacity expansion with unit commitment.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario and list every problem found")
    v.add_argument("--scenario", required=True)

    s = sub.add_parser("sample-weeks", help="pick representative weeks from the scenario's candidate data")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", help="write the plan JSON here instead of stdout")
    s.add_argument("--target", type=int, help="number of weeks (default: scenario setting)")

    so = sub.add_parser("solve", help="solve the planning model and write result tables")
    so.add_argument("--scenario", required=True)
    so.add_argument("--out", required=True)
    so.add_argument("--seed", type=int)
    so.add_argument("--oracle", action="store_true", help="solve the monolithic model with the bundled exact solver")
    so.add_argument("--max-iter", type=int)
    so.add_argument("--gap-tol", type=float)

    r = sub.add_parser("report", help="write plot-ready tables from a result directory")
    r.add_argument("--out", required=True, help="result directory written by solve")
    r.add_argument("--scenario", help="accepted for symmetry; the result directory is self-contained")

    e = sub.add_parser("export-mps", help="write the monolithic model in fixed MPS format")
    e.add_argument("--scenario", required=True)
    e.add_argument("--out", required=True, help="target .mps file")
    return p


def _validate(args) -> int:
    scn = load_scenario(args.scenario)
    print(f"{scn.scenario_id}: ok")
    return 0


def _sample(args) -> int:
    scn = load_scenario(args.scenario)
    opts = scn.sampler_options
    if "candidate_weeks" not in opts:
        print("scenario has no sampler.candidate_weeks file", file=sys.stderr)
        return 1
    weeks, series = read_candidate_csv(scn.root / opts["candidate_weeks"])
    hist = featurize_weeks(series, bins=int(opts.get("bins", 20)),
                           week_ids=[f"w{w}" for w in weeks], source_weeks=weeks)
    plan = select_weeks(hist, args.target or int(opts.get("target_count", 8)))
    text = plan.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _solve(args) -> int:
    scn = load_scenario(args.scenario)
    seed = scn.seed if args.seed is None else args.seed
    config = None
    if not args.oracle:
        config = SlblrConfig.from_dict(scn.slblr_options, seed=seed, max_iterations=args.max_iter,
                                       target_gap=args.gap_tol)
    rs = solve_scenario(scn, oracle=args.oracle, config=config, gap_tol=args.gap_tol)
    write_results(rs, args.out)
    print(f"{rs.method} {rs.status} objective={rs.objective:.6f} gap={rs.duality_gap}")
    return 0


def _report(args) -> int:
    paths = render_report(read_results(args.out), args.out)
    for p in paths.values():
        print(p)
    return 0


def _export(args) -> int:
    from .planning import build_planning_model
    from .solver.mps import emit_mps

    scn = load_scenario(args.scenario)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(emit_mps(build_planning_model(scn).model))
    print(out)
    return 0


_COMMANDS = {"validate": _validate, "sample-weeks": _sample, "solve": _solve, "report": _report,
             "export-mps": _export}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ScenarioError as exc:
        for issue in exc.issues:
            print(f"error: {issue}", file=sys.stderr)
        return 1
    except (ConfigError, ModelError, SamplerError, ScaleGuardError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
