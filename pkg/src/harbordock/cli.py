"""Command-line entry point: ``dock run | plan-once | validate-map | sweep``.

Headings are printed in degrees; scenario files use degrees as well.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .geometry import Footprint, GeometryError, HarborMap, extract_convex_region, signed_area
from .planner import InvalidRegion, SolverNotConverged, default_solve_options, plan
from .scenario import ScenarioInvalid, load_scenario
from .sim import run, write_outputs
from .vessel import Pose


def _print_summary(summary: dict) -> None:
    st = summary["solve_time"]
    print(f"{summary['scenario']}: final error {summary['final_position_error']:.3f} m, "
          f"{summary['final_heading_error_deg']:.2f} deg; "
          f"collisions {summary['collision_violations']}; "
          f"solve time max {st['max'] if st['max'] is None else round(st['max'], 3)} s "
          f"over {st['count']} plans")
    failed = [k for k, ok in summary["checks"].items() if not ok]
    print("PASS" if summary["passed"] else "FAIL: " + ", ".join(failed))


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.latency is not None:
        scenario = replace(scenario, plan_latency_mode=args.latency)
    log = run(scenario)
    summary = write_outputs(scenario, log, args.out)
    _print_summary(summary)
    return 0 if summary["passed"] else 1


def cmd_plan_once(args) -> int:
    scenario = load_scenario(args.scenario)
    params = scenario.params
    footprint = Footprint.rectangle(params.footprint_length, params.footprint_width)
    x0 = scenario.initial_state.as_array()
    region = extract_convex_region(scenario.harbor, x0[:2], scenario.edge_budget)
    ok = True
    opts = default_solve_options(record_history=bool(args.debug_dump))
    try:
        traj = plan(x0, region, scenario.spec, params, footprint=footprint, options=opts)
    except SolverNotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        traj, ok = exc.best, False
    traj.write_csv(args.out)
    s = traj.solve_stats
    if args.debug_dump:
        _write_history(s.history, args.debug_dump)
    end = traj.poses[-1]
    print(f"status {s.status}, {s.iterations} iterations, {s.solve_time:.3f} s, "
          f"max slack {max(traj.slack_summary.values()):.2e}, defect {s.defect_norm:.2e}")
    print(f"final planned pose: north {end[0]:.3f}, east {end[1]:.3f}, "
          f"heading {math.degrees(end[2]):.2f} deg")
    return 0 if ok else 1


def _write_history(history, path) -> None:
    keys = ("iteration", "objective", "infeasibility", "kkt", "step_norm", "alpha")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for rec in history:
            w.writerow([rec[k] if k == "iteration" else repr(float(rec[k])) for k in keys])


def cmd_validate_map(args) -> int:
    try:
        harbor = HarborMap.load(args.map)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, GeometryError) as exc:
        print(f"invalid map: {exc}", file=sys.stderr)
        return 1
    n0, n1, e0, e1 = harbor.world_bounds
    area = sum(signed_area(p) for p in harbor.obstacles)
    print(f"{harbor.name}: {len(harbor.obstacles)} obstacles, total area {area:.2f} m^2, "
          f"north [{n0}, {n1}], east [{e0}, {e1}]")
    if harbor.winding_fixes:
        print(f"reoriented {harbor.winding_fixes} clockwise obstacle(s)")
    if args.point is not None:
        try:
            region = extract_convex_region(harbor, np.array(args.point), args.edge_budget)
        except GeometryError as exc:
            print(f"region extraction failed: {exc}", file=sys.stderr)
            return 1
        print(f"region at {tuple(args.point)}: {region.n_rows} halfplanes")
        for a, b in zip(region.A, region.b):
            print(f"  {a[0]: .4f} n {a[1]:+.4f} e <= {b:.4f}")
    return 0


def cmd_sweep(args) -> int:
    """Several scenario files, or one scenario from seeded random start poses."""
    jobs = []
    if args.random_starts:
        if len(args.scenarios) != 1:
            print("--random-starts takes exactly one scenario", file=sys.stderr)
            return 2
        base = load_scenario(args.scenarios[0])
        rng = np.random.default_rng(args.seed)
        n0, n1, e0, e1 = args.box
        for k in range(args.random_starts):
            pose = Pose(rng.uniform(n0, n1), rng.uniform(e0, e1), rng.uniform(-math.pi, math.pi))
            jobs.append(replace(base.with_initial_pose(pose), name=f"{base.name}_start{k}"))
    else:
        jobs = [load_scenario(p) for p in args.scenarios]

    out = Path(args.out)
    rows, all_passed = [], True
    for k, scenario in enumerate(jobs):
        summary = write_outputs(scenario, run(scenario), out / f"{k:02d}_{scenario.name}")
        _print_summary(summary)
        all_passed &= summary["passed"]
        rows.append({key: summary[key] for key in (
            "scenario", "final_position_error", "final_heading_error_deg",
            "collision_violations", "passed")} | {"max_solve_time": summary["solve_time"]["max"]})
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2) + "\n")
    return 0 if all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dock", description="Harbor docking planner and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="closed-loop simulation of one scenario")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--latency", choices=("zero", "measured"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plan-once", help="single OCP solve from the scenario's initial state")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.add_argument("--debug-dump", metavar="CSV",
                   help="per-iteration objective, infeasibility and step norm")
    p.set_defaults(func=cmd_plan_once)

    p = sub.add_parser("validate-map", help="load a harbor map and optionally extract a region")
    p.add_argument("map")
    p.add_argument("--point", type=float, nargs=2, metavar=("NORTH", "EAST"))
    p.add_argument("--edge-budget", type=int, default=8)
    p.set_defaults(func=cmd_validate_map)

    p = sub.add_parser("sweep", help="batch of scenarios")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--random-starts", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", type=float, nargs=4, default=(-25.0, -5.0, -25.0, 0.0),
                   metavar=("N_MIN", "N_MAX", "E_MIN", "E_MAX"),
                   help="area the random start positions are drawn from")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioInvalid, InvalidRegion, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
