"""Command-line entry points.

Subcommands:
  plan    grow trees only; writes per-robot reference CSVs, an SVG, a report
  track   full plan-then-track fleet pipeline (planar scenarios)
  arm     joint-space planning; writes the joint path CSV, a configuration-
          space SVG, and the active-barrier-value CSV plus chart
  verify  recompute all barriers along a stored trajectory CSV

Exit codes: 0 success, 1 usage/parse/IO error, 2 planning exhaustion or an
unsafe start, 3 safety verification failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .arm import arm_plan
from .core import JointState, RandomSource
from .mpc import plan_fleet
from .rrt import UnsafeStartError, plan
from .scenario import (
    RobotReport,
    RunReport,
    ScenarioError,
    Scenario,
    arm_active_barrier_records,
    dump_scenario,
    format_report,
    load_scenario,
    min_circle_barrier,
    min_pairwise_distance,
    read_trajectory_csv,
    verify_trajectory,
    write_barrier_records_csv,
    write_trajectory_csv,
)
from .svg import render_barrier_chart, render_svg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_EXHAUSTED = 2
EXIT_UNSAFE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbfplan", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file (.scn)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="output directory (default runs/<name>-seed<N>)")

    common(sub.add_parser("plan", help="tree planning only"))
    common(sub.add_parser("track", help="plan and track a planar fleet"))
    common(sub.add_parser("arm", help="joint-space planning for arm scenarios"))
    v = sub.add_parser("verify", help="re-check barriers along a stored trajectory")
    v.add_argument("scenario")
    v.add_argument("trajectory", help="trajectory CSV produced by plan/track/arm")
    v.add_argument("--tol", type=float, default=1e-3, help="barrier violation tolerance")
    v.add_argument("--robot", type=int, default=1, help="robot whose radius inflates obstacles")
    return parser


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = int(args.seed)
    return scenario


def _out_dir(args, scenario: Scenario) -> Path:
    if args.out is not None:
        out = Path(args.out)
    else:
        out = Path("runs") / f"{scenario.name}-seed{scenario.seed}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_report(report: RunReport, out: Path) -> None:
    (out / "report.txt").write_text(format_report(report, include_timing=False), encoding="utf-8")
    sys.stdout.write(format_report(report, include_timing=True))


def _cmd_plan(args) -> int:
    scenario = _load(args)
    if scenario.is_arm:
        print("plan handles planar/unicycle scenarios; use the arm subcommand", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args, scenario)
    started = time.monotonic()
    report = RunReport(scenario.name, scenario.kind, scenario.seed)
    base = RandomSource(scenario.seed)
    trees, references = [], []
    ok = True
    from .mpc import PathDisc  # local import to keep CLI import cheap

    for rank, spec in enumerate(sorted(scenario.robots, key=lambda r: r.priority)):
        ws_i = scenario.workspace.with_goal(spec.goal)
        rng = RandomSource(base.seed, (rank, 0))
        obstacles = list(scenario.obstacles) + [
            PathDisc(ref, other.radius) for other, ref in references
        ]
        try:
            res = plan(spec.start, ws_i, obstacles, scenario.steer, scenario.gains,
                       _plan_bounds(scenario), rng, max_iters=scenario.max_iters,
                       inflation=spec.radius)
        except UnsafeStartError:
            report.robots.append(RobotReport(spec.id, "infeasible-start"))
            ok = False
            break
        report.robots.append(RobotReport(spec.id, res.status, plan_iterations=res.iterations))
        trees.append(res.tree)
        if not res.reached:
            ok = False
            break
        references.append((spec, res.reference))
        write_trajectory_csv(res.reference, out / f"reference_{spec.id}.csv")

    ref_trajs = [ref for _, ref in references]
    if ref_trajs:
        report.min_barrier = min(
            min_circle_barrier(ref, scenario.obstacles, spec.radius)
            for (spec, ref) in references
        )
        if len(ref_trajs) > 1:
            report.min_pair_distance = min_pairwise_distance(ref_trajs)
    render_svg(scenario, trees=trees, references=ref_trajs, path=out / "plan.svg")
    report.wall_clock_s = time.monotonic() - started
    _emit_report(report, out)
    return EXIT_OK if ok else EXIT_EXHAUSTED


def _plan_bounds(scenario: Scenario):
    lo, hi = scenario.control_limits
    if scenario.kind == "planar":
        return scenario.control_bounds(2)
    return scenario.control_bounds(1)


def _cmd_track(args) -> int:
    scenario = _load(args)
    if scenario.kind != "planar":
        print("track requires a planar scenario", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args, scenario)
    started = time.monotonic()
    report = RunReport(scenario.name, scenario.kind, scenario.seed)
    rng = RandomSource(scenario.seed)
    try:
        fleet = plan_fleet(scenario.robots, scenario.workspace, scenario.obstacles,
                           scenario.steer, scenario.mpc, scenario.gains,
                           scenario.control_limits, rng, max_iters=scenario.max_iters)
    except UnsafeStartError as exc:
        print(f"unsafe fleet start: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    trees, refs, trackeds = [], [], []
    min_h = None
    for outcome in fleet.outcomes:
        rr = RobotReport(outcome.spec.id, outcome.status)
        if outcome.plan_result is not None:
            rr.plan_iterations = outcome.plan_result.iterations
            trees.append(outcome.plan_result.tree)
        rr.track_steps = outcome.track_steps
        report.robots.append(rr)
        if outcome.reference is not None:
            refs.append(outcome.reference)
            write_trajectory_csv(outcome.reference, out / f"reference_{outcome.spec.id}.csv")
        if outcome.tracked is not None:
            trackeds.append(outcome.tracked)
            write_trajectory_csv(outcome.tracked, out / f"tracked_{outcome.spec.id}.csv")
        for traj in (outcome.reference, outcome.tracked):
            if traj is not None:
                h = min_circle_barrier(traj, scenario.obstacles, outcome.spec.radius)
                min_h = h if min_h is None else min(min_h, h)
    report.min_barrier = min_h
    phase_minima = [m for m in (min_pairwise_distance(refs) if len(refs) > 1 else None,
                                min_pairwise_distance(trackeds) if len(trackeds) > 1 else None)
                    if m is not None]
    if phase_minima:
        report.min_pair_distance = min(phase_minima)
    render_svg(scenario, trees=trees, references=refs, tracked=trackeds, path=out / "track.svg")
    report.wall_clock_s = time.monotonic() - started
    _emit_report(report, out)
    return EXIT_OK if fleet.all_reached else EXIT_EXHAUSTED


def _cmd_arm(args) -> int:
    scenario = _load(args)
    if not scenario.is_arm:
        print("arm requires an arm scenario", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args, scenario)
    started = time.monotonic()
    report = RunReport(scenario.name, scenario.kind, scenario.seed)
    chain = scenario.arm.build_chain(scenario.kind)
    rng = RandomSource(scenario.seed, (0, 0))
    try:
        res = arm_plan(chain, JointState(scenario.arm.theta_init), JointState(scenario.arm.theta_goal),
                       scenario.arm.goal_radius, scenario.obstacles, scenario.steer,
                       scenario.arm.thresholds, scenario.gains,
                       scenario.control_bounds(chain.dof), rng, max_iters=scenario.max_iters,
                       joint_limits=scenario.workspace)
    except UnsafeStartError:
        report.robots.append(RobotReport("arm", "infeasible-start"))
        report.wall_clock_s = time.monotonic() - started
        _emit_report(report, out)
        return EXIT_EXHAUSTED
    report.robots.append(RobotReport("arm", res.status, plan_iterations=res.iterations))
    if res.reached:
        write_trajectory_csv(res.reference, out / "joints.csv")
        records = arm_active_barrier_records(res.reference, chain, scenario.obstacles,
                                             scenario.arm.thresholds)
        write_barrier_records_csv(records, out / "barriers.csv")
        render_barrier_chart(records, out / "barriers.svg")
        if records:
            report.min_barrier = min(h for _, _, _, h in records)
    render_svg(scenario, trees=[res.tree], references=[res.reference] if res.reached else [],
               path=out / "cspace.svg")
    report.wall_clock_s = time.monotonic() - started
    _emit_report(report, out)
    return EXIT_OK if res.reached else EXIT_EXHAUSTED


def _cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    try:
        traj = read_trajectory_csv(args.trajectory)
    except (OSError, ValueError) as exc:
        print(f"cannot read trajectory: {exc}", file=sys.stderr)
        return EXIT_USAGE
    violations = verify_trajectory(scenario, traj, tol=args.tol, robot_index=args.robot - 1)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        print(f"{len(violations)} barrier violation(s) found", file=sys.stderr)
        return EXIT_UNSAFE
    print(f"ok: {len(traj)} samples, no barrier below -{args.tol:g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if args.command == "plan":
            return _cmd_plan(args)
        if args.command == "track":
            return _cmd_track(args)
        if args.command == "arm":
            return _cmd_arm(args)
        if args.command == "verify":
            return _cmd_verify(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
