"""Command-line entry points.

Subcommands: build-cdf, plan, run, bench, replay, serve. Exit codes:
0 success, 1 task failure (plan not found, episode failed), 2 bad
configuration or arguments, 3 requested port unavailable.
"""

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np
import yaml

from .bubbles import baseline_planner, plan_path
from .cdf import build_cdf_field
from .errors import ConfigError
from .scenario import load_scenario
from .trace import read_trace, write_metrics, write_trace
from .world import (abort_metrics, bench_planners, build_cloud,
                    finalize_metrics, init_episode, resolve_field, step)

log = logging.getLogger("safearm")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PORT = 3


def _setup_logging():
    level = os.environ.get("SAFEARM_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _cmd_build_cdf(args):
    scenario = load_scenario(args.scenario)
    if isinstance(scenario.field_ref, str):
        print(f"scenario references a prebuilt field: {scenario.field_ref}",
              file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    field = build_cdf_field(scenario.arm, scenario.field_ref)
    elapsed = time.perf_counter() - start
    field.save(args.out)
    lq, lp = field.certified_lipschitz()
    print(f"wrote {args.out}")
    print(f"L_q {lq:.6f}")
    print(f"L_p {lp:.6f}")
    print(f"build_time_s {elapsed:.2f}")
    return EXIT_OK


def _cmd_plan(args):
    scenario = load_scenario(args.scenario)
    field = resolve_field(scenario)
    cloud = build_cloud(scenario.obstacles, 0.0)
    planner = baseline_planner if args.baseline else plan_path
    plan = planner(scenario.arm, field, cloud, scenario.q_start,
                   scenario.target_ee, scenario.planner_cfg)
    doc = {"found": bool(plan.found), "reason": plan.reason,
           "waypoints": [[float(v) for v in w] for w in plan.waypoints],
           "path_length": float(plan.path_length),
           "h_evaluations": int(plan.h_evaluations),
           "samples_drawn": int(plan.samples_drawn),
           "planning_time_s": float(plan.planning_time)}
    yaml.safe_dump(doc, sys.stdout, sort_keys=False)
    if not plan.found:
        print(plan.reason, file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_run(args):
    scenario = load_scenario(args.scenario)
    field = resolve_field(scenario)
    state = init_episode(scenario, field)
    state.filter_enabled = not args.no_filter
    initial_plan, initial_graph = state.plan, state.graph
    if state.plan.found:
        ticks = max(1, int(round(scenario.duration / scenario.dt)))
        records = [step(state, scenario) for _ in range(ticks)]
        metrics = finalize_metrics(state)
    else:
        records = []
        metrics = abort_metrics(state, scenario)
        log.warning("no initial plan: %s", state.plan.reason)
    if args.trace:
        write_trace(args.trace, scenario, records, initial_plan, initial_graph)
    if args.metrics:
        write_metrics(args.metrics, metrics)
    print(f"success {metrics.success}")
    print(f"collisions {metrics.collisions}")
    print(f"min_h {metrics.min_h:.6f}")
    return EXIT_OK if metrics.success and metrics.collisions == 0 else EXIT_FAILURE


def _cmd_bench(args):
    import glob
    paths = sorted(glob.glob(os.path.join(args.suite, "*.yaml")))
    if not paths:
        print(f"no scenario files in {args.suite}", file=sys.stderr)
        return EXIT_CONFIG
    scenarios = [load_scenario(p) for p in paths]
    rows, ratios = bench_planners(scenarios, seeds=range(args.seeds))
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["scenario", "planner",
                                                "median_checks",
                                                "median_path_len",
                                                "success_rate"])
        writer.writeheader()
        writer.writerows(rows)
    for r in ratios:
        print(f"{r['scenario']}: check_ratio {r['check_ratio']:.2f} "
              f"path_ratio {r['path_ratio']:.3f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_replay(args):
    header, records = read_trace(args.trace)
    from .server import serve_replay
    return serve_replay(header, records, port=args.port, speed=args.speed)


def _cmd_serve(args):
    scenario = load_scenario(args.scenario)
    from .server import serve_live
    return serve_live(scenario, port=args.port, tick_hz=args.tick_hz)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="safearm",
        description="Safe planar-arm planning and control: distance-field "
                    "barriers, bubble-cover planning, robust filtering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-cdf", help="precompute and save a distance field")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--out", required=True, help="output field binary path")
    p.set_defaults(func=_cmd_build_cdf)

    p = sub.add_parser("plan", help="plan once and print the result")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--baseline", action="store_true",
                   help="use the PRM baseline instead of the bubble planner")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("run", help="run one episode headless")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--trace", help="write a JSONL trace here")
    p.add_argument("--metrics", help="write a YAML metrics summary here")
    p.add_argument("--no-filter", action="store_true",
                   help="bypass the safety layer (ablation)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="compare planners across a scenario suite")
    p.add_argument("--suite", required=True, help="directory of scenario YAMLs")
    p.add_argument("--seeds", type=int, default=20, help="seeds per scenario")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("replay", help="serve a recorded trace for playback")
    p.add_argument("--trace", required=True, help="JSONL trace to replay")
    p.add_argument("--speed", type=float, default=1.0, help="playback speed")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="run a live episode with the web console")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--tick-hz", type=float, default=50.0,
                   help="wall-clock tick rate")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches EXIT_CONFIG
        return exc.code
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
