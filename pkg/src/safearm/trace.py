"""Trace and metrics persistence.

Traces are line-delimited JSON: a header line (scenario document, initial
plan, initial bubble cover) followed by one record per tick. Numbers are
serialized with shortest round-trip repr, so identical runs produce
byte-identical files. Metrics are a single YAML document.
"""

import json

import yaml

from .scenario import parse_scenario, serialize_scenario

TRACE_VERSION = "1"


def plan_dict(plan):
    """Plan fields worth persisting; planning_time is deliberately excluded
    so traces stay byte-identical across runs."""
    return {"found": bool(plan.found),
            "reason": plan.reason,
            "waypoints": [[float(v) for v in w] for w in plan.waypoints],
            "path_length": float(plan.path_length),
            "h_evaluations": int(plan.h_evaluations),
            "samples_drawn": int(plan.samples_drawn)}


def bubbles_dict(graph):
    return [{"center": [float(v) for v in b.center], "radius": float(b.radius)}
            for b in graph.bubbles]


def record_dict(record):
    return {"kind": "tick",
            "t": float(record.t),
            "q": [float(v) for v in record.q],
            "u_nom": [float(v) for v in record.u_nom],
            "u": [float(v) for v in record.u],
            "h": float(record.h),
            "dhdt": float(record.dhdt),
            "status": record.status,
            "rows_kept": int(record.rows_kept),
            "argmin_point": None if record.argmin_point is None
            else [float(v) for v in record.argmin_point],
            "waypoint_index": int(record.waypoint_index),
            "events": list(record.events)}


def write_trace(path, scenario, records, plan, graph):
    header = {"kind": "header", "version": TRACE_VERSION,
              "scenario": yaml.safe_load(serialize_scenario(scenario)),
              "plan": plan_dict(plan),
              "bubbles": bubbles_dict(graph)}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for record in records:
            fh.write(json.dumps(record_dict(record)) + "\n")


def read_trace(path):
    """Returns (header, records); raises ValueError on malformed files."""
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trace file")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError(f"{path}: first line is not a trace header")
    if header.get("version") != TRACE_VERSION:
        raise ValueError(f"{path}: unsupported trace version "
                         f"{header.get('version')!r}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        if rec.get("kind") != "tick":
            raise ValueError(f"{path}:{i}: expected a tick record")
        records.append(rec)
    return header, records


def trace_scenario(header):
    """Rebuild the Scenario a trace was recorded from."""
    return parse_scenario(yaml.safe_dump(header["scenario"], sort_keys=False),
                          name=header["scenario"].get("name", ""))


def metrics_dict(metrics):
    return {"success": bool(metrics.success),
            "min_h": float(metrics.min_h),
            "oracle_min_clearance": float(metrics.oracle_min_clearance),
            "collisions": int(metrics.collisions),
            "path_length_executed": float(metrics.path_length_executed),
            "correction_energy": float(metrics.correction_energy),
            "planner": {k: (float(v) if isinstance(v, float) else v)
                        for k, v in metrics.planner.items()}}


def write_metrics(path, metrics):
    with open(path, "w") as fh:
        yaml.safe_dump(metrics_dict(metrics), fh, sort_keys=False)
