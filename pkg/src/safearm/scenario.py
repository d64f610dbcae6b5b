"""Scenario files: schema-validated YAML with line-accurate diagnostics.

A scenario document has top-level keys name, seed, arm, cdf, obstacles,
planner, filter, episode. Unknown keys anywhere are rejected. Parse and
serialize round-trip to a fixed point; serialization is canonical (stable
key order), so equal scenarios produce identical documents.
"""

from dataclasses import fields as dc_fields

import numpy as np
import yaml

from .arm import ArmModel
from .bubbles import PlannerConfig
from .cdf import GridSpec
from .errors import ConfigError
from .safety import FilterParams
from .world import Obstacle, Scenario


def _collect_marks(node, path, marks):
    """Map every field path to its 1-based source line."""
    marks.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for key_node, value_node in node.value:
            key = key_node.value
            child = f"{path}.{key}" if path else key
            if key in seen:
                raise ConfigError("duplicate key", child, key_node.start_mark.line + 1)
            seen.add(key)
            marks[child] = key_node.start_mark.line + 1
            _collect_marks(value_node, child, marks)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _collect_marks(item, f"{path}[{i}]", marks)


def _check_keys(mapping, allowed, path, marks):
    if not isinstance(mapping, dict):
        raise ConfigError("expected a mapping", path, marks.get(path))
    for key in mapping:
        child = f"{path}.{key}" if path else key
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", child, marks.get(child))


def _located(exc, keys, path, marks):
    """Best-effort narrowing of a constructor error to the offending field."""
    for key in keys:
        child = f"{path}.{key}" if path else key
        if key in str(exc) and child in marks:
            return ConfigError(str(exc), child, marks[child])
    return ConfigError(str(exc), path, marks.get(path))


def _build(cls, mapping, path, marks, defaults=None):
    """Construct a config dataclass from a mapping, keeping diagnostics."""
    allowed = {f.name for f in dc_fields(cls)} - {"rng_seed"}
    _check_keys(mapping, allowed, path, marks)
    kwargs = dict(defaults or {})
    for key, value in mapping.items():
        if isinstance(value, list):
            value = _as_tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise _located(exc, mapping, path, marks) from exc


def _as_tuple(value):
    if isinstance(value, list):
        return tuple(_as_tuple(v) for v in value)
    return value


def _parse_obstacle(entry, path, marks):
    _check_keys(entry, {"id", "points", "position", "motion"}, path, marks)
    if "id" not in entry:
        raise ConfigError("obstacle needs an id", path, marks.get(path))
    if "points" not in entry:
        raise ConfigError("obstacle needs points", path, marks.get(path))
    motion = entry.get("motion")
    if motion is not None:
        mpath = f"{path}.motion"
        kinds = {"static": {"kind"},
                 "script": {"kind", "knots"},
                 "orbit": {"kind", "center", "radius", "angular_rate", "phase"}}
        if not isinstance(motion, dict) or "kind" not in motion:
            raise ConfigError("motion needs a kind", mpath, marks.get(mpath))
        kind = motion["kind"]
        if kind not in kinds:
            raise ConfigError(f"unknown motion kind {kind!r}",
                              f"{mpath}.kind", marks.get(f"{mpath}.kind"))
        _check_keys(motion, kinds[kind], mpath, marks)
    try:
        return Obstacle(id=str(entry["id"]), points=entry["points"],
                        position=entry.get("position", (0.0, 0.0)), motion=motion)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path, marks.get(path)) from exc


def _parse_cdf(section, path, marks):
    if "path" in section:
        _check_keys(section, {"path"}, path, marks)
        if not isinstance(section["path"], str):
            raise ConfigError("path must be a string",
                              f"{path}.path", marks.get(f"{path}.path"))
        return section["path"]
    return _build(GridSpec, section, path, marks)


# scenario documents default to no distributional tightening; the library
# default r_w=0.01 is meant for direct FilterParams use
_FILTER_DEFAULTS = {"wasserstein_radius": 0.0}

_EPISODE_KEYS = {"q_start", "target_ee", "duration", "dt", "k_p",
                 "waypoint_tolerance", "replan_h_threshold"}


def parse_scenario(text, name=""):
    """Parse a scenario document; raises ConfigError with field and line."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise ConfigError(f"not valid YAML: {exc}", line=line) from exc
    if root is None:
        raise ConfigError("empty scenario document")
    marks = {}
    _collect_marks(root, "", marks)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:  # pragma: no cover - compose caught it
        raise ConfigError(f"not valid YAML: {exc}") from exc
    _check_keys(data, {"name", "seed", "arm", "cdf", "obstacles", "planner",
                       "filter", "episode"}, "", marks)

    arm = _build(ArmModel, data.get("arm", {}), "arm", marks)
    field_ref = _parse_cdf(data.get("cdf", {}), "cdf", marks)
    planner = _build(PlannerConfig, data.get("planner", {}), "planner", marks)
    filt = _build(FilterParams, data.get("filter", {}), "filter", marks,
                  defaults=_FILTER_DEFAULTS)

    obstacles = []
    entries = data.get("obstacles", [])
    if not isinstance(entries, list):
        raise ConfigError("expected a list", "obstacles", marks.get("obstacles"))
    for i, entry in enumerate(entries):
        opath = f"obstacles[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError("expected a mapping", opath, marks.get(opath))
        obstacles.append(_parse_obstacle(entry, opath, marks))

    episode = data.get("episode", {})
    _check_keys(episode, _EPISODE_KEYS, "episode", marks)
    for key in ("q_start", "target_ee"):
        if key not in episode:
            raise ConfigError(f"episode needs {key}", "episode",
                              marks.get("episode"))
    extra = {k: episode[k] for k in _EPISODE_KEYS - {"q_start", "target_ee"}
             if k in episode}
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer", "seed", marks.get("seed"))
    try:
        return Scenario(arm=arm, q_start=episode["q_start"],
                        target_ee=episode["target_ee"], obstacles=obstacles,
                        field_ref=field_ref, planner_cfg=planner,
                        filter_params=filt, seed=seed,
                        name=str(data.get("name", name)), **extra)
    except (TypeError, ValueError) as exc:
        raise _located(exc, episode, "episode", marks) from exc


def load_scenario(path):
    """Load a scenario file; the name defaults to the file stem."""
    from pathlib import Path
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    try:
        return parse_scenario(text, name=p.stem)
    except ConfigError as exc:
        wrapped = ConfigError(f"{p.name}: {exc}")
        wrapped.path, wrapped.line = exc.path, exc.line
        raise wrapped from exc


def _dataclass_dict(obj, skip=()):
    out = {}
    for f in dc_fields(obj):
        if f.name in skip:
            continue
        value = getattr(obj, f.name)
        out[f.name] = _plain(value)
    return out


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def serialize_scenario(scenario):
    """Canonical YAML for a scenario; parse(serialize(s)) equals s."""
    doc = {"name": scenario.name, "seed": int(scenario.seed)}
    doc["arm"] = _dataclass_dict(scenario.arm)
    if isinstance(scenario.field_ref, str):
        doc["cdf"] = {"path": scenario.field_ref}
    else:
        doc["cdf"] = _dataclass_dict(scenario.field_ref)
    obstacles = []
    for ob in scenario.obstacles:
        entry = {"id": ob.id, "points": _plain(ob.points),
                 "position": _plain(ob.position)}
        if ob.motion is not None:
            entry["motion"] = _plain(ob.motion)
        obstacles.append(entry)
    doc["obstacles"] = obstacles
    doc["planner"] = _dataclass_dict(scenario.planner_cfg, skip=("rng_seed",))
    doc["filter"] = _dataclass_dict(scenario.filter_params, skip=("rng_seed",))
    doc["episode"] = {"q_start": _plain(scenario.q_start),
                      "target_ee": _plain(scenario.target_ee),
                      "duration": float(scenario.duration),
                      "dt": float(scenario.dt),
                      "k_p": float(scenario.k_p),
                      "waypoint_tolerance": float(scenario.waypoint_tolerance),
                      "replan_h_threshold": float(scenario.replan_h_threshold)}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
