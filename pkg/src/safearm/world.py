"""Deterministic discrete-time episode engine.

Scripted or draggable obstacles, finite-difference obstacle velocity
estimation, a proportional plan-tracking controller, and the
plan -> filter -> integrate tick loop with per-tick trace records.
"""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .arm import (ArmModel, forward_kinematics, workspace_distance_points,
                  workspace_lipschitz_bound, wrap_angles, wrapped_diff, wrapped_dist)
from .bubbles import (PlannerConfig, _edge_points, baseline_planner, build_cover,
                      plan_path, query_path)
from .cdf import CdfField, GridSpec, PointCloud, build_cdf_field
from .safety import FilterParams, filter_command

# point identities are obstacle_index * stride + point_index, stable per episode
_ID_STRIDE = 1 << 20

# after a failed replan, wait this long before trying again so a blocked goal
# does not trigger a full rebuild every tick
_REPLAN_RETRY_SECONDS = 0.25

# runtime guard rings on true surface clearance (m). The distance field's
# contact band makes h and its gradient uninformative within roughly 0.14 m
# of the inflated body, so recovery decisions near contact key off the arm's
# own geometry instead. The rings only arm against obstacles that are
# actually moving; static tight gaps stay governed by the barrier terms.
_GUARD_ALERT = 0.24
_GUARD_HARD = 0.16
_GUARD_RETREAT = 0.20
_APPROACH_SPEED = 0.05  # m/s


def _derived_seed(base, *path):
    """Stable per-purpose integer seed derived from the scenario seed."""
    return int(np.random.SeedSequence([int(base), *path]).generate_state(1)[0])


@dataclass
class Obstacle:
    """A rigid point cluster with an optional scripted or orbital motion.

    Args:
        id: name used in traces and wire messages.
        points: (M, 2) local offsets from the obstacle position (m).
        position: base position; also the fixed position when static.
        motion: None for static, or a dict with kind "script"
            (knots: [[t, [x, y]], ...], linearly interpolated, clamped at
            the ends) or kind "orbit" (center, radius, angular_rate, phase).
        drag_override: externally commanded position; wins over the script
            until cleared.
    """

    id: str
    points: np.ndarray
    position: np.ndarray = (0.0, 0.0)
    motion: dict = None
    drag_override: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.position))):
            raise ValueError(f"obstacle {self.id!r}: geometry must be finite")
        if self.points.shape[0] == 0:
            raise ValueError(f"obstacle {self.id!r}: needs at least one point")
        if self.points.shape[0] >= _ID_STRIDE:
            raise ValueError(f"obstacle {self.id!r}: too many points")
        if self.drag_override is not None:
            self.drag_override = np.asarray(self.drag_override, dtype=float).reshape(2)
        if self.motion is not None:
            self._validate_motion()

    def _validate_motion(self):
        kind = self.motion.get("kind")
        if kind == "static":
            return
        if kind == "script":
            knots = self.motion.get("knots")
            if not knots:
                raise ValueError(f"obstacle {self.id!r}: script needs knots")
            times = [k[0] for k in knots]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(
                    f"obstacle {self.id!r}: script times must be strictly increasing")
            for t, pos in knots:
                if not np.all(np.isfinite([t, pos[0], pos[1]])):
                    raise ValueError(f"obstacle {self.id!r}: script entries must be finite")
        elif kind == "orbit":
            vals = [*self.motion.get("center", (np.nan, np.nan)),
                    self.motion.get("radius", np.nan),
                    self.motion.get("angular_rate", np.nan),
                    self.motion.get("phase", 0.0)]
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"obstacle {self.id!r}: orbit parameters must be finite")
            if self.motion["radius"] < 0:
                raise ValueError(f"obstacle {self.id!r}: orbit radius must be >= 0")
        else:
            raise ValueError(f"obstacle {self.id!r}: unknown motion kind {kind!r}")


def obstacle_position(obstacle, t):
    """Obstacle position at time t; a drag override wins over any script."""
    if obstacle.drag_override is not None:
        return obstacle.drag_override.copy()
    m = obstacle.motion
    if m is None or m["kind"] == "static":
        return obstacle.position.copy()
    if m["kind"] == "script":
        times = [k[0] for k in m["knots"]]
        x = np.interp(t, times, [k[1][0] for k in m["knots"]])
        y = np.interp(t, times, [k[1][1] for k in m["knots"]])
        return np.array([x, y])
    ang = m.get("phase", 0.0) + m["angular_rate"] * t
    return np.asarray(m["center"], dtype=float) + \
        m["radius"] * np.array([np.cos(ang), np.sin(ang)])


def build_cloud(obstacles, t):
    """Workspace point cloud at time t with stable per-point identities."""
    if not obstacles:
        return PointCloud(np.empty((0, 2)), timestamp=t, ids=np.empty(0, dtype=np.int64))
    chunks, ids = [], []
    for index, obstacle in enumerate(obstacles):
        chunks.append(obstacle_position(obstacle, t)[None, :] + obstacle.points)
        ids.append(index * _ID_STRIDE + np.arange(obstacle.points.shape[0]))
    return PointCloud(np.vstack(chunks), timestamp=t, ids=np.concatenate(ids))


def estimate_velocities(prev_cloud, cur_cloud, dt):
    """Finite-difference velocities by matching point identities.

    Returns:
        (cloud, unmatched): the current cloud with velocities filled in, and
        the number of current points with no identity match in the previous
        frame (left at zero velocity). The first frame gives all zeros.
    """
    if prev_cloud is None or len(prev_cloud) == 0 or len(cur_cloud) == 0:
        return cur_cloud, 0
    if prev_cloud.ids is None or cur_cloud.ids is None:
        return cur_cloud, len(cur_cloud)
    if np.array_equal(prev_cloud.ids, cur_cloud.ids):
        vel = (cur_cloud.points - prev_cloud.points) / dt
        return PointCloud(cur_cloud.points, vel, cur_cloud.timestamp, cur_cloud.ids), 0
    lookup = {int(pid): row for row, pid in enumerate(prev_cloud.ids)}
    vel = np.zeros_like(cur_cloud.points)
    unmatched = 0
    for row, pid in enumerate(cur_cloud.ids):
        prev_row = lookup.get(int(pid))
        if prev_row is None:
            unmatched += 1
        else:
            vel[row] = (cur_cloud.points[row] - prev_cloud.points[prev_row]) / dt
    return PointCloud(cur_cloud.points, vel, cur_cloud.timestamp, cur_cloud.ids), unmatched


@dataclass
class Scenario:
    """Everything needed to run one reproducible episode."""

    arm: ArmModel
    q_start: np.ndarray
    target_ee: np.ndarray
    obstacles: list = dc_field(default_factory=list)
    field_ref: object = dc_field(default_factory=GridSpec)
    planner_cfg: PlannerConfig = dc_field(default_factory=PlannerConfig)
    # episodes default to no distributional tightening: the field's certified
    # L_p is dominated by the reach boundary, so even a small radius turns
    # into a command-scale margin that fights the tracker everywhere
    filter_params: FilterParams = dc_field(
        default_factory=lambda: FilterParams(wasserstein_radius=0.0))
    duration: float = 12.0
    dt: float = 0.02
    k_p: float = 6.0
    waypoint_tolerance: float = 0.02
    # must stay below the planner safety margin: fresh plans guarantee
    # waypoint h >= margin, so a threshold at or above it would retrigger
    # replanning forever
    replan_h_threshold: float = 0.045
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        self.q_start = np.asarray(self.q_start, dtype=float).reshape(-1)
        self.target_ee = np.asarray(self.target_ee, dtype=float).reshape(2)
        if self.q_start.shape[0] != self.arm.n_joints:
            raise ValueError(
                f"q_start has {self.q_start.shape[0]} joints, arm has {self.arm.n_joints}")
        if not (np.all(np.isfinite(self.q_start)) and np.all(np.isfinite(self.target_ee))):
            raise ValueError("q_start and target_ee must be finite")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.k_p <= 0:
            raise ValueError(f"k_p must be > 0, got {self.k_p}")
        if self.waypoint_tolerance <= 0:
            raise ValueError(f"waypoint_tolerance must be > 0, got {self.waypoint_tolerance}")
        if self.replan_h_threshold < 0:
            raise ValueError(
                f"replan_h_threshold must be >= 0, got {self.replan_h_threshold}")
        if self.replan_h_threshold >= self.planner_cfg.safety_margin:
            raise ValueError(
                "replan_h_threshold must be below the planner safety margin "
                f"({self.replan_h_threshold} >= {self.planner_cfg.safety_margin})")


@dataclass
class TraceRecord:
    """One tick of an episode; q is the state the commands were computed at."""

    t: float
    q: np.ndarray
    u_nom: np.ndarray
    u: np.ndarray
    h: float
    dhdt: float
    status: str
    rows_kept: int
    argmin_point: np.ndarray
    waypoint_index: int
    events: list


@dataclass
class Metrics:
    success: bool
    min_h: float
    oracle_min_clearance: float
    collisions: int
    path_length_executed: float
    correction_energy: float
    planner: dict


def _field_key(arm, ref):
    if isinstance(ref, str):
        return ref
    return (arm, ref.q_cells, ref.p_cells, ref.workspace, ref.oracle_cells)


def resolve_field(scenario, field=None, cache=None):
    """Load or build the scenario's distance field, with optional caching."""
    key = _field_key(scenario.arm, scenario.field_ref)
    if field is not None:
        if cache is not None:
            cache[key] = field
        return field
    if cache is not None and key in cache:
        return cache[key]
    if isinstance(scenario.field_ref, str):
        out = CdfField.load(scenario.field_ref)
    else:
        out = build_cdf_field(scenario.arm, scenario.field_ref)
    if cache is not None:
        cache[key] = out
    return out


def nominal_controller(q, waypoints, index, k_p, tolerance, u_max):
    """Proportional tracking of a waypoint polyline on the torus.

    Advances past every waypoint within tolerance; at the final waypoint
    within tolerance the command is zero.

    Returns:
        (u_nom, index): clamped command and the updated waypoint index.
    """
    index = min(index, len(waypoints) - 1)
    while index < len(waypoints) - 1 and wrapped_dist(q, waypoints[index]) <= tolerance:
        index += 1
    error = wrapped_diff(waypoints[index], q)
    if index == len(waypoints) - 1 and np.linalg.norm(error) <= tolerance:
        return np.zeros(len(error)), index
    return np.clip(k_p * error, -u_max, u_max), index


class EpisodeState:
    """Mutable state owned by the tick loop; one instance per episode."""

    def __init__(self, scenario, field, cloud, graph, plan):
        self.field = field
        self.q = wrap_angles(scenario.q_start)
        self.tick = 0
        self.cloud = cloud
        self.prev_cloud = cloud
        self.prev_clearance = None
        self.graph = graph
        self.plan = plan
        self.waypoint_index = 0
        self.target_ee = scenario.target_ee.copy()
        self.filter_enabled = True
        self.pending_jogs = {}
        self.force_replan = False
        self.replan_count = 0
        self.replan_cooldown = 0
        self.goal_reached = False
        self.min_h = float("inf")
        self.min_clearance = float("inf")
        self.collisions = 0
        self.path_length = 0.0
        self.energy = 0.0


def init_episode(scenario, field=None):
    """Build the field, the t=0 cloud, and the initial plan."""
    field = resolve_field(scenario, field)
    cloud = build_cloud(scenario.obstacles, 0.0)
    cfg = replace(scenario.planner_cfg,
                  rng_seed=_derived_seed(scenario.seed, 3, 0))
    graph = build_cover(scenario.arm, field, cloud, scenario.q_start,
                        scenario.target_ee, cfg)
    return EpisodeState(scenario, field, cloud, graph, query_path(graph))


def _clearance_gradient(arm, q, points, step=1e-4):
    """Finite-difference gradient of the minimum surface clearance.

    Unlike the field gradient this stays informative inside the contact
    band, so the retreat reflex can still find a direction there.
    """
    grad = np.zeros(len(q))
    for j in range(len(q)):
        e = np.zeros(len(q))
        e[j] = step
        hi = workspace_distance_points(arm, q + e, points).min()
        lo = workspace_distance_points(arm, q - e, points).min()
        grad[j] = (hi - lo) / (2 * step)
    return grad


def _maybe_replan(state, scenario, events, h_self, pressed, supervised):
    """Revalidate the plan; returns True when the tracker may follow it.

    Under supervision the plan is endangered when the arm's own barrier
    value, the clearance guard (pressed), the segment being tracked, or any
    remaining waypoint dips below the threshold. Endangerment triggers a
    replan (cooldown-gated after a failure); while no safe plan exists the
    caller holds or retreats rather than pressing on. Unsupervised episodes
    only replan on an external request.
    """
    if state.replan_cooldown > 0:
        state.replan_cooldown -= 1
    if not state.plan.found:
        return False
    endangered = False
    if supervised:
        endangered = pressed or h_self < scenario.replan_h_threshold
        if not endangered:
            remaining = state.plan.waypoints[state.waypoint_index:]
            probe = list(remaining)
            if remaining:
                probe.extend(_edge_points(state.q, remaining[0], 0.1))
            if probe:
                min_h = state.field.ncsb_batch(np.asarray(probe), state.cloud).min()
                endangered = bool(min_h < scenario.replan_h_threshold)
    wanted = state.force_replan or endangered
    cooling = state.replan_cooldown > 0 and not state.force_replan
    if wanted and not cooling:
        state.force_replan = False
        state.replan_count += 1
        cfg = replace(scenario.planner_cfg,
                      rng_seed=_derived_seed(scenario.seed, 3, state.replan_count))
        graph = build_cover(scenario.arm, state.field, state.cloud, state.q,
                            state.target_ee, cfg)
        plan = query_path(graph)
        if plan.found:
            state.graph = graph
            state.plan = plan
            state.waypoint_index = 0
            events.append("replan")
            return True
        state.replan_cooldown = int(np.ceil(_REPLAN_RETRY_SECONDS / scenario.dt))
        events.append("replan-failed")
    return not endangered


def step(state, scenario):
    """Advance one tick and return its TraceRecord.

    Tick order: obstacles move, the cloud is rebuilt and velocities
    estimated, the plan is revalidated, the nominal command is produced
    (a pending jog overrides the tracker for this tick), the filter runs,
    and the state integrates q <- wrap(q + u dt).

    With the filter enabled a recovery supervisor also runs: tracking is
    paused while the plan is endangered, and a retreat reflex backs the arm
    away when clearance gets thin. Disabling the filter disables the whole
    safety layer; only the tracker and externally requested replans remain.
    """
    t = state.tick * scenario.dt
    u_max = scenario.arm.joint_velocity_limit
    events = []

    cloud = build_cloud(scenario.obstacles, t)
    cloud, unmatched = estimate_velocities(state.prev_cloud, cloud, scenario.dt)
    if unmatched:
        events.append("velocity-mismatch")
    state.cloud = cloud
    state.prev_cloud = cloud

    if len(cloud):
        gaps = workspace_distance_points(scenario.arm, state.q, cloud.points)
        guard_index = int(np.argmin(gaps))
        clearance = float(gaps[guard_index])
    else:
        guard_index, clearance = None, float("inf")
    prev_clearance = state.prev_clearance
    state.prev_clearance = clearance

    h, argmin_index = state.field.ncsb_value(state.q, cloud)
    argmin_point = None if argmin_index is None else cloud.points[argmin_index].copy()

    pressed = False
    if state.filter_enabled and guard_index is not None:
        closing = prev_clearance is not None and \
            prev_clearance - clearance > _APPROACH_SPEED * scenario.dt
        moving = float(np.linalg.norm(cloud.velocities[guard_index])) > _APPROACH_SPEED
        pressed = moving and (clearance < _GUARD_HARD or
                              (clearance < _GUARD_ALERT and closing))
    track_ok = _maybe_replan(state, scenario, events, float(h), pressed,
                             supervised=state.filter_enabled)

    if state.pending_jogs:
        delta = np.zeros(scenario.arm.n_joints)
        for joint, d in state.pending_jogs.items():
            delta[joint] = d
        state.pending_jogs = {}
        u_nom = np.clip(delta / scenario.dt, -u_max, u_max)
    elif track_ok:
        u_nom, state.waypoint_index = nominal_controller(
            state.q, state.plan.waypoints, state.waypoint_index,
            scenario.k_p, scenario.waypoint_tolerance, u_max)
    elif state.filter_enabled and (h < scenario.replan_h_threshold or
                                   clearance < _GUARD_RETREAT):
        # retreat reflex: while the plan is paused and margin is thin, back
        # straight up the clearance gradient; the field gradient is useless
        # here because the contact band zeroes it exactly where retreat
        # matters most
        grad = _clearance_gradient(scenario.arm, state.q, cloud.points)
        norm = float(np.linalg.norm(grad))
        u_nom = u_max * grad / norm if norm > 1e-9 else np.zeros(scenario.arm.n_joints)
    else:
        u_nom = np.zeros(scenario.arm.n_joints)
    if state.filter_enabled:
        u, diag = filter_command(state.field, state.q, cloud, u_nom, u_max,
                                 scenario.filter_params,
                                 seed=_derived_seed(scenario.seed, 4, state.tick))
        dhdt = diag["dhdt"]
        status = diag["status"]
        rows_kept = diag["rows_kept"]
        if status == "infeasible":
            events.append("infeasible")
    else:
        u = np.clip(u_nom, -u_max, u_max)
        dhdt = state.field.ncsb_time_derivative(
            state.q, cloud, scenario.filter_params.dt_horizon)
        status = "disabled"
        rows_kept = 0

    if not state.goal_reached:
        # the tracker parks within waypoint_tolerance of the goal config, so
        # allow the corresponding workspace slack on top of the planner's
        # end-effector tolerance
        success_tol = scenario.planner_cfg.goal_ee_tolerance + \
            workspace_lipschitz_bound(scenario.arm) * scenario.waypoint_tolerance
        _, ee = forward_kinematics(scenario.arm, state.q)
        if np.linalg.norm(ee - state.target_ee) <= success_tol:
            state.goal_reached = True
            events.append("goal-reached")

    if clearance <= 0.0:
        state.collisions += 1
        events.append("collision")
    state.min_clearance = min(state.min_clearance, clearance)
    state.min_h = min(state.min_h, float(h))
    state.energy += float(np.dot(u - u_nom, u - u_nom)) * scenario.dt

    record = TraceRecord(t=t, q=state.q.copy(), u_nom=u_nom, u=u,
                         h=float(h), dhdt=float(dhdt), status=status,
                         rows_kept=rows_kept, argmin_point=argmin_point,
                         waypoint_index=state.waypoint_index, events=events)

    q_next = wrap_angles(state.q + u * scenario.dt)
    state.path_length += wrapped_dist(state.q, q_next)
    state.q = q_next
    state.tick += 1
    return record


def _planner_stats(state):
    return {"found": state.plan.found, "reason": state.plan.reason,
            "h_evaluations": state.plan.h_evaluations,
            "path_length": state.plan.path_length,
            "samples_drawn": state.plan.samples_drawn,
            "replans": state.replan_count}


def abort_metrics(state, scenario):
    """Failure metrics for an episode whose initial plan was not found."""
    h0, _ = state.field.ncsb_value(state.q, state.cloud)
    if len(state.cloud):
        clearance = float(workspace_distance_points(
            scenario.arm, state.q, state.cloud.points).min())
    else:
        clearance = float("inf")
    return Metrics(success=False, min_h=float(h0),
                   oracle_min_clearance=clearance,
                   collisions=int(clearance <= 0.0),
                   path_length_executed=0.0, correction_energy=0.0,
                   planner=_planner_stats(state))


def finalize_metrics(state):
    return Metrics(success=state.goal_reached, min_h=state.min_h,
                   oracle_min_clearance=state.min_clearance,
                   collisions=state.collisions,
                   path_length_executed=state.path_length,
                   correction_energy=state.energy,
                   planner=_planner_stats(state))


def run_episode(scenario, field=None, filter_enabled=True):
    """Run the full episode; deterministic given the scenario seed.

    Returns:
        (trace, metrics): per-tick records and summary metrics. Oracle
        clearance is judged against the true obstacle positions, never the
        filter's possibly perturbed inputs. A planner failure at t=0 aborts
        with an empty trace and failure metrics.
    """
    state = init_episode(scenario, field)
    state.filter_enabled = filter_enabled
    if not state.plan.found:
        return [], abort_metrics(state, scenario)
    ticks = max(1, int(round(scenario.duration / scenario.dt)))
    trace = [step(state, scenario) for _ in range(ticks)]
    return trace, finalize_metrics(state)


def bench_planners(scenarios, seeds, fields=None):
    """Compare both planners over a scenario suite at t=0 snapshots.

    Failures are excluded from the medians and show up in success_rate.

    Returns:
        (rows, ratios): rows with keys scenario/planner/median_checks/
        median_path_len/success_rate, and per-scenario baseline-over-bubble
        check ratios plus bubble-over-baseline path length ratios.
    """
    cache = dict(fields) if fields else {}
    rows, ratios = [], []
    for scenario in scenarios:
        field = resolve_field(scenario, cache=cache)
        cloud = build_cloud(scenario.obstacles, 0.0)
        per_planner = {}
        for planner_name, planner in (("bubble", plan_path),
                                      ("baseline", baseline_planner)):
            checks, lengths, successes = [], [], 0
            for seed in seeds:
                cfg = replace(scenario.planner_cfg, rng_seed=int(seed))
                plan = planner(scenario.arm, field, cloud, scenario.q_start,
                               scenario.target_ee, cfg)
                if plan.found:
                    successes += 1
                    checks.append(plan.h_evaluations)
                    lengths.append(plan.path_length)
            per_planner[planner_name] = (checks, lengths)
            rows.append({
                "scenario": scenario.name,
                "planner": planner_name,
                "median_checks": float(np.median(checks)) if checks else float("nan"),
                "median_path_len": float(np.median(lengths)) if lengths else float("nan"),
                "success_rate": successes / len(seeds),
            })
        bubble_checks, bubble_lengths = per_planner["bubble"]
        base_checks, base_lengths = per_planner["baseline"]
        if bubble_checks and base_checks:
            ratios.append({
                "scenario": scenario.name,
                "check_ratio": float(np.median(base_checks) / np.median(bubble_checks)),
                "path_ratio": float(np.median(bubble_lengths) / np.median(base_lengths)),
            })
        else:
            ratios.append({"scenario": scenario.name,
                           "check_ratio": float("nan"), "path_ratio": float("nan")})
    return rows, ratios
