"""Safe-bubble-cover planner and its dense-checking baseline.

A bubble is a configuration-space ball around a sampled configuration whose
radius comes from the barrier value and the certified Lipschitz constant, so
everything inside it is provably clear of the cloud. Planning connects
overlapping bubbles; no barrier evaluations are spent inside existing
bubbles. The baseline is a PRM over the same sample stream that instead
checks every node and edge densely, which is what the bubble cover avoids.
"""

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .arm import fk_batch, forward_kinematics, wrap_angles, wrapped_diff, wrapped_dist


@dataclass
class PlannerConfig:
    """Sampling and certification knobs shared by both planners.

    Args:
        sample_budget: configuration samples drawn in the growth loop.
        goal_ee_tolerance: accepted end-effector error at the goal (m).
        goal_bias: fraction of samples drawn near goal configurations.
        min_radius: bubbles smaller than this are rejected (rad).
        safety_margin: barrier margin mu certifying bubble interiors (rad).
        rng_seed: seed for the sample stream.
        goal_config_count: goal configurations kept from rejection sampling.
        goal_sample_budget: rejection-sampling attempts for goal configs.
        goal_local_sigma: spread of goal-biased samples (rad).
        connection_radius: baseline PRM neighbor radius (rad).
        max_neighbors: baseline PRM nearest-neighbor cap per node.
        edge_resolution: baseline dense-check spacing along edges (rad).
    """

    sample_budget: int = 2000
    goal_ee_tolerance: float = 0.05
    goal_bias: float = 0.15
    min_radius: float = 0.02
    safety_margin: float = 0.05
    rng_seed: int = 0
    goal_config_count: int = 6
    goal_sample_budget: int = 20000
    goal_local_sigma: float = 0.4
    connection_radius: float = 0.9
    max_neighbors: int = 10
    edge_resolution: float = 0.05

    def __post_init__(self):
        if self.sample_budget < 1:
            raise ValueError(f"sample_budget must be >= 1, got {self.sample_budget}")
        if self.safety_margin < 0.0:
            raise ValueError(f"safety_margin must be >= 0, got {self.safety_margin}")
        if self.min_radius <= 0.0:
            raise ValueError(f"min_radius must be > 0, got {self.min_radius}")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError(f"goal_bias must be in [0, 1], got {self.goal_bias}")
        if self.goal_ee_tolerance <= 0.0 or self.edge_resolution <= 0.0:
            raise ValueError("tolerances and resolutions must be > 0")


@dataclass
class Bubble:
    """Certified-safe ball: h >= safety margin everywhere within radius."""

    center: np.ndarray
    radius: float


@dataclass
class BubbleGraph:
    """Connectivity structure produced by build_cover."""

    bubbles: list
    edges: list                      # (i, j, witness)
    start_index: int
    goal_entries: list               # (bubble_index, goal_config)
    connected: bool
    reason: str                      # "ok" or why the cover failed
    h_evaluations: int
    samples_drawn: int
    build_time: float


@dataclass
class Plan:
    """Planner output: waypoint polyline plus the comparison stats."""

    waypoints: list
    found: bool
    reason: str
    h_evaluations: int
    path_length: float
    samples_drawn: int
    planning_time: float


def _polyline_length(waypoints):
    return float(sum(wrapped_dist(a, b) for a, b in zip(waypoints, waypoints[1:])))


def _no_path(reason, h_evals, samples, elapsed):
    return Plan([], False, reason, h_evals, 0.0, samples, elapsed)


def sample_goal_configs(arm, field, cloud, target_ee, cfg):
    """Seeded rejection sampling for configurations reaching the target.

    Accepts configurations whose end effector lands within goal_ee_tolerance
    of target_ee and whose barrier clears the safety margin. Deterministic
    for a fixed seed; an unreachable or fully blocked target yields [].
    """
    target = np.asarray(target_ee, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.rng_seed), 1]))
    Q = rng.uniform(-np.pi, np.pi, (cfg.goal_sample_budget, arm.n_joints))
    ee = fk_batch(arm, Q)[:, -1, :]
    near = np.flatnonzero(np.linalg.norm(ee - target, axis=1) <= cfg.goal_ee_tolerance)
    goals = []
    for k in near:
        h, _ = field.ncsb_value(Q[k], cloud)
        if h > cfg.safety_margin:
            goals.append(Q[k].copy())
            if len(goals) >= cfg.goal_config_count:
                break
    return goals


def grow_bubble(field, cloud, q, mu, min_radius=0.0):
    """One barrier evaluation turned into a certified ball, or None.

    The radius (h - mu) / L_q makes every interior configuration satisfy
    h >= mu by the field's certified Lipschitz constant.
    """
    q = wrap_angles(np.asarray(q, dtype=float))
    h, _ = field.ncsb_value(q, cloud)
    lipschitz_q, _ = field.certified_lipschitz()
    radius = max(0.0, (h - mu) / lipschitz_q)
    if radius < max(min_radius, 1e-12):
        return None
    return Bubble(q, radius)


class _UnionFind:
    def __init__(self):
        self.parent = []

    def add(self):
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


def _sample_stream(rng, goals, cfg, n_joints):
    """One configuration per call; goal-biased draws cluster near goals."""
    if goals and rng.random() < cfg.goal_bias:
        g = goals[int(rng.integers(len(goals)))]
        return wrap_angles(g + rng.normal(0.0, cfg.goal_local_sigma, n_joints))
    return rng.uniform(-np.pi, np.pi, n_joints)


def build_cover(arm, field, cloud, start, target_ee, cfg):
    """Grow a bubble graph until start and a goal share a component.

    Every grow_bubble call is one h evaluation; samples landing inside an
    existing bubble are covered already and cost nothing.
    """
    t0 = time.perf_counter()
    start = wrap_angles(np.asarray(start, dtype=float))
    h_evals = 0
    samples = 0

    goals = sample_goal_configs(arm, field, cloud, target_ee, cfg)
    if not goals:
        return BubbleGraph([], [], -1, [], False, "goal-unreachable",
                           h_evals, samples, time.perf_counter() - t0)

    bubbles = []
    edges = []
    uf = _UnionFind()
    centers = np.empty((0, arm.n_joints))
    radii = np.empty(0)

    def covered_by(q):
        if not bubbles:
            return None
        d = np.linalg.norm(wrap_angles(q[None, :] - centers), axis=1)
        hits = np.flatnonzero(d <= radii)
        return int(hits[0]) if hits.size else None

    def add_bubble(q):
        nonlocal h_evals, centers, radii
        h_evals += 1
        bub = grow_bubble(field, cloud, q, cfg.safety_margin, cfg.min_radius)
        if bub is None:
            return None
        idx = uf.add()
        if bubbles:
            d = np.linalg.norm(wrap_angles(bub.center[None, :] - centers), axis=1)
            for j in np.flatnonzero(d <= bub.radius + radii):
                other = bubbles[j]
                frac = bub.radius / (bub.radius + other.radius)
                witness = wrap_angles(bub.center
                                      + frac * wrapped_diff(other.center, bub.center))
                edges.append((idx, int(j), witness))
                uf.union(idx, int(j))
        bubbles.append(bub)
        centers = np.concatenate([centers, bub.center[None, :]])
        radii = np.append(radii, bub.radius)
        return idx

    start_index = add_bubble(start)
    if start_index is None:
        return BubbleGraph(bubbles, edges, -1, [], False, "start-unsafe",
                           h_evals, samples, time.perf_counter() - t0)

    goal_entries = []
    for g in goals:
        inside = covered_by(g)
        if inside is None:
            inside = add_bubble(g)
        if inside is not None:
            goal_entries.append((inside, g))
    if not goal_entries:
        return BubbleGraph(bubbles, edges, start_index, [], False, "goal-unsafe",
                           h_evals, samples, time.perf_counter() - t0)

    def connected():
        root = uf.find(start_index)
        return any(uf.find(i) == root for i, _ in goal_entries)

    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.rng_seed), 2]))
    ok = connected()
    while not ok and samples < cfg.sample_budget:
        q = _sample_stream(rng, goals, cfg, arm.n_joints)
        samples += 1
        if covered_by(q) is None:
            add_bubble(q)
            ok = connected()

    return BubbleGraph(bubbles, edges, start_index, goal_entries, ok,
                       "ok" if ok else "budget-exhausted",
                       h_evals, samples, time.perf_counter() - t0)


def query_path(graph):
    """A* over bubble centers; waypoints alternate centers and witnesses.

    Each consecutive waypoint pair shares a bubble with one endpoint at that
    bubble's center, so the wrapped geodesic between them stays inside the
    bubble regardless of its radius.
    """
    t0 = time.perf_counter()
    if not graph.connected:
        return _no_path(graph.reason, graph.h_evaluations, graph.samples_drawn,
                        graph.build_time + time.perf_counter() - t0)

    adjacency = {i: [] for i in range(len(graph.bubbles))}
    for i, j, witness in graph.edges:
        adjacency[i].append((j, witness))
        adjacency[j].append((i, witness))

    goal_set = {}
    for idx, g in graph.goal_entries:
        cur = goal_set.get(idx)
        d = wrapped_dist(graph.bubbles[idx].center, g)
        if cur is None or d < cur[0]:
            goal_set[idx] = (d, g)
    goal_configs = [g for _, g in graph.goal_entries]

    def heuristic(i):
        c = graph.bubbles[i].center
        return min(wrapped_dist(c, g) for g in goal_configs)

    start = graph.start_index
    best_g = {start: 0.0}
    came = {start: None}                 # node -> (prev node, witness)
    counter = 0
    frontier = [(heuristic(start), counter, start)]
    reached = None
    while frontier:
        f, _, node = heapq.heappop(frontier)
        if f > best_g[node] + heuristic(node) + 1e-12:
            continue
        if node in goal_set:
            reached = node
            break
        c = graph.bubbles[node].center
        for nbr, witness in adjacency[node]:
            cost = best_g[node] + wrapped_dist(c, graph.bubbles[nbr].center)
            if nbr not in best_g or cost < best_g[nbr] - 1e-15:
                best_g[nbr] = cost
                came[nbr] = (node, witness)
                counter += 1
                heapq.heappush(frontier, (cost + heuristic(nbr), counter, nbr))

    if reached is None:
        return _no_path("budget-exhausted", graph.h_evaluations,
                        graph.samples_drawn,
                        graph.build_time + time.perf_counter() - t0)

    waypoints = [graph.bubbles[reached].center.copy()]
    node = reached
    while came[node] is not None:
        prev, witness = came[node]
        waypoints.append(np.asarray(witness, dtype=float))
        waypoints.append(graph.bubbles[prev].center.copy())
        node = prev
    waypoints.reverse()
    goal_config = goal_set[reached][1]
    if wrapped_dist(waypoints[-1], goal_config) > 1e-12:
        waypoints.append(np.asarray(goal_config, dtype=float))

    return Plan(waypoints, True, "ok", graph.h_evaluations,
                _polyline_length(waypoints), graph.samples_drawn,
                graph.build_time + time.perf_counter() - t0)


def plan_path(arm, field, cloud, start, target_ee, cfg):
    """build_cover followed by query_path."""
    return query_path(build_cover(arm, field, cloud, start, target_ee, cfg))


def _edge_points(a, b, resolution):
    """Inclusive waypoints along the wrapped geodesic at fixed spacing."""
    delta = wrapped_diff(b, a)
    length = float(np.linalg.norm(delta))
    n = max(1, int(np.ceil(length / resolution - 1e-12)))
    ts = np.arange(n + 1) / n
    return wrap_angles(a[None, :] + ts[:, None] * delta[None, :])


def baseline_planner(arm, field, cloud, start, target_ee, cfg):
    """PRM over the same sample stream with dense node and edge checking.

    Every barrier evaluation (one per node visit, one per edge sample point,
    endpoints included) increments the same h_evaluations counter the bubble
    planner uses, making the reduction ratio a like-for-like comparison.
    """
    t0 = time.perf_counter()
    start = wrap_angles(np.asarray(start, dtype=float))
    mu = cfg.safety_margin
    h_evals = 0
    samples = 0

    goals = sample_goal_configs(arm, field, cloud, target_ee, cfg)
    if not goals:
        return _no_path("goal-unreachable", h_evals, samples, time.perf_counter() - t0)

    nodes = []
    adjacency = []
    uf = _UnionFind()

    def h_at(q):
        nonlocal h_evals
        h_evals += 1
        h, _ = field.ncsb_value(q, cloud)
        return h

    def edge_clear(a, b):
        nonlocal h_evals
        pts = _edge_points(a, b, cfg.edge_resolution)
        h_evals += len(pts)
        return bool(np.all(field.ncsb_batch(pts, cloud) >= mu))

    def add_node(q):
        if h_at(q) < mu:
            return None
        idx = uf.add()
        if nodes:
            d = np.linalg.norm(wrap_angles(q[None, :] - np.asarray(nodes)), axis=1)
            near = sorted((float(d[j]), j) for j in np.flatnonzero(d <= cfg.connection_radius))
        else:
            near = []
        nodes.append(q)
        adjacency.append([])
        for dist, j in near[: cfg.max_neighbors]:
            if edge_clear(q, nodes[j]):
                adjacency[idx].append(j)
                adjacency[j].append(idx)
                uf.union(idx, j)
        return idx

    start_index = add_node(start)
    if start_index is None:
        return _no_path("start-unsafe", h_evals, samples, time.perf_counter() - t0)

    goal_indices = []
    for g in goals:
        idx = add_node(g)
        if idx is not None:
            goal_indices.append(idx)
    if not goal_indices:
        return _no_path("goal-unsafe", h_evals, samples, time.perf_counter() - t0)

    def connected():
        root = uf.find(start_index)
        return any(uf.find(i) == root for i in goal_indices)

    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.rng_seed), 2]))
    ok = connected()
    while not ok and samples < cfg.sample_budget:
        q = _sample_stream(rng, goals, cfg, arm.n_joints)
        samples += 1
        if add_node(q) is not None:
            ok = connected()

    if not ok:
        return _no_path("budget-exhausted", h_evals, samples, time.perf_counter() - t0)

    goal_set = set(goal_indices)
    best_g = {start_index: 0.0}
    came = {start_index: None}
    counter = 0

    def heuristic(i):
        return min(wrapped_dist(nodes[i], nodes[j]) for j in goal_indices)

    frontier = [(heuristic(start_index), counter, start_index)]
    reached = None
    while frontier:
        f, _, node = heapq.heappop(frontier)
        if f > best_g[node] + heuristic(node) + 1e-12:
            continue
        if node in goal_set:
            reached = node
            break
        for nbr in adjacency[node]:
            cost = best_g[node] + wrapped_dist(nodes[node], nodes[nbr])
            if nbr not in best_g or cost < best_g[nbr] - 1e-15:
                best_g[nbr] = cost
                came[nbr] = node
                counter += 1
                heapq.heappush(frontier, (cost + heuristic(nbr), counter, nbr))

    if reached is None:
        return _no_path("budget-exhausted", h_evals, samples, time.perf_counter() - t0)

    waypoints = [nodes[reached].copy()]
    node = reached
    while came[node] is not None:
        node = came[node]
        waypoints.append(nodes[node].copy())
    waypoints.reverse()
    return Plan(waypoints, True, "ok", h_evals, _polyline_length(waypoints),
                samples, time.perf_counter() - t0)
