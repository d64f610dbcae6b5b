"""Planar N-link arm: kinematics, capsule geometry, and workspace clearance."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angles(q):
    """Wrap angles (scalar or array) into the canonical range [-pi, pi)."""
    return (np.asarray(q, dtype=float) + np.pi) % TWO_PI - np.pi


def wrapped_diff(a, b):
    """Per-joint difference a - b wrapped into [-pi, pi)."""
    return wrap_angles(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def wrapped_dist(a, b):
    """Euclidean norm of the per-joint wrapped difference (torus metric)."""
    return float(np.linalg.norm(wrapped_diff(a, b)))


@dataclass(frozen=True)
class ArmModel:
    """Geometry and limits of a planar serial arm with capsule links.

    Args:
        link_lengths: positive link lengths in meters, one per revolute joint.
        base: base position in the workspace (m).
        link_inflation: capsule half-thickness added around each link (m).
        joint_velocity_limit: per-joint speed limit (rad/s).
    """

    link_lengths: tuple = (1.0, 1.0)
    base: tuple = (0.0, 0.0)
    link_inflation: float = 0.0
    joint_velocity_limit: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(l) for l in self.link_lengths))
        object.__setattr__(self, "base", tuple(float(b) for b in self.base))
        if len(self.link_lengths) < 1:
            raise ValueError("arm needs at least one link")
        if any(not np.isfinite(l) or l <= 0.0 for l in self.link_lengths):
            raise ValueError(f"link lengths must be positive and finite, got {self.link_lengths}")
        if len(self.base) != 2 or not all(np.isfinite(b) for b in self.base):
            raise ValueError(f"base must be a finite 2D point, got {self.base}")
        if not np.isfinite(self.link_inflation) or self.link_inflation < 0.0:
            raise ValueError(f"link_inflation must be >= 0, got {self.link_inflation}")
        if not np.isfinite(self.joint_velocity_limit) or self.joint_velocity_limit <= 0.0:
            raise ValueError(f"joint_velocity_limit must be > 0, got {self.joint_velocity_limit}")

    @property
    def n_joints(self):
        return len(self.link_lengths)

    @property
    def reach(self):
        """Total reach of the link chain from the base (m), excluding inflation."""
        return float(sum(self.link_lengths))

    @cached_property
    def _lengths(self):
        return np.asarray(self.link_lengths, dtype=float)

    def validate_config(self, q):
        """Check q against this arm; returns q as a float array.

        Raises:
            ValueError: wrong dimension or non-finite entries.
        """
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_joints,):
            raise ValueError(f"configuration has shape {q.shape}, arm has {self.n_joints} joints")
        if not np.all(np.isfinite(q)):
            raise ValueError(f"configuration must be finite, got {q}")
        return q


def forward_kinematics(arm, q):
    """Chain the links from the base for configuration q.

    Args:
        arm: ArmModel.
        q: joint angles, shape (N,).

    Returns:
        (joints, ee): joints is an (N+1, 2) array of the base and successive
        link endpoints; ee is the (2,) end-effector position (last endpoint).
    """
    q = arm.validate_config(q)
    headings = np.cumsum(q)
    steps = arm._lengths[:, None] * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    joints = np.empty((arm.n_joints + 1, 2))
    joints[0] = arm.base
    joints[1:] = np.asarray(arm.base) + np.cumsum(steps, axis=0)
    return joints, joints[-1].copy()


def fk_batch(arm, Q):
    """Forward kinematics for a batch of configurations.

    Args:
        Q: (M, N) joint angles.

    Returns:
        (M, N+1, 2) array of base and link endpoints per configuration.
    """
    Q = np.asarray(Q, dtype=float)
    headings = np.cumsum(Q, axis=1)
    steps = arm._lengths[None, :, None] * np.stack([np.cos(headings), np.sin(headings)], axis=2)
    joints = np.empty((Q.shape[0], arm.n_joints + 1, 2))
    joints[:, 0] = arm.base
    joints[:, 1:] = np.asarray(arm.base) + np.cumsum(steps, axis=1)
    return joints


def link_segments(arm, q):
    """The arm body at q as a list of (start, end, inflation) capsule tuples."""
    joints, _ = forward_kinematics(arm, q)
    return [(joints[i].copy(), joints[i + 1].copy(), arm.link_inflation)
            for i in range(arm.n_joints)]


def _segment_distances(points, starts, ends):
    """Distance from each point to each segment.

    Args:
        points: (P, 2); starts, ends: (S, 2).

    Returns:
        (P, S) distances.
    """
    seg = ends - starts                                    # (S, 2)
    len_sq = np.maximum(np.einsum("sd,sd->s", seg, seg), 1e-300)
    rel = points[:, None, :] - starts[None, :, :]          # (P, S, 2)
    t = np.clip(np.einsum("psd,sd->ps", rel, seg) / len_sq, 0.0, 1.0)
    closest = rel - t[:, :, None] * seg[None, :, :]
    return np.sqrt(np.einsum("psd,psd->ps", closest, closest))


def workspace_distance(arm, q, p):
    """Signed clearance from workspace point p to the inflated arm body at q.

    Exact for capsule links: min over links of point-to-segment distance,
    minus the inflation. Non-positive values mean p lies inside the body.
    """
    q = arm.validate_config(q)
    p = np.asarray(p, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise ValueError(f"workspace point must be a finite 2D point, got {p}")
    joints, _ = forward_kinematics(arm, q)
    d = _segment_distances(p[None, :], joints[:-1], joints[1:])
    return float(d.min() - arm.link_inflation)


def workspace_distance_points(arm, q, points):
    """Signed clearance from each of several points to the body at q; (P,) array."""
    q = arm.validate_config(q)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    joints, _ = forward_kinematics(arm, q)
    d = _segment_distances(points, joints[:-1], joints[1:])
    return d.min(axis=1) - arm.link_inflation


def workspace_lipschitz_bound(arm):
    """Bound on how fast workspace_distance can change with q (m/rad).

    Joint i sweeps every distal point on a lever of at most the remaining
    chain length, so the sum of suffix lengths bounds the body-point speed
    per unit joint motion, and hence the clearance slope.
    """
    suffix = np.cumsum(arm._lengths[::-1])[::-1]
    return float(suffix.sum())
