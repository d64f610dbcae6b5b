"""Distributionally robust velocity filter.

Samples perturbed constraint rows from the barrier, discards an epsilon
fraction of the most restrictive ones, tightens the rest by a Wasserstein
margin, and projects the nominal command onto what remains.
"""

from dataclasses import dataclass

import numpy as np

from .cdf import PointCloud
from .qp import solve_filter_qp


@dataclass
class FilterParams:
    """Knobs of the robust filter.

    Args:
        alpha: barrier decay rate (1/s); larger is more permissive far from
            obstacles and pushes back harder near them.
        epsilon: fraction of sampled constraint rows to discard.
        wasserstein_radius: ambiguity radius r_w around the observed cloud (m).
        num_samples: constraint rows drawn per tick.
        point_noise_sigma: isotropic position noise applied per sample (m).
        theta_noise_sigma: additive barrier evaluation noise per sample (rad).
        dt_horizon: horizon for the finite-difference barrier rate (s).
        rng_seed: base seed for the row sampler.
    """

    alpha: float = 2.0
    epsilon: float = 0.05
    wasserstein_radius: float = 0.01
    num_samples: int = 16
    point_noise_sigma: float = 0.0
    theta_noise_sigma: float = 0.0
    dt_horizon: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.wasserstein_radius < 0.0:
            raise ValueError(f"wasserstein_radius must be >= 0, got {self.wasserstein_radius}")
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.point_noise_sigma < 0.0 or self.theta_noise_sigma < 0.0:
            raise ValueError("noise sigmas must be >= 0")
        if self.dt_horizon <= 0.0:
            raise ValueError(f"dt_horizon must be > 0, got {self.dt_horizon}")


@dataclass
class ConstraintRow:
    """One sampled halfspace a . u >= b with its barrier diagnostics."""

    a: np.ndarray
    b: float
    h: float
    dhdt: float


def sample_constraints(field, q, cloud, params, seed=None):
    """Draw the per-sample constraint rows for one filter invocation.

    Each sample perturbs the cloud point positions (velocities untouched)
    and the barrier output, then linearizes the barrier condition at q.
    Deterministic for a fixed seed.

    Returns:
        list of ConstraintRow, empty when the cloud is empty.
    """
    if len(cloud) == 0:
        return []
    q = np.asarray(q, dtype=float)
    rng = np.random.default_rng(params.rng_seed if seed is None else seed)
    _, lipschitz_p = field.certified_lipschitz()
    tighten = params.wasserstein_radius * lipschitz_p * params.alpha

    # evaluate every sample's cloud in one stacked field call; sample k owns
    # point rows k*M .. (k+1)*M
    num, M = params.num_samples, len(cloud)
    points = np.tile(cloud.points, (num, 1))
    if params.point_noise_sigma > 0.0:
        points = points + rng.normal(0.0, params.point_noise_sigma, points.shape)
    if params.theta_noise_sigma > 0.0:
        theta = rng.normal(0.0, params.theta_noise_sigma, num)
    else:
        theta = np.zeros(num)

    vals, grads, _ = field.eval_batch(q[None, :], points)
    advected = points + np.tile(cloud.velocities, (num, 1)) * params.dt_horizon
    adv_vals, _, _ = field.eval_batch(q[None, :], advected, want_grad=False)
    per_sample = vals[0].reshape(num, M)
    argmin = per_sample.argmin(axis=1)
    h_now = per_sample[np.arange(num), argmin]
    dhdt = (adv_vals[0].reshape(num, M).min(axis=1) - h_now) / params.dt_horizon

    rows = []
    for k in range(num):
        h = float(h_now[k] + theta[k])
        b = -(dhdt[k] + params.alpha * h) + tighten
        rows.append(ConstraintRow(grads[0, k * M + argmin[k]].copy(),
                                  float(b), h, float(dhdt[k])))
    return rows


def discard_scenarios(rows, u_nom, epsilon):
    """Drop the floor(epsilon * K) most restrictive rows.

    Restrictiveness is the slack a . u_nom - b; ties keep the earlier row.
    """
    drop = int(np.floor(epsilon * len(rows)))
    if drop == 0 or not rows:
        return list(rows)
    u_nom = np.asarray(u_nom, dtype=float)
    slack = np.array([row.a @ u_nom - row.b for row in rows])
    order = np.argsort(slack, kind="stable")
    dropped = set(order[:drop].tolist())
    return [row for k, row in enumerate(rows) if k not in dropped]


def filter_command(field, q, cloud, u_nom, u_max, params, seed=None):
    """Run the full sample -> discard -> solve pipeline for one command.

    Args:
        u_nom: (N,) nominal joint velocity command.
        u_max: per-joint speed bound.

    Returns:
        (u, diagnostics): filtered (N,) command and a dict with keys
        h, dhdt, rows_total, rows_kept, status, correction.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    if len(cloud) == 0:
        u = np.clip(u_nom, -u_max, u_max)
        return u, {"h": field.d_max, "dhdt": 0.0, "rows_total": 0,
                   "rows_kept": 0, "status": "inactive",
                   "correction": float(np.linalg.norm(u - u_nom))}

    rows = sample_constraints(field, q, cloud, params, seed=seed)
    kept = discard_scenarios(rows, u_nom, params.epsilon)
    result = solve_filter_qp(u_nom,
                             np.array([row.a for row in kept]),
                             np.array([row.b for row in kept]),
                             u_max)

    h, _ = field.ncsb_value(q, cloud)
    dhdt = field.ncsb_time_derivative(q, cloud, params.dt_horizon)
    diag = {"h": float(h), "dhdt": float(dhdt),
            "rows_total": len(rows), "rows_kept": len(kept),
            "status": result.status,
            "correction": float(np.linalg.norm(result.u - u_nom))}
    return result.u, diag
