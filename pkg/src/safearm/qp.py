"""Minimal-deviation QP solver for velocity filtering.

Solves min ||u - u_nom||^2 subject to halfspace rows a_k . u >= b_k and the
per-joint speed box, by Hildreth-style dual coordinate ascent. The box faces
enter as ordinary rows, so the dual update stays a one-dimensional clamp.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class QpResult:
    """Solution of one filter QP.

    Args:
        u: minimizer (or the zero fallback when infeasible).
        status: "inactive" (u == u_nom), "active", or "infeasible".
        sweeps: dual coordinate-ascent sweeps performed.
        kkt_residual: max of primal violation and complementary slackness.
        multipliers: dual values for the caller's rows, shape (K,).
        box_multipliers: dual values for the 2N box faces.
    """

    u: np.ndarray
    status: str
    sweeps: int
    kkt_residual: float
    multipliers: np.ndarray
    box_multipliers: np.ndarray


def _kkt_residual(A, b, u, lam):
    r = b - A @ u
    violation = max(0.0, float(r.max())) if r.size else 0.0
    comp = float(np.abs(lam * r).max()) if r.size else 0.0
    return max(violation, comp)


def solve_filter_qp(u_nom, rows_a, rows_b, u_max, tol=1e-8, max_sweeps=10_000):
    """Project u_nom onto the intersection of the rows and the speed box.

    Args:
        u_nom: (N,) nominal command.
        rows_a: (K, N) constraint normals for a . u >= b.
        rows_b: (K,) right-hand sides.
        u_max: per-joint speed bound (box is [-u_max, u_max]^N).
        tol: KKT residual target.
        max_sweeps: dual ascent sweep cap.

    Returns:
        QpResult. Infeasible problems return u = 0 (full stop) with the
        status flagged; zero velocity is always inside the box.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    N = u_nom.shape[0]
    A_rows = np.asarray(rows_a, dtype=float).reshape(-1, N)
    b_rows = np.asarray(rows_b, dtype=float).reshape(-1)
    K = A_rows.shape[0]

    zero_rows = np.linalg.norm(A_rows, axis=1) < 1e-12
    if np.any(zero_rows & (b_rows > 0.0)):
        # 0 . u >= b > 0 can never hold
        return QpResult(np.zeros(N), "infeasible", 0, float("inf"),
                        np.zeros(K), np.zeros(2 * N))
    keep = ~zero_rows

    # a row demanding more than the box's best corner is a fast infeasibility
    best = np.abs(A_rows[keep]) @ np.full(N, u_max) if keep.any() else np.empty(0)
    if best.size and np.any(best + 1e-12 < b_rows[keep]):
        return QpResult(np.zeros(N), "infeasible", 0, float("inf"),
                        np.zeros(K), np.zeros(2 * N))

    inside_box = bool(np.all(np.abs(u_nom) <= u_max))
    satisfied = not keep.any() or bool(np.all(A_rows[keep] @ u_nom >= b_rows[keep]))
    if inside_box and satisfied:
        return QpResult(u_nom.copy(), "inactive", 0, 0.0,
                        np.zeros(K), np.zeros(2 * N))

    # stack caller rows with the box faces u_i <= u_max and u_i >= -u_max
    eye = np.eye(N)
    A = np.concatenate([A_rows[keep], -eye, eye], axis=0)
    b = np.concatenate([b_rows[keep], np.full(2 * N, -u_max)])
    norms_sq = np.einsum("rn,rn->r", A, A)
    R = A.shape[0]

    lam = np.zeros(R)
    u = u_nom.copy()
    sweeps = 0
    residual = _kkt_residual(A, b, u, lam)
    while residual > tol and sweeps < max_sweeps:
        for r in range(R):
            step = (b[r] - A[r] @ u) / norms_sq[r]
            new_lam = max(0.0, lam[r] + step)
            if new_lam != lam[r]:
                u = u + (new_lam - lam[r]) * A[r]
                lam[r] = new_lam
        sweeps += 1
        residual = _kkt_residual(A, b, u, lam)

    if residual > 1e-6:
        # dual ascent stalls only when the intersection is empty
        return QpResult(np.zeros(N), "infeasible", sweeps, residual,
                        np.zeros(K), np.zeros(2 * N))

    multipliers = np.zeros(K)
    multipliers[keep] = lam[: int(keep.sum())]
    return QpResult(u, "active", sweeps, residual,
                    multipliers, lam[int(keep.sum()):].copy())
