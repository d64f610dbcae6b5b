"""Configuration-space distance field.

The field d(q, p) measures, in joint space, how far configuration q is from
the nearest configuration whose (inflated) body passes through workspace
point p. A brute-force grid oracle defines the ground truth; a precomputed
multilinear-interpolated table stands in for it at runtime with certified
Lipschitz constants. The barrier over a pointcloud is the minimum of the
field over the cloud's points: nonnegative means the arm is clear.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .arm import TWO_PI, fk_batch, wrap_angles, workspace_lipschitz_bound
from .errors import ConfigError, FieldFormatError

FIELD_MAGIC = b"CDF1"


def metric_diameter(n_joints):
    """Largest possible wrapped distance between two configurations (rad)."""
    return float(np.pi * np.sqrt(n_joints))


@dataclass
class PointCloud:
    """Workspace obstacle points with per-point velocity estimates.

    Args:
        points: (K, 2) positions (m).
        velocities: (K, 2) velocity estimates (m/s); zeros when unknown.
        timestamp: observation time (s).
        ids: optional (K,) integer identities for cross-frame matching.
    """

    points: np.ndarray
    velocities: np.ndarray = None
    timestamp: float = 0.0
    ids: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.velocities is None:
            self.velocities = np.zeros_like(self.points)
        else:
            self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 2)
        if self.velocities.shape != self.points.shape:
            raise ValueError(
                f"velocities shape {self.velocities.shape} != points shape {self.points.shape}")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("pointcloud entries must be finite")
        if self.ids is not None:
            self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
            if self.ids.shape[0] != self.points.shape[0]:
                raise ValueError("ids length must match points")

    def __len__(self):
        return self.points.shape[0]

    def advected(self, dt):
        """The cloud with every point moved along its velocity for dt seconds."""
        return PointCloud(self.points + self.velocities * dt,
                          self.velocities.copy(), self.timestamp + dt, self.ids)


def _wrapped_gaps_sq(a, b):
    """Squared per-axis wrapped gaps between broadcastable angle arrays."""
    w = np.abs(a - b)
    w = np.minimum(w, TWO_PI - w)
    return w * w


class CdfOracle:
    """Brute-force distance-field oracle over a dense search grid.

    The search grid discretizes the configuration torus with `search_cells`
    nodes per axis. A node is in contact with p when its body clearance lies
    within the contact band +-tau around zero; the oracle answer is the
    wrapped distance to the nearest contact node.
    """

    def __init__(self, arm, search_cells=96):
        if search_cells < 8:
            raise ValueError(f"search_cells must be >= 8 per axis, got {search_cells}")
        self.arm = arm
        self.search_cells = int(search_cells)
        self.node_step = TWO_PI / self.search_cells
        # half the search-cell diagonal, converted to workspace units
        self.tau_contact = 0.5 * workspace_lipschitz_bound(arm) \
            * self.node_step * np.sqrt(arm.n_joints)
        self.d_max = metric_diameter(arm.n_joints)

        axis = -np.pi + np.arange(self.search_cells) * self.node_step
        grids = np.meshgrid(*[axis] * arm.n_joints, indexing="ij")
        self.nodes = np.stack([g.ravel() for g in grids], axis=1)   # (S^N, N)
        self.axis = axis

        joints = fk_batch(arm, self.nodes)                           # (S^N, N+1, 2)
        self._starts = joints[:, :-1, :].reshape(-1, 2)              # (S^N * L, 2)
        self._ends = joints[:, 1:, :].reshape(-1, 2)
        seg = self._ends - self._starts
        self._seg = seg
        self._seg_len_sq = np.maximum(np.einsum("sd,sd->s", seg, seg), 1e-300)

    def clearance_grid(self, p):
        """Signed body clearance at every search node; (S^N,) array."""
        p = np.asarray(p, dtype=float)
        rel = p[None, :] - self._starts
        t = np.clip(np.einsum("sd,sd->s", rel, self._seg) / self._seg_len_sq, 0.0, 1.0)
        closest = rel - t[:, None] * self._seg
        d = np.sqrt(np.einsum("sd,sd->s", closest, closest))
        d = d.reshape(-1, self.arm.n_joints).min(axis=1)
        return d - self.arm.link_inflation

    def contact_indices(self, p):
        """Flat indices of search nodes whose body boundary band contains p."""
        wd = self.clearance_grid(p)
        return np.flatnonzero(np.abs(wd) <= self.tau_contact)

    def distance_to_contacts(self, Q, contact_nodes):
        """Min wrapped distance from each configuration in Q to the contact set."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        gaps = _wrapped_gaps_sq(Q[:, None, :], contact_nodes[None, :, :])
        d = np.sqrt(gaps.sum(axis=2).min(axis=1))
        return np.minimum(d, self.d_max)

    def query(self, q, p):
        """Exact grid-oracle distance from q to contact with p.

        Returns:
            (distance_rad, reachable): distance is the metric diameter with
            reachable=False when no search node touches p.
        """
        q = self.arm.validate_config(q)
        idx = self.contact_indices(p)
        if idx.size == 0:
            return self.d_max, False
        d = self.distance_to_contacts(wrap_angles(q)[None, :], self.nodes[idx])
        return float(d[0]), True


_oracle_cache = {}


def get_oracle(arm, search_cells=96):
    """Shared CdfOracle instances; the search-grid geometry is reusable."""
    key = (arm, int(search_cells))
    if key not in _oracle_cache:
        _oracle_cache[key] = CdfOracle(arm, search_cells)
    return _oracle_cache[key]


def cdf_oracle(arm, q, p, search_cells=96):
    """Brute-force configuration-space distance from q to contact with p."""
    return get_oracle(arm, search_cells).query(q, p)


@dataclass
class GridSpec:
    """Resolution and extent of a precomputed field.

    Args:
        q_cells: nodes per joint axis (wrapped, uniform over [-pi, pi)).
        p_cells: nodes per workspace axis (uniform over the box, inclusive).
        workspace: ((x_lo, x_hi), (y_lo, y_hi)) bounding box (m).
        oracle_cells: search-grid nodes per axis for the build oracle.
        max_bytes: table budget; exceeding it is a configuration error.
    """

    q_cells: int = 48
    p_cells: int = 48
    workspace: tuple = ((-2.5, 2.5), (-2.5, 2.5))
    oracle_cells: int = 96
    max_bytes: int = 128 * 1024 * 1024

    def __post_init__(self):
        self.workspace = tuple((float(lo), float(hi)) for lo, hi in self.workspace)
        if self.q_cells < 2 or self.p_cells < 2:
            raise ConfigError("q_cells and p_cells must each be >= 2")
        for lo, hi in self.workspace:
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ConfigError(f"workspace bounds must be finite with hi > lo, got {self.workspace}")

    def table_bytes(self, n_joints):
        return 4 * (self.q_cells ** n_joints) * (self.p_cells ** 2)


class CdfField:
    """Precomputed distance field with certified Lipschitz constants.

    Values live on a wrapped q-grid times a workspace-box p-grid and are
    evaluated by multilinear interpolation, which keeps the certified
    constants valid everywhere, not just at nodes.
    """

    def __init__(self, n_joints, q_cells, p_cells, workspace, values,
                 lipschitz_q, lipschitz_p, d_max, tau_contact=None, oracle_cells=None):
        self.n_joints = int(n_joints)
        self.q_cells = int(q_cells)
        self.p_cells = int(p_cells)
        self.workspace = tuple((float(lo), float(hi)) for lo, hi in workspace)
        self.values = values
        self.lipschitz_q = float(lipschitz_q)
        self.lipschitz_p = float(lipschitz_p)
        self.d_max = float(d_max)
        self.tau_contact = tau_contact
        self.oracle_cells = oracle_cells

        self.q_step = TWO_PI / self.q_cells
        self.q_nodes = -np.pi + np.arange(self.q_cells) * self.q_step
        self.p_steps = np.array([(hi - lo) / (self.p_cells - 1) for lo, hi in self.workspace])
        self.p_nodes = [lo + np.arange(self.p_cells) * step
                        for (lo, _), step in zip(self.workspace, self.p_steps)]
        self.p_lo = np.array([lo for lo, _ in self.workspace])
        self.p_hi = np.array([hi for _, hi in self.workspace])

        expected = (self.q_cells,) * self.n_joints + (self.p_cells, self.p_cells)
        if values.shape != expected:
            raise ValueError(f"values shape {values.shape}, expected {expected}")

    # ---- interpolation --------------------------------------------------

    def _locate_q(self, Q):
        """Cell indices and fractions per q axis (half-open cells, wrapped)."""
        u = (wrap_angles(Q) + np.pi) / self.q_step
        i = np.floor(u).astype(np.int64)
        i = np.clip(i, 0, self.q_cells - 1)          # guard u == q_cells at -pi wrap
        return i, u - i

    def _locate_p(self, P):
        """Cell indices, fractions, and clamp flags per p axis."""
        P = np.asarray(P, dtype=float)
        clamped = np.any((P < self.p_lo) | (P > self.p_hi), axis=-1)
        Pc = np.clip(P, self.p_lo, self.p_hi)
        v = (Pc - self.p_lo) / self.p_steps
        j = np.minimum(np.floor(v).astype(np.int64), self.p_cells - 2)
        j = np.maximum(j, 0)
        return j, v - j, clamped

    def eval_batch(self, Q, P, want_grad=True):
        """Interpolated field values for all configuration/point pairs.

        Args:
            Q: (M, N) configurations; P: (K, 2) workspace points.

        Returns:
            (values (M, K), grads (M, K, N) or None, clamped (K,) bool).
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        P = np.atleast_2d(np.asarray(P, dtype=float))
        M, K = Q.shape[0], P.shape[0]
        N = self.n_joints

        qi, qf = self._locate_q(Q)                   # (M, N)
        pj, pf, clamped = self._locate_p(P)          # (K, 2)
        qn = (qi + 1) % self.q_cells
        pn = pj + 1

        vals = np.zeros((M, K))
        grads = np.zeros((M, K, N)) if want_grad else None
        n_axes = N + 2
        for corner in range(1 << n_axes):
            idx = []
            wq = np.ones(M)
            wp = np.ones(K)
            qfactors = []
            for a in range(N):
                hi = (corner >> a) & 1
                idx.append(qn[:, a] if hi else qi[:, a])
                fac = qf[:, a] if hi else 1.0 - qf[:, a]
                qfactors.append(fac)
                wq = wq * fac
            for b in range(2):
                hi = (corner >> (N + b)) & 1
                idx.append(pn[:, b] if hi else pj[:, b])
                wp = wp * (pf[:, b] if hi else 1.0 - pf[:, b])
            sel = (*(ix[:, None] for ix in idx[:N]), *(ix[None, :] for ix in idx[N:]))
            v = self.values[sel].astype(float)       # (M, K)
            vals += (wq[:, None] * wp[None, :]) * v
            if want_grad:
                for a in range(N):
                    sign = 1.0 if (corner >> a) & 1 else -1.0
                    wother = np.ones(M)
                    for a2 in range(N):
                        if a2 != a:
                            wother = wother * qfactors[a2]
                    grads[:, :, a] += (sign / self.q_step) * (wother[:, None] * wp[None, :]) * v
        return vals, grads, clamped

    def eval(self, q, p):
        """Field value and configuration gradient at one (q, p) pair.

        Returns:
            (value, grad (N,), clamped): clamped flags p outside the box
            (evaluated at the nearest box point).
        """
        vals, grads, clamped = self.eval_batch(np.asarray(q)[None, :], np.asarray(p)[None, :])
        return float(vals[0, 0]), grads[0, 0].copy(), bool(clamped[0])

    # ---- barrier over a cloud ------------------------------------------

    def ncsb_value(self, q, cloud):
        """Barrier h = min over cloud points of the field at q.

        Returns:
            (h, argmin_index): index of the governing point, None for an
            empty cloud (h is then the unconstraining metric diameter).
        """
        if len(cloud) == 0:
            return self.d_max, None
        vals, _, _ = self.eval_batch(np.asarray(q)[None, :], cloud.points, want_grad=False)
        k = int(np.argmin(vals[0]))
        return float(vals[0, k]), k

    def ncsb_gradient(self, q, cloud):
        """Configuration gradient of the barrier at its governing point."""
        if len(cloud) == 0:
            return np.zeros(self.n_joints)
        vals, grads, _ = self.eval_batch(np.asarray(q)[None, :], cloud.points)
        k = int(np.argmin(vals[0]))
        return grads[0, k].copy()

    def ncsb_time_derivative(self, q, cloud, horizon=0.05):
        """Forward-difference barrier rate under the cloud's own motion."""
        if horizon <= 0.0:
            raise ValueError(f"horizon must be > 0, got {horizon}")
        if len(cloud) == 0:
            return 0.0
        h_now, _ = self.ncsb_value(q, cloud)
        h_adv, _ = self.ncsb_value(q, cloud.advected(horizon))
        return (h_adv - h_now) / horizon

    def ncsb_batch(self, Q, cloud):
        """Barrier values for many configurations at once; (M,) array."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if len(cloud) == 0:
            return np.full(Q.shape[0], self.d_max)
        vals, _, _ = self.eval_batch(Q, cloud.points, want_grad=False)
        return vals.min(axis=1)

    def certified_lipschitz(self):
        """Certified (L_q, L_p) for the interpolated field in the 2-norms."""
        return self.lipschitz_q, self.lipschitz_p

    # ---- persistence ----------------------------------------------------

    def save(self, path):
        """Write the binary field file (little-endian header + f32 table)."""
        (x_lo, x_hi), (y_lo, y_hi) = self.workspace
        header = struct.pack(
            "<4sQQQ7d", FIELD_MAGIC, self.n_joints, self.q_cells, self.p_cells,
            x_lo, x_hi, y_lo, y_hi, self.lipschitz_q, self.lipschitz_p, self.d_max)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path):
        header_size = struct.calcsize("<4sQQQ7d")
        with open(path, "rb") as fh:
            raw = fh.read(header_size)
            if len(raw) < header_size:
                raise FieldFormatError(f"{path}: truncated header")
            magic, n, cq, cp, x_lo, x_hi, y_lo, y_hi, lq, lp, dmax = \
                struct.unpack("<4sQQQ7d", raw)
            if magic != FIELD_MAGIC:
                raise FieldFormatError(f"{path}: bad magic {magic!r}")
            count = (cq ** n) * cp * cp
            raw_values = fh.read(4 * count)
            if len(raw_values) != 4 * count:
                raise FieldFormatError(
                    f"{path}: expected {4 * count} value bytes, got {len(raw_values)}")
            data = np.frombuffer(raw_values, dtype="<f4")
        values = data.reshape((cq,) * n + (cp, cp)).copy()
        return cls(n, cq, cp, ((x_lo, x_hi), (y_lo, y_hi)), values, lq, lp, dmax)


def _grid_slopes(values, q_cells, n_joints, q_step, p_steps):
    """Max adjacent-node slope per axis, composed into 2-norm constants."""
    v = values.astype(float)
    q_slopes = []
    for a in range(n_joints):
        d = np.abs(v - np.roll(v, -1, axis=a)) / q_step
        q_slopes.append(float(d.max()))
    p_slopes = []
    for b in range(2):
        d = np.abs(np.diff(v, axis=n_joints + b)) / p_steps[b]
        p_slopes.append(float(d.max()))
    lq = float(np.sqrt(np.sum(np.square(q_slopes))))
    lp = float(np.sqrt(np.sum(np.square(p_slopes))))
    return lq, lp


def build_cdf_field(arm, spec=None):
    """Precompute the field table by querying the oracle at every grid node.

    Deterministic; the stored value at a node equals a fresh cdf_oracle
    call at that node bit for bit.
    """
    spec = spec or GridSpec()
    required = spec.table_bytes(arm.n_joints)
    if required > spec.max_bytes:
        raise ConfigError(
            f"field table needs {required} bytes, budget allows {spec.max_bytes}; "
            f"reduce q_cells/p_cells")

    oracle = get_oracle(arm, spec.oracle_cells)
    N = arm.n_joints
    C_q, C_p = spec.q_cells, spec.p_cells
    d_max = oracle.d_max

    q_step = TWO_PI / C_q
    # wrapped exactly as query() wraps its input, so stored node values match
    # a fresh oracle call bit for bit
    q_axis = wrap_angles(-np.pi + np.arange(C_q) * q_step)
    p_steps = np.array([(hi - lo) / (C_p - 1) for lo, hi in spec.workspace])
    p_axes = [lo + np.arange(C_p) * step for (lo, _), step in zip(spec.workspace, p_steps)]

    values = np.empty((C_q,) * N + (C_p, C_p), dtype=np.float32)

    fast_pair = N == 2
    if fast_pair:
        # per-axis squared wrapped gaps between field nodes and search nodes
        gap_table = _wrapped_gaps_sq(q_axis[:, None], oracle.axis[None, :])  # (C_q, S)
    else:
        qgrids = np.meshgrid(*[q_axis] * N, indexing="ij")
        q_batch = np.stack([g.ravel() for g in qgrids], axis=1)

    for ix in range(C_p):
        for iy in range(C_p):
            p = np.array([p_axes[0][ix], p_axes[1][iy]])
            idx = oracle.contact_indices(p)
            if idx.size == 0:
                values[..., ix, iy] = d_max
                continue
            if fast_pair:
                m1 = idx // oracle.search_cells
                m2 = idx % oracle.search_cells
                cols, starts = np.unique(m1, return_index=True)
                # min over each m1-group of the second-axis gaps, then a
                # min-plus reduction against the first-axis gaps
                grouped = np.minimum.reduceat(gap_table[:, m2].T, starts, axis=0)  # (A, C_q)
                total = gap_table[:, cols][:, :, None] + grouped[None, :, :]        # (C_q, A, C_q)
                d = np.minimum(np.sqrt(total.min(axis=1)), d_max)
                values[:, :, ix, iy] = d
            else:
                d = oracle.distance_to_contacts(q_batch, oracle.nodes[idx])
                values[..., ix, iy] = d.reshape((C_q,) * N)
    lq, lp = _grid_slopes(values, C_q, N, q_step, p_steps)
    return CdfField(N, C_q, C_p, spec.workspace, values, lq, lp, d_max,
                    tau_contact=oracle.tau_contact, oracle_cells=oracle.search_cells)
