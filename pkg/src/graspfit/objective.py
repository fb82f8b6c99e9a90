"""Surface-matching grasp objective and its analytical gradient.

The total energy of a wrist pose plus joint vector against an oriented
point cloud is the sum of five terms:

* ``e_point`` — weighted point-to-plane residuals between palmar surface
  samples and their matched cloud points,
* ``e_normal`` — weighted penalty for sample normals that fail to oppose
  the matched cloud normals,
* ``e_force_closure`` — Euclidean norm of the net contact wrench of four
  spread-out contact candidates,
* ``e_barrier`` — smooth repulsive barrier on squared sample-to-match
  distances, active below a threshold and exactly zero above it,
* ``e_joint_barrier`` — the same barrier kernel keeping each joint away
  from its limits.

Gradients are taken with the point matches and contact choice frozen, in
the minimal parametrization (body-frame rotation tangent, translation,
joints); frozen selections make the objective piecewise smooth and the
gradient exact, which :func:`finite_difference_gradient` verifies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyPalmarSetError,
    NonFiniteGradientError,
    TooFewCandidatesError,
)
from .gripper import Gripper
from .pointcloud import PointCloud, nearest_neighbor
from .rotations import quat_from_tangent, quat_multiply, quat_normalize, quat_to_matrix
from .urdf import fk_base


@dataclass
class PoseState:
    """Wrist rotation (unit quaternion w,x,y,z), translation, joints."""

    rotation: np.ndarray
    translation: np.ndarray
    joints: np.ndarray

    def __post_init__(self) -> None:
        self.rotation = quat_normalize(np.asarray(self.rotation, dtype=float))
        self.translation = np.asarray(self.translation, dtype=float).reshape(3).copy()
        self.joints = np.asarray(self.joints, dtype=float).reshape(-1).copy()

    def copy(self) -> "PoseState":
        return PoseState(self.rotation.copy(), self.translation.copy(),
                         self.joints.copy())

    def perturbed(self, tangent: np.ndarray, dt: np.ndarray,
                  dq: np.ndarray) -> "PoseState":
        """Apply increments: rotation composes on the right via the exp map."""
        rot = quat_multiply(self.rotation, quat_from_tangent(tangent))
        return PoseState(rot, self.translation + dt, self.joints + dq)


@dataclass(frozen=True)
class BarrierParams:
    """Barrier shape shared by the distance and joint-limit terms.

    ``d_hat`` is the activation threshold on the squared distance; values
    at or above it contribute exactly zero.  ``distance_floor`` guards the
    logarithm.  ``joint_margin_scale`` sets each joint's threshold as a
    fraction of its limit range.  ``squared_distance=False`` switches the
    distance argument to plain Euclidean distance.
    """

    d_hat: float = 0.05
    joint_margin_scale: float = 0.15
    distance_floor: float = 1e-12
    squared_distance: bool = True
    contact_count: int = 4
    contact_pool_fraction: float = 0.2


@dataclass(frozen=True)
class ObjectiveBreakdown:
    e_point: float
    e_normal: float
    e_force_closure: float
    e_barrier: float
    e_joint_barrier: float

    @property
    def e_total(self) -> float:
        return (self.e_point + self.e_normal + self.e_force_closure
                + self.e_barrier + self.e_joint_barrier)


@dataclass
class CorrespondenceSet:
    """Per-palmar-sample match against the cloud, all arrays row-aligned."""

    x: np.ndarray             # (P, 3) sample positions, world frame
    nx: np.ndarray            # (P, 3) sample normals, world frame
    w: np.ndarray             # (P,) weights
    y: np.ndarray             # (P, 3) matched cloud points
    ny: np.ndarray            # (P, 3) matched cloud normals
    d: np.ndarray             # (P,) squared distances at match time
    object_index: np.ndarray  # (P,) matched cloud indices

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class ContactSet:
    """Chosen contact rows of a correspondence set, with a state snapshot."""

    rows: np.ndarray          # (n,) indices into the correspondence arrays
    positions: np.ndarray     # (n, 3)
    normals: np.ndarray       # (n, 3)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class FrozenMatch:
    """Matches and contact choice held fixed across gradient evaluations."""

    y: np.ndarray
    ny: np.ndarray
    contact_rows: np.ndarray


# --- matching and contact selection ------------------------------------------------

def sample_world_frames(gripper: Gripper, pose: PoseState
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """World and base-frame positions/normals of the active palmar samples.

    Returns ``(x_world, n_world, x_base, n_base)``.
    """
    base = fk_base(gripper.model, pose.joints)
    lk = gripper.act_link
    xb = (np.einsum("sij,sj->si", base.R[lk], gripper.act_points)
          + base.t[lk])
    nb = np.einsum("sij,sj->si", base.R[lk], gripper.act_normals)
    R = quat_to_matrix(pose.rotation)
    return xb @ R.T + pose.translation, nb @ R.T, xb, nb


def match_correspondences(gripper: Gripper, pose: PoseState,
                          cloud: PointCloud) -> CorrespondenceSet:
    """Nearest-neighbor match of every active palmar sample to the cloud."""
    if gripper.act_points is None or len(gripper.act_points) == 0:
        raise EmptyPalmarSetError("gripper has no positively weighted samples")
    x, nx, _, _ = sample_world_frames(gripper, pose)
    idx, dist = nearest_neighbor(cloud, x)
    y = cloud.positions[idx]
    ny = cloud.normals[idx]
    return CorrespondenceSet(x, nx, gripper.act_weight.copy(), y, ny,
                             dist * dist, idx)


def select_contacts(corr: CorrespondenceSet, n: int = 4,
                    pool_fraction: float = 0.2) -> ContactSet:
    """Pick ``n`` spread-out contacts from the closest-matching samples.

    The candidate pool is the ``pool_fraction`` share of samples with the
    smallest match distance (ties broken by row order).  Farthest-point
    selection over the pool starts from the closest sample, so the result
    is deterministic.
    """
    P = len(corr)
    if P < n:
        raise TooFewCandidatesError(f"{P} correspondences for {n} contacts")
    pool_size = max(1, int(np.ceil(pool_fraction * P)))
    order = np.lexsort((np.arange(P), corr.d))
    pool = order[:pool_size]
    if pool_size < n:
        raise TooFewCandidatesError(
            f"candidate pool of {pool_size} cannot yield {n} contacts")
    pts = corr.x[pool]
    chosen = [0]
    dist = np.linalg.norm(pts - pts[0], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1), out=dist)
    rows = pool[np.array(chosen)]
    return ContactSet(rows, corr.x[rows].copy(), corr.nx[rows].copy())


def freeze(corr: CorrespondenceSet, contacts: ContactSet) -> FrozenMatch:
    return FrozenMatch(corr.y.copy(), corr.ny.copy(), contacts.rows.copy())


# --- barrier kernel -----------------------------------------------------------------

def barrier_value(d, d_hat, floor: float) -> np.ndarray:
    """Repulsive barrier ``-(d - d_hat)^2 * log(d / d_hat)`` on (0, d_hat).

    Zero at and above ``d_hat`` with vanishing first derivative there;
    grows without bound as ``d`` approaches zero.  ``d`` is floored at
    ``floor`` before the logarithm.  ``d_hat`` may be an array broadcast
    against ``d`` (used for per-joint limit margins).
    """
    d = np.maximum(np.asarray(d, dtype=float), floor)
    d, d_hat = np.broadcast_arrays(d, np.asarray(d_hat, dtype=float))
    out = np.zeros(d.shape)
    active = d < d_hat
    da, ha = d[active], d_hat[active]
    out[active] = -((da - ha) ** 2) * np.log(da / ha)
    return out


def barrier_derivative(d, d_hat, floor: float) -> np.ndarray:
    """Derivative of :func:`barrier_value` with respect to ``d``."""
    d = np.maximum(np.asarray(d, dtype=float), floor)
    d, d_hat = np.broadcast_arrays(d, np.asarray(d_hat, dtype=float))
    out = np.zeros(d.shape)
    active = d < d_hat
    da, ha = d[active], d_hat[active]
    out[active] = -(2.0 * (da - ha) * np.log(da / ha)
                    + (da - ha) ** 2 / da)
    return out


# --- individual energy terms (operate on explicit sets) ------------------------------

def energy_point_match(corr: CorrespondenceSet) -> float:
    """Weighted sum of squared point-to-plane residuals."""
    r = np.einsum("pi,pi->p", corr.x - corr.y, corr.ny)
    return float(np.sum(corr.w * r * r))


def energy_normal_align(corr: CorrespondenceSet) -> float:
    """Weighted penalty for normals failing to oppose their matches.

    Each summand is ``w * ((n_x . n_y) + 1)^2``: zero when the sample
    normal exactly opposes the cloud normal, 4w when parallel.
    """
    a = np.einsum("pi,pi->p", corr.nx, corr.ny) + 1.0
    return float(np.sum(corr.w * a * a))


def energy_force_closure(contacts: ContactSet) -> float:
    """Norm of the stacked net force/torque of the contact normals.

    Assembles the 6 x 3n grasp map (identity blocks over cross-product
    blocks about each contact position) applied to the stacked contact
    normals, and returns the Euclidean norm of the resulting wrench.
    """
    n = len(contacts)
    G = np.zeros((6, 3 * n))
    for i in range(n):
        G[0:3, 3 * i:3 * i + 3] = np.eye(3)
        x, y, z = contacts.positions[i]
        G[3:6, 3 * i:3 * i + 3] = np.array([
            [0.0, -z, y],
            [z, 0.0, -x],
            [-y, x, 0.0],
        ])
    c = contacts.normals.reshape(-1)
    return float(np.linalg.norm(G @ c))


def energy_barrier(corr: CorrespondenceSet, params: BarrierParams) -> float:
    """Mean repulsive barrier over all correspondences."""
    d = corr.d if params.squared_distance else np.sqrt(corr.d)
    vals = barrier_value(d, params.d_hat, params.distance_floor)
    return float(vals.sum() / len(corr))


def joint_barrier_thresholds(q_min: np.ndarray, q_max: np.ndarray,
                             params: BarrierParams) -> np.ndarray:
    return params.joint_margin_scale * (q_max - q_min)


def energy_joint_barrier(q: np.ndarray, q_min: np.ndarray, q_max: np.ndarray,
                         params: BarrierParams) -> float:
    """Barrier on the distance of each joint value to both of its limits."""
    q = np.asarray(q, dtype=float)
    d_hat = joint_barrier_thresholds(q_min, q_max, params)
    total = barrier_value(np.abs(q - q_min), d_hat, params.distance_floor).sum()
    total += barrier_value(np.abs(q - q_max), d_hat, params.distance_floor).sum()
    return float(total)


# --- full evaluation ------------------------------------------------------------------

def _frozen_eval(gripper: Gripper, pose: PoseState, frozen: FrozenMatch,
                 params: BarrierParams, want_grad: bool):
    """Energy (and optionally gradient) with matches and contacts frozen.

    The gradient is exact for the frozen objective: world positions and
    normals still move with the pose, only the match assignment and the
    contact choice are held fixed.
    """
    model = gripper.model
    base = fk_base(model, pose.joints)
    R = quat_to_matrix(pose.rotation)
    lk = gripper.act_link
    xb = np.einsum("sij,sj->si", base.R[lk], gripper.act_points) + base.t[lk]
    nb = np.einsum("sij,sj->si", base.R[lk], gripper.act_normals)
    x = xb @ R.T + pose.translation
    nx = nb @ R.T

    w = gripper.act_weight
    y, ny = frozen.y, frozen.ny
    diff = x - y
    r = np.einsum("pi,pi->p", diff, ny)
    e_point = float(np.sum(w * r * r))
    a = np.einsum("pi,pi->p", nx, ny) + 1.0
    e_normal = float(np.sum(w * a * a))

    m = len(x)
    d_sq = np.einsum("pi,pi->p", diff, diff)
    d_arg = d_sq if params.squared_distance else np.sqrt(np.maximum(d_sq, 0.0))
    e_barrier = float(barrier_value(d_arg, params.d_hat,
                                    params.distance_floor).sum() / m)

    cr = frozen.contact_rows
    cx = x[cr]
    cn = nx[cr]
    F = cn.sum(axis=0)
    tau = np.cross(cx, cn).sum(axis=0)
    e_fc = float(np.sqrt(F @ F + tau @ tau))

    q = pose.joints
    q_min, q_max = model.q_min, model.q_max
    d_hat_q = joint_barrier_thresholds(q_min, q_max, params)
    e_jb = float(
        barrier_value(np.abs(q - q_min), d_hat_q, params.distance_floor).sum()
        + barrier_value(np.abs(q - q_max), d_hat_q, params.distance_floor).sum())

    breakdown = ObjectiveBreakdown(e_point, e_normal, e_fc, e_barrier, e_jb)
    if not want_grad:
        return breakdown, None

    # Per-sample energy gradients in the world frame.
    gx = (2.0 * w * r)[:, None] * ny
    gn = (2.0 * w * a)[:, None] * ny

    db = barrier_derivative(d_arg, params.d_hat, params.distance_floor)
    if params.squared_distance:
        gx = gx + (db / m)[:, None] * (2.0 * diff)
    else:
        dist = np.sqrt(np.maximum(d_sq, params.distance_floor))
        gx = gx + (db / (m * dist))[:, None] * diff

    if e_fc > 0.0:
        F_hat = F / e_fc
        tau_hat = tau / e_fc
        gx[cr] += np.cross(cn, tau_hat)
        gn[cr] += F_hat + np.cross(tau_hat, cx)

    # Project world gradients onto the minimal parametrization.
    g_t = gx.sum(axis=0)
    gxh = gx @ R     # rotate gradients into the base frame
    gnh = gn @ R
    moments = np.cross(xb, gxh) + np.cross(nb, gnh)
    g_rot = moments.sum(axis=0)

    n_links = len(model.links)
    F_link = np.zeros((n_links, 3))
    M_link = np.zeros((n_links, 3))
    np.add.at(F_link, lk, gxh)
    np.add.at(M_link, lk, moments)

    g_q = np.zeros(model.dof)
    for row, ji in enumerate(model.nonfixed):
        mask = model.subtree[row]
        SF = F_link[mask].sum(axis=0)
        SM = M_link[mask].sum(axis=0)
        u = base.joint_axis[row]
        p = base.joint_point[row]
        if model.joints[ji].jtype == "revolute":
            val = u @ (SM - np.cross(p, SF))
        else:
            val = u @ SF
        g_q[model.col[row]] += model.scale[row] * val

    # Joint-limit barrier acts on q directly.
    for lim in (q_min, q_max):
        deriv = barrier_derivative(np.abs(q - lim), d_hat_q,
                                   params.distance_floor)
        g_q += deriv * np.sign(q - lim)

    return breakdown, (g_rot, g_t, g_q)


def total_energy(gripper: Gripper, pose: PoseState, cloud: PointCloud,
                 params: BarrierParams | None = None) -> ObjectiveBreakdown:
    """Match, select contacts, and evaluate the full energy breakdown."""
    params = params or BarrierParams()
    corr = match_correspondences(gripper, pose, cloud)
    contacts = select_contacts(corr, n=params.contact_count,
                               pool_fraction=params.contact_pool_fraction)
    breakdown, _ = _frozen_eval(gripper, pose, freeze(corr, contacts),
                                params, want_grad=False)
    return breakdown


def frozen_energy(gripper: Gripper, pose: PoseState, frozen: FrozenMatch,
                  params: BarrierParams) -> ObjectiveBreakdown:
    """Energy with matches/contacts frozen (positions still follow the pose)."""
    breakdown, _ = _frozen_eval(gripper, pose, frozen, params, want_grad=False)
    return breakdown


def gradient(gripper: Gripper, pose: PoseState, frozen: FrozenMatch,
             params: BarrierParams) -> tuple[ObjectiveBreakdown, np.ndarray,
                                             np.ndarray, np.ndarray]:
    """Analytical gradient of the frozen objective.

    Returns ``(breakdown, d_rot, d_t, d_q)`` where ``d_rot`` is the
    body-frame rotation tangent.  Raises :class:`NonFiniteGradientError`
    if any component is NaN or infinite.
    """
    breakdown, grads = _frozen_eval(gripper, pose, frozen, params,
                                    want_grad=True)
    g_rot, g_t, g_q = grads
    if not (np.all(np.isfinite(g_rot)) and np.all(np.isfinite(g_t))
            and np.all(np.isfinite(g_q))):
        raise NonFiniteGradientError("gradient contains NaN or infinity")
    return breakdown, g_rot, g_t, g_q


def finite_difference_gradient(gripper: Gripper, pose: PoseState,
                               frozen: FrozenMatch, params: BarrierParams,
                               step: float = 1e-6) -> tuple[np.ndarray,
                                                            np.ndarray,
                                                            np.ndarray]:
    """Central finite differences of the frozen energy, for verification.

    Uses the same minimal parametrization as :func:`gradient`: rotation
    increments compose on the right through the exponential map.
    """
    def energy_at(state: PoseState) -> float:
        b, _ = _frozen_eval(gripper, state, frozen, params, want_grad=False)
        return b.e_total

    k = len(pose.joints)
    zeros3 = np.zeros(3)
    zqk = np.zeros(k)
    g_rot = np.zeros(3)
    g_t = np.zeros(3)
    g_q = np.zeros(k)
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        g_rot[i] = (energy_at(pose.perturbed(e, zeros3, zqk))
                    - energy_at(pose.perturbed(-e, zeros3, zqk))) / (2.0 * step)
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        g_t[i] = (energy_at(pose.perturbed(zeros3, e, zqk))
                  - energy_at(pose.perturbed(zeros3, -e, zqk))) / (2.0 * step)
    for i in range(k):
        e = np.zeros(k)
        e[i] = step
        g_q[i] = (energy_at(pose.perturbed(zeros3, zeros3, e))
                  - energy_at(pose.perturbed(zeros3, zeros3, -e))) / (2.0 * step)
    return g_rot, g_t, g_q
