"""Batch grasp planning: initialization, nested optimization, collision gates.

Each candidate state descends the surface-matching objective in two nested
loops.  The outer loop re-matches palmar samples to the cloud and reselects
contacts, then the inner loop takes fixed-step gradient updates against
those frozen matches.  Both loops stop early when the energy change drops
below a threshold.  States are optimized independently, so a batch of K
states produces results identical to K single-state runs regardless of how
the batch is partitioned across workers.
"""

from __future__ import annotations

import logging
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DofMismatchError,
    EmptyMaskError,
    EmptyPalmarSetError,
    NonFiniteGradientError,
    TooFewCandidatesError,
)
from .gripper import Gripper, LinkOBB
from .objective import (
    BarrierParams,
    ObjectiveBreakdown,
    PoseState,
    freeze,
    gradient,
    frozen_energy,
    match_correspondences,
    select_contacts,
    total_energy,
)
from .pointcloud import PointCloud, SampleSet, fps_sample
from .rotations import align_vectors, axis_angle_matrix, matrix_to_quat
from .urdf import forward_kinematics

log = logging.getLogger("graspfit.planner")


@dataclass(frozen=True)
class OptimizerSpec:
    """Fixed-step first-order update rule for the pose descent."""

    kind: str = "momentum"        # "plain" | "momentum" | "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class PlannerConfig:
    """Loop bounds, step sizes, and initialization parameters.

    The step-size defaults suit centimeter-scale descent on smooth, dense
    objects; fine-pitched fixtures (thin clearances, sub-centimeter
    features) want much smaller steps and a looser stopping threshold, so
    runs on such data should override them explicitly.
    """

    epsilon0: float = 1e-6
    n_outer: int = 30
    n_inner: int = 10
    alpha: float = 0.02           # rotation tangent step
    beta: float = 0.005           # translation step (meters)
    gamma: float = 0.02           # joint step
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    d_gripper: float = 0.15       # standoff between palm and surface point
    approach_axis: tuple = (0.0, 0.0, 1.0)
    seed: int = 0
    keep_trace: bool = False


@dataclass
class GraspResult:
    """Outcome of optimizing one initial state."""

    pose: PoseState
    breakdown: ObjectiveBreakdown
    converged: bool
    collision_free: bool
    self_collision_free: bool
    within_limits: bool
    sample_index: int
    iterations_outer: int
    iterations_inner: int
    wall_time_ms: float
    trace: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return (self.converged and self.collision_free
                and self.self_collision_free and self.within_limits)


# --- initialization -------------------------------------------------------------

def init_poses(cloud: PointCloud, samples: SampleSet, gripper: Gripper,
               config: PlannerConfig) -> list[PoseState]:
    """One initial state per sampled cloud point.

    The palm's approach axis is aimed against the surface normal, the
    wrist stands off along the normal by ``d_gripper``, the roll about the
    approach axis is drawn uniformly with a per-point seed, and joints
    start at the open configuration.
    """
    axis = np.asarray(config.approach_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    poses = []
    for idx in samples.indices:
        p = cloud.positions[idx]
        n = cloud.normals[idx]
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, int(idx)]))
        roll = rng.uniform(0.0, 2.0 * np.pi)
        R = align_vectors(axis, -n) @ axis_angle_matrix(axis, roll)
        t = p + config.d_gripper * n
        poses.append(PoseState(matrix_to_quat(R), t, gripper.q_open.copy()))
    return poses


# --- collision checks --------------------------------------------------------------

def _obb_world(obb: LinkOBB, R: np.ndarray, t: np.ndarray) -> tuple[np.ndarray,
                                                                    np.ndarray]:
    """World center and axis matrix of a link OBB under a link transform."""
    return R @ obb.center + t, R @ obb.R


def _points_in_obb(points: np.ndarray, center: np.ndarray, axes: np.ndarray,
                   half: np.ndarray) -> bool:
    local = np.abs((points - center) @ axes)
    return bool(np.any(np.all(local < half, axis=1)))


def _obbs_overlap(c1, A1, h1, c2, A2, h2) -> bool:
    """Separating-axis test for two oriented boxes (15 candidate axes)."""
    d = c2 - c1
    axes = [A1[:, i] for i in range(3)] + [A2[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cross = np.cross(A1[:, i], A2[:, j])
            if np.linalg.norm(cross) > 1e-9:
                axes.append(cross)
    for axis in axes:
        axis = axis / np.linalg.norm(axis)
        r1 = np.sum(h1 * np.abs(axis @ A1))
        r2 = np.sum(h2 * np.abs(axis @ A2))
        if abs(axis @ d) >= r1 + r2:
            return False
    return True


def pose_collision_check(gripper: Gripper, pose: PoseState,
                         cloud: PointCloud) -> tuple[bool, bool]:
    """Return ``(collision_free, self_collision_free)`` for one pose.

    Object collision: any cloud point strictly inside any world-frame link
    box.  Self collision: any two non-adjacent link boxes overlap, where
    adjacency means sharing a joint.
    """
    R, t = forward_kinematics(gripper.model, pose.rotation, pose.translation,
                              pose.joints)
    world = []
    for li, obb in enumerate(gripper.obbs):
        if obb is None:
            world.append(None)
            continue
        center, axes = _obb_world(obb, R[li], t[li])
        world.append((center, axes, obb.half))

    collision_free = True
    for entry in world:
        if entry is None:
            continue
        if _points_in_obb(cloud.positions, *entry):
            collision_free = False
            break

    self_collision_free = True
    n = len(world)
    for i in range(n):
        if world[i] is None:
            continue
        for j in range(i + 1, n):
            if world[j] is None:
                continue
            if frozenset((i, j)) in gripper.model.adjacent:
                continue
            if _obbs_overlap(world[i][0], world[i][1], world[i][2],
                             world[j][0], world[j][1], world[j][2]):
                self_collision_free = False
                break
        if not self_collision_free:
            break
    return collision_free, self_collision_free


def joints_within_limits(gripper: Gripper, q: np.ndarray) -> bool:
    model = gripper.model
    return bool(np.all(q >= model.q_min) and np.all(q <= model.q_max))


# --- optimizer ------------------------------------------------------------------------

class _Stepper:
    """First-order updates on the (rotation tangent, translation, q) blocks."""

    def __init__(self, spec: OptimizerSpec, k: int):
        self.spec = spec
        self.v = [np.zeros(3), np.zeros(3), np.zeros(k)]
        self.m = [np.zeros(3), np.zeros(3), np.zeros(k)]
        self.count = 0

    def deltas(self, grads, rates):
        self.count += 1
        out = []
        if self.spec.kind == "plain":
            for g, lr in zip(grads, rates):
                out.append(-lr * g)
        elif self.spec.kind == "momentum":
            for i, (g, lr) in enumerate(zip(grads, rates)):
                self.v[i] = self.spec.momentum * self.v[i] + g
                out.append(-lr * self.v[i])
        elif self.spec.kind == "adam":
            b1, b2, eps = self.spec.beta1, self.spec.beta2, self.spec.eps
            for i, (g, lr) in enumerate(zip(grads, rates)):
                self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
                self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
                mh = self.m[i] / (1.0 - b1 ** self.count)
                vh = self.v[i] / (1.0 - b2 ** self.count)
                out.append(-lr * mh / (np.sqrt(vh) + eps))
        else:
            raise ValueError(f"unknown optimizer kind {self.spec.kind!r}")
        return out


# --- per-state optimization --------------------------------------------------------------

def _optimize_state(gripper: Gripper, cloud: PointCloud, state: PoseState,
                    params: BarrierParams, config: PlannerConfig,
                    sample_index: int, gate_initial: bool = True,
                    step_budget: int | None = None) -> GraspResult:
    t_start = time.perf_counter()
    pose = state.copy()
    trace: list = []

    if gate_initial:
        cf, scf = pose_collision_check(gripper, pose, cloud)
        if not (cf and scf):
            breakdown = total_energy(gripper, pose, cloud, params)
            return GraspResult(pose, breakdown, False, cf, scf,
                               joints_within_limits(gripper, pose.joints),
                               sample_index, 0, 0,
                               (time.perf_counter() - t_start) * 1e3, trace)

    stepper = _Stepper(config.optimizer, len(pose.joints))
    rates = (config.alpha, config.beta, config.gamma)
    converged = False
    outer_used = 0
    inner_used = 0
    e_prev_outer = None
    budget = step_budget
    aborted = False

    if budget is None or budget > 0:
        for _ in range(config.n_outer):
            outer_used += 1
            corr = match_correspondences(gripper, pose, cloud)
            contacts = select_contacts(corr, n=params.contact_count,
                                       pool_fraction=params.contact_pool_fraction)
            frozen = freeze(corr, contacts)

            e_prev_inner = None
            e_first = None
            inner_cap = config.n_inner
            if budget is not None:
                inner_cap = min(inner_cap, budget)
            for _ in range(inner_cap):
                try:
                    breakdown, g_rot, g_t, g_q = gradient(gripper, pose,
                                                          frozen, params)
                except NonFiniteGradientError:
                    aborted = True
                    break
                e_here = breakdown.e_total
                if e_first is None:
                    e_first = e_here
                    if e_prev_outer is None:
                        e_prev_outer = e_here
                if (e_prev_inner is not None
                        and abs(e_here - e_prev_inner) < config.epsilon0):
                    e_prev_inner = e_here
                    break
                d_rot, d_t, d_q = stepper.deltas((g_rot, g_t, g_q), rates)
                pose = pose.perturbed(d_rot, d_t, d_q)
                inner_used += 1
                if budget is not None:
                    budget -= 1
                e_prev_inner = e_here
            if aborted:
                break

            e_outer = frozen_energy(gripper, pose, frozen, params).e_total
            if config.keep_trace:
                trace.append((e_first if e_first is not None else e_outer,
                              e_outer))
            if abs(e_outer - e_prev_outer) < config.epsilon0:
                converged = True
                break
            e_prev_outer = e_outer
            if budget is not None and budget <= 0:
                break

    breakdown = total_energy(gripper, pose, cloud, params)
    cf, scf = pose_collision_check(gripper, pose, cloud)
    wl = joints_within_limits(gripper, pose.joints)
    ms = (time.perf_counter() - t_start) * 1e3
    return GraspResult(pose, breakdown, converged and not aborted, cf, scf,
                       wl, sample_index, outer_used, inner_used, ms, trace)


# --- batching ---------------------------------------------------------------------

_WORKER_CTX: dict | None = None


def _worker_task(payload):
    i, state, sample_index = payload
    ctx = _WORKER_CTX
    result = _optimize_state(ctx["gripper"], ctx["cloud"], state,
                             ctx["params"], ctx["config"], sample_index,
                             gate_initial=ctx["gate"],
                             step_budget=ctx["budget"])
    return i, result


def optimize_batch(states: list[PoseState], cloud: PointCloud,
                   gripper: Gripper, params: BarrierParams,
                   config: PlannerConfig,
                   sample_indices: list[int] | None = None,
                   jobs: int = 1, gate_initial: bool = True,
                   step_budget: int | None = None) -> list[GraspResult]:
    """Optimize every state independently; order of results matches input.

    ``jobs > 1`` forks worker processes; because states never interact,
    results are bitwise identical for any job count.
    """
    for state in states:
        if len(state.joints) != gripper.model.dof:
            raise DofMismatchError(
                f"state has {len(state.joints)} joints, model wants "
                f"{gripper.model.dof}")
    if gripper.act_points is None or len(gripper.act_points) == 0:
        raise EmptyPalmarSetError("gripper has no positively weighted samples")
    pool_size = max(1, int(np.ceil(params.contact_pool_fraction
                                   * len(gripper.act_points))))
    if len(gripper.act_points) < params.contact_count \
            or pool_size < params.contact_count:
        raise TooFewCandidatesError(
            f"{len(gripper.act_points)} palmar samples cannot supply "
            f"{params.contact_count} contacts from a "
            f"{params.contact_pool_fraction:.0%} pool")

    if sample_indices is None:
        sample_indices = list(range(len(states)))
    cloud.tree  # build the spatial index once, before any fork

    if jobs <= 1 or len(states) <= 1:
        return [_optimize_state(gripper, cloud, s, params, config, si,
                                gate_initial=gate_initial,
                                step_budget=step_budget)
                for s, si in zip(states, sample_indices)]

    global _WORKER_CTX
    _WORKER_CTX = {"gripper": gripper, "cloud": cloud, "params": params,
                   "config": config, "gate": gate_initial,
                   "budget": step_budget}
    payloads = [(i, s, si) for i, (s, si) in enumerate(zip(states,
                                                           sample_indices))]
    results: list[GraspResult | None] = [None] * len(states)
    try:
        mp = multiprocessing.get_context("fork")
        with mp.Pool(processes=jobs) as pool:
            for i, result in pool.imap_unordered(_worker_task, payloads):
                results[i] = result
    finally:
        _WORKER_CTX = None
    return results  # type: ignore[return-value]


# --- high-level entry points ----------------------------------------------------------

def plan(cloud: PointCloud, gripper: Gripper, params: BarrierParams,
         config: PlannerConfig, n_samples: int,
         jobs: int = 1) -> list[GraspResult]:
    """Sample anchors, build initial states, and optimize the batch."""
    samples = fps_sample(cloud, n_samples, config.seed)
    states = init_poses(cloud, samples, gripper, config)
    return optimize_batch(states, cloud, gripper, params, config,
                          sample_indices=[int(i) for i in samples.indices],
                          jobs=jobs)


def plan_masked(cloud: PointCloud, mask_labels, gripper: Gripper,
                params: BarrierParams, config: PlannerConfig,
                n_samples: int, jobs: int = 1) -> list[GraspResult]:
    """Plan with anchor sampling restricted to labeled points.

    Only the anchor choice is constrained; matching still sees the whole
    cloud, so grasps may touch unlabeled geometry.
    """
    if cloud.labels is None:
        raise EmptyMaskError("cloud carries no labels")
    wanted = np.asarray(sorted(set(int(v) for v in mask_labels)), dtype=np.int64)
    candidates = np.nonzero(np.isin(cloud.labels, wanted))[0]
    if len(candidates) == 0:
        raise EmptyMaskError(f"labels {list(wanted)} select no points")
    samples = fps_sample(cloud, n_samples, config.seed, candidates=candidates)
    states = init_poses(cloud, samples, gripper, config)
    return optimize_batch(states, cloud, gripper, params, config,
                          sample_indices=[int(i) for i in samples.indices],
                          jobs=jobs)


def refine_poses(poses: list[PoseState], cloud: PointCloud, gripper: Gripper,
                 params: BarrierParams, config: PlannerConfig,
                 step_budget: int, jobs: int = 1) -> list[GraspResult]:
    """Resume optimization from externally supplied coarse poses.

    Identical machinery to :func:`optimize_batch`, but the initial
    collision gate is skipped (coarse poses are often slightly inside the
    surface, which is exactly what refinement fixes) and the total number
    of inner gradient steps is capped at ``step_budget``.  A budget of
    zero evaluates and flags the input poses unchanged.
    """
    if step_budget < 0:
        raise ValueError("step budget must be >= 0")
    return optimize_batch(poses, cloud, gripper, params, config,
                          jobs=jobs, gate_initial=False,
                          step_budget=step_budget)


def select_best(results: list[GraspResult]) -> GraspResult | None:
    """Lowest-energy valid result; ties break on the lower sample index."""
    valid = [r for r in results if r.valid]
    if not valid:
        return None
    return min(valid, key=lambda r: (r.breakdown.e_total, r.sample_index))


def valid_results(results: list[GraspResult]) -> list[GraspResult]:
    return [r for r in results if r.valid]
