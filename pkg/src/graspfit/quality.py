"""Grasp quality metrics.

The closure quality of a contact set is estimated as the radius of the
largest origin-centered ball inside the convex hull of the contact wrench
set, with friction cones discretized into a finite edge fan.  Rather than
building an exact 6-D hull, the radius is found by minimizing the hull's
support function over a seeded low-discrepancy set of unit directions,
then polishing a fixed prefix of them with a smoothed local descent; the
result is a deterministic upper bound that tightens as the direction
count grows.  The whole computation runs in a frame derived from the
contacts themselves, so the value does not depend on how the grasp is
oriented in world coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from .errors import DegenerateContactsError, EmptyResultsError
from .gripper import Gripper
from .objective import BarrierParams, PoseState, total_energy
from .pointcloud import PointCloud

_REFINE_SEEDS = 16


@dataclass(frozen=True)
class FrictionModel:
    """Coulomb friction coefficient and cone discretization."""

    mu: float = 0.5
    cone_edges: int = 8

    def __post_init__(self) -> None:
        if self.mu <= 0.0:
            raise ValueError("friction coefficient must be positive")
        if self.cone_edges < 3:
            raise ValueError("cone needs at least 3 edges")


def _orthonormal_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic tangent basis perpendicular to a unit vector."""
    pivot = np.zeros(3)
    pivot[int(np.argmin(np.abs(n)))] = 1.0
    u = np.cross(n, pivot)
    u /= np.linalg.norm(u)
    return u, np.cross(n, u)


def _weighted_sum(vectors: np.ndarray, base: float) -> np.ndarray:
    """Sum of rows with geometrically decaying weights ``base**-(j+1)``."""
    weights = float(base) ** -(np.arange(len(vectors), dtype=float) + 1.0)
    return (vectors * weights[:, None]).sum(axis=0)


def _canonical_frame(positions: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Orthonormal frame that rotates rigidly with the contact set.

    Both axes are built from geometrically weighted sums of the contact
    normals (and, failing that, of the centroid-relative positions), so a
    global rotation of the contacts rotates the frame identically.  Distinct
    weight bases guarantee that every candidate for the second axis is
    parallel to the first only when the contacts are rotationally symmetric
    about it — and in that case the leftover azimuthal choice cannot affect
    any quantity expressed in the frame.

    Returns a 3x3 matrix whose columns are the frame axes.
    """
    count = len(normals)
    e1 = None
    for base in range(2, count + 2):
        cand = _weighted_sum(normals, base)
        if np.linalg.norm(cand) > 1e-9:
            e1 = cand / np.linalg.norm(cand)
            break
    if e1 is None:
        e1 = normals[0]

    arms = positions - positions.mean(axis=0)
    radius = float(np.linalg.norm(arms, axis=1).max())
    pools = [normals, arms / radius if radius > 0.0 else arms]
    e2 = None
    for pool, first_base in zip(pools, (3, 2)):
        for base in range(first_base, first_base + count):
            tangent = _weighted_sum(pool, base)
            tangent = tangent - (tangent @ e1) * e1
            if np.linalg.norm(tangent) > 1e-9:
                e2 = tangent / np.linalg.norm(tangent)
                break
        if e2 is not None:
            break
    if e2 is None:
        e2, _ = _orthonormal_frame(e1)
    return np.stack([e1, e2, np.cross(e1, e2)], axis=1)


def _sample_directions(count: int, seed: int) -> np.ndarray:
    """Low-discrepancy unit directions in 6-D, nested by prefix.

    Scrambled Halton points are pushed through the normal quantile and
    normalized; the same seed always yields the same sequence, and a longer
    draw extends a shorter one, so direction sets with a common seed are
    supersets of each other.
    """
    sampler = stats.qmc.Halton(d=6, scramble=True, seed=seed)
    u = np.clip(sampler.random(count), 1e-12, 1.0 - 1e-12)
    g = stats.norm.ppf(u)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def contact_wrenches(positions: np.ndarray, normals: np.ndarray,
                     friction: FrictionModel) -> np.ndarray:
    """Cone-edge wrenches of a contact set, torques scaled to unit radius.

    Forces are the unit edges of each discretized friction cone around the
    contact normal; torques are taken about the contact centroid and
    divided by the largest contact radius so both wrench halves share a
    scale.

    Returns an ``(n_contacts * cone_edges, 6)`` array.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    if len(positions) != len(normals) or len(positions) == 0:
        raise ValueError("positions and normals must be equal-length, nonempty")
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateContactsError("zero-length contact normal")
    normals = normals / norms[:, None]

    centroid = positions.mean(axis=0)
    arms = positions - centroid
    radius = float(np.linalg.norm(arms, axis=1).max())
    torque_scale = 1.0 / radius if radius > 0.0 else 1.0

    angles = 2.0 * np.pi * np.arange(friction.cone_edges) / friction.cone_edges
    wrenches = np.empty((len(positions) * friction.cone_edges, 6))
    row = 0
    for p_arm, n in zip(arms, normals):
        u, v = _orthonormal_frame(n)
        for ang in angles:
            f = n + friction.mu * (np.cos(ang) * u + np.sin(ang) * v)
            f /= np.linalg.norm(f)
            wrenches[row, :3] = f
            wrenches[row, 3:] = torque_scale * np.cross(p_arm, f)
            row += 1
    return wrenches


def _support_refine(W: np.ndarray, u0: np.ndarray) -> float:
    """Polish a support-minimizing direction with annealed smooth descent.

    Minimizes ``max_i w_i . (v / |v|)`` via a log-sum-exp surrogate whose
    sharpness increases geometrically; returns the exact support value at
    the refined direction (still an upper bound on the true radius).
    """
    scale = float(np.abs(W).max())
    if scale == 0.0:
        return 0.0
    v = u0.copy()

    def objective(vec: np.ndarray, beta: float):
        norm = np.linalg.norm(vec)
        u = vec / norm
        z = beta * (W @ u)
        zmax = z.max()
        e = np.exp(z - zmax)
        se = e.sum()
        val = (zmax + np.log(se)) / beta
        p = e / se
        s = W.T @ p
        grad = (s - (s @ u) * u) / norm
        return val, grad

    for beta in (1e2 / scale, 1e4 / scale, 1e6 / scale, 1e8 / scale):
        res = minimize(objective, v, args=(beta,), jac=True,
                       method="L-BFGS-B",
                       options={"maxiter": 200, "ftol": 1e-18, "gtol": 1e-14})
        if np.linalg.norm(res.x) > 0.0 and np.all(np.isfinite(res.x)):
            v = res.x
    u = v / np.linalg.norm(v)
    return float((W @ u).max())


def epsilon_metric(positions: np.ndarray, normals: np.ndarray,
                   friction: FrictionModel | None = None,
                   directions: int = 10_000, seed: int = 0) -> float:
    """Largest-ball closure quality of a contact set (clamped at zero).

    Estimated as the minimum of the wrench-hull support function over
    ``directions`` low-discrepancy unit directions in 6-D, with a fixed
    prefix of the sequence polished by local descent.  Direction sets with
    the same seed are nested as ``directions`` grows and the polished prefix
    never changes, so the estimate can only tighten with more samples.  The
    contacts are first expressed in a frame derived from the contacts
    themselves, which makes the value independent of the grasp's world
    orientation.  Zero means no closure (the origin lies on or outside the
    hull).
    """
    friction = friction or FrictionModel()
    if directions < 1:
        raise ValueError("need at least one direction")
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    if len(positions) != len(normals) or len(positions) == 0:
        raise ValueError("positions and normals must be equal-length, nonempty")
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(lengths == 0.0):
        raise DegenerateContactsError("zero-length contact normal")
    normals = normals / lengths[:, None]

    frame = _canonical_frame(positions, normals)
    arms = positions - positions.mean(axis=0)
    W = contact_wrenches(arms @ frame, normals @ frame, friction)

    dirs = _sample_directions(int(directions), seed)
    support = (dirs @ W.T).max(axis=1)
    best = float(support.min())
    if best <= 0.0:
        return 0.0

    refined = np.inf
    for cand in dirs[:min(_REFINE_SEEDS, len(dirs))]:
        value = _support_refine(W, cand)
        if value > 0.0:
            refined = min(refined, value)
    return max(0.0, min(best, refined))


def bsm_metric(gripper: Gripper, pose: PoseState, cloud: PointCloud,
               params: BarrierParams | None = None) -> float:
    """Total surface-matching energy of a pose (lower is better)."""
    return total_energy(gripper, pose, cloud, params).e_total


def valid_proportion(results) -> float:
    """Fraction of results flagged valid."""
    results = list(results)
    if not results:
        raise EmptyResultsError("no results to summarize")
    return sum(1 for r in results if r.valid) / len(results)
