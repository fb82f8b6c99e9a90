"""Gripper assets: surface samples, palmar weighting, bounding boxes.

The planner consumes a :class:`Gripper` bundle: the kinematic model, a
surface sample set in link-local coordinates, per-sample weights from the
palmar visibility analysis, and per-link oriented bounding boxes.  Building
the bundle involves ray casting, so results are cached on disk next to the
robot description, keyed by a content hash of every input that affects them.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateMeshError,
    MeshLoadError,
    NoFingertipsError,
    UnknownLinkError,
)
from .mesh import (
    TriangleMesh,
    box_mesh,
    cylinder_mesh,
    first_hits,
    load_mesh,
    sample_surface,
    sphere_mesh,
)
from .urdf import GeometrySpec, KinematicModel, fk_base, parse_urdf

log = logging.getLogger("graspfit.gripper")

CACHE_VERSION = 2
_MIN_HALF_EXTENT = 1e-9


@dataclass
class LinkSurfaces:
    """Surface samples in link-local coordinates, flattened across links."""

    points: np.ndarray        # (S, 3)
    normals: np.ndarray       # (S, 3) unit
    link: np.ndarray          # (S,) link index
    weight: np.ndarray        # (S,) >= 0
    palmar: np.ndarray        # (S,) bool

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class LinkOBB:
    """Oriented bounding box in the link frame (columns of R are axes)."""

    center: np.ndarray
    half: np.ndarray
    R: np.ndarray


@dataclass
class Gripper:
    """Everything the objective and planner need about one hand."""

    model: KinematicModel
    meshes: list[TriangleMesh | None]
    surfaces: LinkSurfaces
    obbs: list[LinkOBB | None]
    q_open: np.ndarray
    fingertip_links: list[str]
    palm_light: np.ndarray
    build_key: str

    # palmar samples with positive weight, extracted once for the objective
    act_points: np.ndarray | None = None
    act_normals: np.ndarray | None = None
    act_link: np.ndarray | None = None
    act_weight: np.ndarray | None = None

    def __post_init__(self) -> None:
        keep = self.surfaces.weight > 0.0
        self.act_points = np.ascontiguousarray(self.surfaces.points[keep])
        self.act_normals = np.ascontiguousarray(self.surfaces.normals[keep])
        self.act_link = np.ascontiguousarray(self.surfaces.link[keep])
        self.act_weight = np.ascontiguousarray(self.surfaces.weight[keep])


# --- geometry realization -------------------------------------------------------

def _resolve_mesh_path(filename: str, urdf_dir: str, mesh_root: str | None) -> str:
    if filename.startswith("package://"):
        tail = filename[len("package://"):]
        tail = tail.split("/", 1)[1] if "/" in tail else tail
        base = mesh_root if mesh_root else urdf_dir
        return os.path.join(base, tail)
    if os.path.isabs(filename):
        return filename
    base = mesh_root if mesh_root else urdf_dir
    return os.path.join(base, filename)


def realize_geometry(spec: GeometrySpec | None, urdf_dir: str,
                     mesh_root: str | None) -> TriangleMesh | None:
    """Turn a geometry spec into a link-local triangle mesh."""
    if spec is None:
        return None
    if spec.kind == "mesh":
        path = _resolve_mesh_path(spec.filename, urdf_dir, mesh_root)
        mesh = load_mesh(path)
        return mesh.transformed(spec.origin_R, spec.origin_t, scale=spec.scale)
    if spec.kind == "box":
        mesh = box_mesh(spec.size)
    elif spec.kind == "cylinder":
        mesh = cylinder_mesh(spec.radius, spec.length)
    elif spec.kind == "sphere":
        mesh = sphere_mesh(spec.radius)
    else:  # pragma: no cover - parser rejects other kinds
        raise MeshLoadError(f"unknown geometry kind {spec.kind!r}")
    return mesh.transformed(spec.origin_R, spec.origin_t)


def load_link_meshes(model: KinematicModel, urdf_dir: str,
                     mesh_root: str | None = None) -> list[TriangleMesh | None]:
    return [realize_geometry(link.geometry, urdf_dir, mesh_root)
            for link in model.links]


# --- sampling ---------------------------------------------------------------------

def sample_link_surfaces(model: KinematicModel,
                         meshes: list[TriangleMesh | None],
                         density: float, seed: int) -> LinkSurfaces:
    """Area-uniform surface samples for every link with geometry.

    ``density`` is samples per square meter; each link with nonzero area
    receives at least one sample.  Sampling is deterministic in ``seed``
    and independent per link, so adding a link does not reshuffle others.
    """
    if density <= 0.0:
        raise ValueError("density must be positive")
    pts, nrm, lnk = [], [], []
    for li, mesh in enumerate(meshes):
        if mesh is None:
            continue
        area = mesh.area
        if area <= 0.0:
            raise DegenerateMeshError(
                f"link {model.links[li].name!r} has zero surface area")
        count = max(1, int(round(area * density)))
        rng = np.random.default_rng(np.random.SeedSequence([seed, li]))
        p, n = sample_surface(mesh, count, rng)
        pts.append(p)
        nrm.append(n)
        lnk.append(np.full(count, li, dtype=np.int64))
    if not pts:
        raise DegenerateMeshError("no link carries geometry to sample")
    points = np.vstack(pts)
    normals = np.vstack(nrm)
    link = np.concatenate(lnk)
    return LinkSurfaces(points, normals, link,
                        np.zeros(len(points)), np.zeros(len(points), dtype=bool))


# --- palmar visibility ---------------------------------------------------------------

def fingertip_light(model: KinematicModel, q_open: np.ndarray,
                    fingertip_links: list[str]) -> np.ndarray:
    """Mean of fingertip frame origins at the open configuration."""
    base = fk_base(model, q_open)
    idx = []
    for name in fingertip_links:
        if name not in model.link_index:
            raise UnknownLinkError(f"fingertip link {name!r} not in model")
        idx.append(model.link_index[name])
    return base.t[idx].mean(axis=0)


def sphere_directions(count: int) -> np.ndarray:
    """``count`` unit vectors spread evenly over the sphere (spiral lattice)."""
    i = np.arange(count, dtype=float)
    golden = 0.5 * (1.0 + np.sqrt(5.0))
    z = 1.0 - (2.0 * i + 1.0) / count
    theta = 2.0 * np.pi * i / golden
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=1)


def compute_palmar_mask(model: KinematicModel,
                        meshes: list[TriangleMesh | None],
                        surfaces: LinkSurfaces,
                        q_open: np.ndarray,
                        ray_count: int = 10_000,
                        r_hit_factor: float = 1.5,
                        light: np.ndarray | None = None,
                        fingertip_links: list[str] | None = None) -> np.ndarray:
    """Classify samples as palmar via omnidirectional ray casting.

    A point light placed at the mean fingertip position (or ``light``)
    shoots ``ray_count`` evenly spread rays against the gripper at
    ``q_open``.  A sample is palmar when it lies within ``r_hit`` of some
    first-intersection point, where ``r_hit`` is the mean inter-sample
    spacing times ``r_hit_factor``.  The direction lattice is deterministic,
    so the mask depends only on the geometry and the arguments.

    Returns the boolean palmar mask aligned with ``surfaces``.
    """
    if ray_count < 1:
        raise ValueError("ray_count must be positive")
    base = fk_base(model, q_open)
    if light is None:
        tips = fingertip_links if fingertip_links is not None else \
            [model.links[i].name for i in model.leaf_links]
        if not tips:
            raise NoFingertipsError("model has no leaf links to anchor the light")
        light = fingertip_light(model, q_open, tips)
    light = np.asarray(light, dtype=float)

    tris = []
    for li, mesh in enumerate(meshes):
        if mesh is None:
            continue
        world = mesh.transformed(base.R[li], base.t[li])
        tris.append(world.triangle_corners())
    if not tris:
        raise DegenerateMeshError("no geometry to ray cast against")
    triangles = np.vstack(tris)

    dirs = sphere_directions(int(ray_count))
    hit, points = first_hits(triangles, light, dirs)
    if not hit.any():
        return np.zeros(len(surfaces), dtype=bool)
    hits = points[hit]

    sample_base = (np.einsum("sij,sj->si", base.R[surfaces.link], surfaces.points)
                   + base.t[surfaces.link])
    if len(sample_base) > 1:
        spacing_tree = cKDTree(sample_base)
        d2, _ = spacing_tree.query(sample_base, k=2)
        r_hit = r_hit_factor * float(d2[:, 1].mean())
    else:
        r_hit = r_hit_factor * 1e-3
    hit_tree = cKDTree(hits)
    dist, _ = hit_tree.query(sample_base, k=1)
    return dist <= r_hit


def assign_weights(surfaces: LinkSurfaces, model: KinematicModel,
                   palmar: np.ndarray, fingertip_links: list[str],
                   fingertip_boost: float = 1.0) -> LinkSurfaces:
    """Weight palmar samples, boosting fingertip links; others get zero."""
    if fingertip_boost < 1.0:
        raise ValueError("fingertip boost must be >= 1")
    tip_idx = set()
    for name in fingertip_links:
        if name not in model.link_index:
            raise UnknownLinkError(f"fingertip link {name!r} not in model")
        tip_idx.add(model.link_index[name])
    weight = np.zeros(len(surfaces))
    weight[palmar] = 1.0
    on_tip = np.isin(surfaces.link, sorted(tip_idx))
    weight[palmar & on_tip] = fingertip_boost
    return LinkSurfaces(surfaces.points, surfaces.normals, surfaces.link,
                        weight, np.asarray(palmar, dtype=bool))


# --- bounding boxes ---------------------------------------------------------------------

def link_obbs(model: KinematicModel, surfaces: LinkSurfaces,
              padding: float = 0.0) -> list[LinkOBB | None]:
    """Per-link oriented bounding boxes from PCA of the link-local samples."""
    if padding < 0.0:
        raise ValueError("padding must be nonnegative")
    out: list[LinkOBB | None] = [None] * len(model.links)
    for li in range(len(model.links)):
        pts = surfaces.points[surfaces.link == li]
        if len(pts) == 0:
            continue
        mean = pts.mean(axis=0)
        centered = pts - mean
        cov = centered.T @ centered / max(len(pts), 1)
        _, vecs = np.linalg.eigh(cov)
        if np.linalg.det(vecs) < 0.0:
            vecs = vecs.copy()
            vecs[:, 0] *= -1.0
        proj = centered @ vecs
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        half = np.maximum(0.5 * (hi - lo) + padding, _MIN_HALF_EXTENT)
        center = mean + vecs @ (0.5 * (hi + lo))
        out[li] = LinkOBB(center, half, vecs)
    return out


# --- assembly and caching ----------------------------------------------------------------

def _hash_inputs(urdf_text: str, mesh_blobs: list[bytes], **params) -> str:
    h = hashlib.sha256()
    h.update(b"graspfit-cache-v%d" % CACHE_VERSION)
    h.update(urdf_text.encode())
    for blob in mesh_blobs:
        h.update(hashlib.sha256(blob).digest())
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _mesh_blobs(model: KinematicModel, urdf_dir: str,
                mesh_root: str | None) -> list[bytes]:
    blobs = []
    for link in model.links:
        spec = link.geometry
        if spec is None or spec.kind != "mesh":
            continue
        path = _resolve_mesh_path(spec.filename, urdf_dir, mesh_root)
        if not os.path.isfile(path):
            raise MeshLoadError(f"mesh file not found: {path}")
        with open(path, "rb") as fh:
            blobs.append(fh.read())
    return blobs


def cache_path_for(urdf_path: str) -> str:
    base, _ = os.path.splitext(urdf_path)
    return base + ".gripcache.npz"


def build_gripper(urdf_path: str,
                  density: float = 50_000.0,
                  seed: int = 0,
                  ray_count: int = 10_000,
                  fingertip_links: list[str] | None = None,
                  fingertip_boost: float = 2.0,
                  q_open: np.ndarray | None = None,
                  obb_padding: float = 0.0,
                  mesh_root: str | None = None,
                  light_override: np.ndarray | None = None,
                  r_hit_factor: float = 1.5,
                  use_cache: bool = True) -> tuple[Gripper, bool]:
    """Assemble (or load from cache) the full gripper bundle.

    Returns ``(gripper, from_cache)``.  The cache file lives next to the
    robot description and is keyed by a content hash of the description,
    all referenced mesh files, and every build parameter, so stale hits
    are impossible.
    """
    with open(urdf_path, "r", errors="replace") as fh:
        urdf_text = fh.read()
    model = parse_urdf(urdf_text)
    urdf_dir = os.path.dirname(os.path.abspath(urdf_path))

    if q_open is None:
        q_open = model.mid_range()
    q_open = np.asarray(q_open, dtype=float).reshape(-1)
    model.joint_values(q_open)  # validates length

    if fingertip_links is None:
        leaves = model.leaf_links
        if not leaves:
            raise NoFingertipsError("model has no leaf links")
        fingertip_links = [model.links[i].name for i in leaves]

    key = _hash_inputs(
        urdf_text, _mesh_blobs(model, urdf_dir, mesh_root),
        density=density, seed=seed, ray_count=ray_count,
        fingertip_links=list(fingertip_links), fingertip_boost=fingertip_boost,
        q_open=[float(v) for v in q_open], obb_padding=obb_padding,
        light_override=None if light_override is None
        else [float(v) for v in light_override],
        r_hit_factor=r_hit_factor,
    )

    meshes = load_link_meshes(model, urdf_dir, mesh_root)
    cache_file = cache_path_for(urdf_path)
    if use_cache and os.path.isfile(cache_file):
        loaded = _load_cache(cache_file, key, model, meshes)
        if loaded is not None:
            log.info("weight-map cache hit: %s", cache_file)
            return loaded, True
        log.info("weight-map cache stale, rebuilding: %s", cache_file)

    surfaces = sample_link_surfaces(model, meshes, density, seed)
    palmar = compute_palmar_mask(
        model, meshes, surfaces, q_open, ray_count=ray_count,
        r_hit_factor=r_hit_factor, light=light_override,
        fingertip_links=fingertip_links)
    surfaces = assign_weights(surfaces, model, palmar, fingertip_links,
                              fingertip_boost)
    obbs = link_obbs(model, surfaces, padding=obb_padding)
    light = (np.asarray(light_override, dtype=float) if light_override is not None
             else fingertip_light(model, q_open, fingertip_links))
    gripper = Gripper(model, meshes, surfaces, obbs, q_open,
                      list(fingertip_links), light, key)
    if use_cache:
        _save_cache(cache_file, key, gripper)
        log.info("weight-map cache written: %s", cache_file)
    return gripper, False


def _save_cache(path: str, key: str, gripper: Gripper) -> None:
    s = gripper.surfaces
    obb_links, obb_centers, obb_halves, obb_rots = [], [], [], []
    for li, obb in enumerate(gripper.obbs):
        if obb is None:
            continue
        obb_links.append(li)
        obb_centers.append(obb.center)
        obb_halves.append(obb.half)
        obb_rots.append(obb.R)
    np.savez(
        path,
        key=np.array(key),
        points=s.points, normals=s.normals, link=s.link,
        weight=s.weight, palmar=s.palmar,
        q_open=gripper.q_open,
        palm_light=gripper.palm_light,
        fingertips=np.array(json.dumps(gripper.fingertip_links)),
        obb_links=np.array(obb_links, dtype=np.int64),
        obb_centers=np.array(obb_centers).reshape(-1, 3),
        obb_halves=np.array(obb_halves).reshape(-1, 3),
        obb_rots=np.array(obb_rots).reshape(-1, 3, 3),
    )


def _load_cache(path: str, key: str, model: KinematicModel,
                meshes: list[TriangleMesh | None]) -> Gripper | None:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError):
        return None
    if str(data["key"]) != key:
        return None
    surfaces = LinkSurfaces(data["points"], data["normals"], data["link"],
                            data["weight"], data["palmar"])
    obbs: list[LinkOBB | None] = [None] * len(model.links)
    for li, center, half, rot in zip(data["obb_links"], data["obb_centers"],
                                     data["obb_halves"], data["obb_rots"]):
        obbs[int(li)] = LinkOBB(center, half, rot)
    return Gripper(model, meshes, surfaces, obbs, data["q_open"],
                   json.loads(str(data["fingertips"])), data["palm_light"],
                   key)
