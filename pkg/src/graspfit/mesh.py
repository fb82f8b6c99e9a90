"""Triangle meshes: loading, tessellated primitives, sampling, ray casting.

Meshes are plain vertex/face arrays in meters.  Face normals follow the
winding order of the file; primitive generators wind faces outward.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMeshError, MalformedFileError, MeshLoadError

_RAY_EPS = 1e-12
_MIN_RAY_T = 1e-9


@dataclass
class TriangleMesh:
    """Indexed triangle soup.

    Attributes
    ----------
    vertices : (V, 3) float array
    faces : (F, 3) int array
    """

    vertices: np.ndarray
    faces: np.ndarray
    _face_normals: np.ndarray | None = field(default=None, repr=False)
    _face_areas: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise MalformedFileError("face index out of range")

    def _compute_face_data(self) -> None:
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        norms = np.linalg.norm(cross, axis=1)
        self._face_areas = 0.5 * norms
        safe = np.where(norms > 0.0, norms, 1.0)
        normals = cross / safe[:, None]
        normals[norms == 0.0] = 0.0
        self._face_normals = normals

    @property
    def face_normals(self) -> np.ndarray:
        if self._face_normals is None:
            self._compute_face_data()
        return self._face_normals

    @property
    def face_areas(self) -> np.ndarray:
        if self._face_areas is None:
            self._compute_face_data()
        return self._face_areas

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    def transformed(self, R: np.ndarray, t: np.ndarray,
                    scale: np.ndarray | None = None) -> "TriangleMesh":
        """Copy with vertices mapped through ``R @ (scale * v) + t``."""
        v = self.vertices
        if scale is not None:
            v = v * np.asarray(scale, dtype=float)
        return TriangleMesh(v @ np.asarray(R, dtype=float).T + np.asarray(t, dtype=float),
                            self.faces.copy())

    def triangle_corners(self) -> np.ndarray:
        """(F, 3, 3) array of per-face corner coordinates."""
        return self.vertices[self.faces]


# --- file loading -------------------------------------------------------------

def load_obj_mesh(path: str) -> TriangleMesh:
    """Load a Wavefront OBJ as a triangle mesh (polygons fan-triangulated)."""
    if not os.path.isfile(path):
        raise MeshLoadError(f"mesh file not found: {path}")
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MalformedFileError(f"{path}:{lineno}: short vertex line")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise MalformedFileError(f"{path}:{lineno}: bad vertex") from exc
            elif tag == "f":
                if len(parts) < 4:
                    raise MalformedFileError(f"{path}:{lineno}: face needs 3+ vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise MalformedFileError(f"{path}:{lineno}: bad face index") from exc
                    if i < 0:
                        i = len(vertices) + 1 + i
                    idx.append(i - 1)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
            # vn / vt / usemtl etc. carry no geometry we need here
    if not vertices or not faces:
        raise MalformedFileError(f"{path}: no triangles found")
    return TriangleMesh(np.array(vertices), np.array(faces))


def load_stl_mesh(path: str) -> TriangleMesh:
    """Load a binary or ASCII STL file."""
    if not os.path.isfile(path):
        raise MeshLoadError(f"mesh file not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 15:
        raise MalformedFileError(f"{path}: too short for STL")
    # Binary layout check is more reliable than sniffing the 'solid' prefix.
    if len(blob) >= 84:
        (count,) = struct.unpack_from("<I", blob, 80)
        if len(blob) == 84 + 50 * count:
            return _parse_stl_binary(blob, count)
    if blob.lstrip()[:5].lower() == b"solid":
        return _parse_stl_ascii(blob.decode(errors="replace"), path)
    raise MalformedFileError(f"{path}: not a recognizable STL layout")


def _parse_stl_binary(blob: bytes, count: int) -> TriangleMesh:
    data = np.frombuffer(blob, dtype=np.uint8, count=50 * count, offset=84)
    records = data.reshape(count, 50)
    floats = records[:, :48].copy().view("<f4").reshape(count, 4, 3)
    corners = floats[:, 1:4, :].astype(float)
    vertices = corners.reshape(-1, 3)
    faces = np.arange(3 * count, dtype=np.int64).reshape(count, 3)
    return TriangleMesh(vertices, faces)


def _parse_stl_ascii(text: str, path: str) -> TriangleMesh:
    verts: list[list[float]] = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 4 and parts[0] == "vertex":
            try:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MalformedFileError(f"{path}: bad vertex line") from exc
    if not verts or len(verts) % 3 != 0:
        raise MalformedFileError(f"{path}: vertex count not a multiple of 3")
    vertices = np.array(verts)
    faces = np.arange(len(verts), dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(vertices, faces)


def load_mesh(path: str) -> TriangleMesh:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        return load_obj_mesh(path)
    if ext == ".stl":
        return load_stl_mesh(path)
    raise MeshLoadError(f"unsupported mesh extension: {path}")


# --- primitive tessellation ---------------------------------------------------

def box_mesh(size) -> TriangleMesh:
    """Axis-aligned box centered at the origin, outward winding."""
    sx, sy, sz = (float(s) * 0.5 for s in size)
    v = np.array([
        [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
        [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
    ])
    f = np.array([
        [0, 2, 1], [0, 3, 2],        # -z
        [4, 5, 6], [4, 6, 7],        # +z
        [0, 1, 5], [0, 5, 4],        # -y
        [2, 3, 7], [2, 7, 6],        # +y
        [1, 2, 6], [1, 6, 5],        # +x
        [3, 0, 4], [3, 4, 7],        # -x
    ])
    return TriangleMesh(v, f)


def cylinder_mesh(radius: float, length: float, segments: int = 24) -> TriangleMesh:
    """Cylinder along +z, centered at the origin."""
    radius = float(radius)
    half = 0.5 * float(length)
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -half)])
    top = np.column_stack([ring, np.full(segments, half)])
    verts = np.vstack([bottom, top, [[0.0, 0.0, -half]], [[0.0, 0.0, half]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([i, j, segments + j])
        faces.append([i, segments + j, segments + i])
        faces.append([cb, j, i])
        faces.append([ct, segments + i, segments + j])
    return TriangleMesh(verts, np.array(faces))


def sphere_mesh(radius: float, rings: int = 12, segments: int = 24) -> TriangleMesh:
    """Latitude/longitude sphere centered at the origin."""
    radius = float(radius)
    verts = [[0.0, 0.0, radius]]
    for r in range(1, rings):
        phi = np.pi * r / rings
        z = radius * np.cos(phi)
        s = radius * np.sin(phi)
        for c in range(segments):
            theta = 2.0 * np.pi * c / segments
            verts.append([s * np.cos(theta), s * np.sin(theta), z])
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1
    faces = []
    for c in range(segments):
        faces.append([0, 1 + c, 1 + (c + 1) % segments])
    for r in range(rings - 2):
        a = 1 + r * segments
        b = 1 + (r + 1) * segments
        for c in range(segments):
            c2 = (c + 1) % segments
            faces.append([a + c, b + c, b + c2])
            faces.append([a + c, b + c2, a + c2])
    base = 1 + (rings - 2) * segments
    for c in range(segments):
        faces.append([south, base + (c + 1) % segments, base + c])
    return TriangleMesh(np.array(verts), np.array(faces))


# --- sampling and ray casting ---------------------------------------------------

def sample_surface(mesh: TriangleMesh, count: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` area-uniform samples; returns (points, face normals).

    Zero-area faces are never selected, so returned normals are unit vectors.
    """
    areas = mesh.face_areas
    total = areas.sum()
    if total <= 0.0:
        raise DegenerateMeshError("mesh has zero surface area")
    probs = areas / total
    face_idx = rng.choice(len(areas), size=count, p=probs)
    corners = mesh.vertices[mesh.faces[face_idx]]
    r1 = rng.random(count)
    r2 = rng.random(count)
    s = np.sqrt(r1)
    a = 1.0 - s
    b = s * (1.0 - r2)
    c = s * r2
    points = (a[:, None] * corners[:, 0]
              + b[:, None] * corners[:, 1]
              + c[:, None] * corners[:, 2])
    return points, mesh.face_normals[face_idx]


def first_hits(triangles: np.ndarray, origin: np.ndarray,
               directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First ray/triangle intersections from a common origin.

    Parameters
    ----------
    triangles : (T, 3, 3) array of corner coordinates.
    origin : (3,) ray origin shared by all rays.
    directions : (N, 3) ray directions (need not be unit length).

    Returns
    -------
    hit : (N,) bool mask of rays that hit anything.
    points : (N, 3) intersection points (undefined where ``hit`` is False).
    """
    triangles = np.asarray(triangles, dtype=float)
    origin = np.asarray(origin, dtype=float)
    directions = np.asarray(directions, dtype=float)
    n_rays = len(directions)
    t_count = len(triangles)
    best_t = np.full(n_rays, np.inf)
    if t_count == 0:
        return np.zeros(n_rays, dtype=bool), np.zeros((n_rays, 3))

    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    s = origin - v0                      # (T, 3)
    q = np.cross(s, e1)                  # (T, 3)
    se2 = np.einsum("tj,tj->t", q, e2)   # reused for t below

    # chunk rays so the (chunk, T) temporaries stay small
    chunk = max(1, int(4_000_000 / max(t_count, 1)))
    for lo in range(0, n_rays, chunk):
        d = directions[lo:lo + chunk]                        # (n, 3)
        p = np.cross(d[:, None, :], e2[None, :, :])          # (n, T, 3)
        det = np.einsum("ntj,tj->nt", p, e1)
        ok = np.abs(det) > _RAY_EPS
        inv = np.where(ok, 1.0, 0.0) / np.where(ok, det, 1.0)
        u = np.einsum("tj,ntj->nt", s, p) * inv
        v = np.einsum("nj,tj->nt", d, q) * inv
        t = se2[None, :] * inv
        ok &= (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1.0 + 1e-12) & (t > _MIN_RAY_T)
        t = np.where(ok, t, np.inf)
        best_t[lo:lo + chunk] = t.min(axis=1)

    hit = np.isfinite(best_t)
    points = origin + np.where(hit, best_t, 0.0)[:, None] * directions
    return hit, points
