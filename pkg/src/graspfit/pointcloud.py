"""Oriented point clouds: I/O, sampling, nearest neighbors, augmentation.

A :class:`PointCloud` is immutable after construction and safe to share
across worker processes.  Positions are meters; normals are unit vectors
pointing away from the object interior.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyCloudError,
    MalformedFileError,
    MissingNormalsError,
    TooFewPointsError,
)

_NORMAL_TOL = 1e-6


@dataclass
class PointCloud:
    """Positions with per-point unit normals and optional integer labels."""

    positions: np.ndarray
    normals: np.ndarray
    labels: np.ndarray | None = None
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.positions = np.ascontiguousarray(self.positions, dtype=float).reshape(-1, 3)
        self.normals = np.ascontiguousarray(self.normals, dtype=float).reshape(-1, 3)
        if len(self.positions) == 0:
            raise EmptyCloudError("point cloud has zero points")
        if len(self.positions) != len(self.normals):
            raise MalformedFileError("positions and normals disagree in length")
        if not np.all(np.isfinite(self.positions)):
            raise MalformedFileError("non-finite position")
        norms = np.linalg.norm(self.normals, axis=1)
        if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
            raise MalformedFileError("zero or non-finite normal")
        if np.any(np.abs(norms - 1.0) > _NORMAL_TOL):
            self.normals = self.normals / norms[:, None]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.positions):
                raise MalformedFileError("labels disagree with positions in length")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def tree(self) -> cKDTree:
        """Exact spatial index over positions (built once, then cached)."""
        if self._tree is None:
            self._tree = cKDTree(self.positions)
        return self._tree


@dataclass(frozen=True)
class SampleSet:
    """Indices selected from a cloud plus the seed that produced them."""

    indices: np.ndarray
    seed: int


# --- loading -------------------------------------------------------------------

def load_point_cloud(path: str, fmt: str | None = None,
                     estimate_k: int | None = None) -> PointCloud:
    """Load a cloud from PLY, OBJ, or whitespace xyz+normal text.

    Parameters
    ----------
    path : file to read.
    fmt : one of ``"ply"``, ``"obj"``, ``"xyzn"``; inferred from the
        extension when omitted.
    estimate_k : if given, clouds without stored normals get normals
        estimated from this many nearest neighbors instead of failing.
    """
    if not os.path.isfile(path):
        raise MalformedFileError(f"no such file: {path}")
    if fmt is None:
        ext = os.path.splitext(path)[1].lower()
        fmt = {".ply": "ply", ".obj": "obj", ".xyz": "xyzn",
               ".xyzn": "xyzn", ".txt": "xyzn"}.get(ext)
        if fmt is None:
            raise MalformedFileError(f"cannot infer format of {path}")
    fmt = fmt.lower()
    if fmt == "ply":
        positions, normals = _read_ply(path)
    elif fmt == "obj":
        positions, normals = _read_obj_cloud(path)
    elif fmt in ("xyzn", "xyz", "txt"):
        positions, normals = _read_xyzn(path)
    else:
        raise MalformedFileError(f"unknown point cloud format: {fmt}")

    if len(positions) == 0:
        raise EmptyCloudError(f"{path}: empty cloud")
    if normals is None:
        if estimate_k is None:
            raise MissingNormalsError(
                f"{path}: no normals stored; pass estimate_k to estimate them")
        cloud = PointCloud(positions, np.tile([0.0, 0.0, 1.0], (len(positions), 1)))
        return estimate_normals(cloud, estimate_k)
    return PointCloud(positions, normals)


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _read_ply(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MalformedFileError(f"{path}: missing ply magic")
        fmt = None
        elements: list[tuple[str, int, list[tuple[str, str]]]] = []
        while True:
            raw = fh.readline()
            if not raw:
                raise MalformedFileError(f"{path}: header never ends")
            line = raw.decode("ascii", errors="replace").strip()
            if not line or line.startswith("comment") or line.startswith("obj_info"):
                continue
            parts = line.split()
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise MalformedFileError(f"{path}: property before element")
                if parts[1] == "list":
                    elements[-1][2].append((parts[-1], "list:" + parts[2] + ":" + parts[3]))
                else:
                    elements[-1][2].append((parts[-1], parts[1]))
            elif parts[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MalformedFileError(f"{path}: unsupported ply format {fmt!r}")
        if not elements or elements[0][0] != "vertex":
            raise MalformedFileError(f"{path}: first element must be vertex")
        name, count, props = elements[0]
        if count == 0:
            raise EmptyCloudError(f"{path}: zero vertices")
        for _, ptype in props:
            if ptype.startswith("list"):
                raise MalformedFileError(f"{path}: list property on vertex element")
            if ptype not in _PLY_TYPES:
                raise MalformedFileError(f"{path}: unknown property type {ptype}")
        names = [p[0] for p in props]
        if fmt == "ascii":
            rows = []
            while len(rows) < count:
                raw = fh.readline()
                if not raw:
                    raise MalformedFileError(f"{path}: truncated vertex data")
                line = raw.strip()
                if not line:
                    continue
                fields = line.split()
                if len(fields) != len(props):
                    raise MalformedFileError(f"{path}: bad vertex row")
                rows.append([float(x) for x in fields])
            table = np.asarray(rows, dtype=float)
        else:
            dtype = np.dtype([(n, "<" + _PLY_TYPES[t]) for n, t in props])
            blob = fh.read(dtype.itemsize * count)
            if len(blob) < dtype.itemsize * count:
                raise MalformedFileError(f"{path}: truncated vertex data")
            rec = np.frombuffer(blob, dtype=dtype, count=count)
            table = np.column_stack([rec[n].astype(float) for n in names])

    def col(prop: str) -> np.ndarray | None:
        return table[:, names.index(prop)] if prop in names else None

    xs, ys, zs = col("x"), col("y"), col("z")
    if xs is None or ys is None or zs is None:
        raise MalformedFileError(f"{path}: vertex element lacks x/y/z")
    positions = np.column_stack([xs, ys, zs])
    if all(n in names for n in ("nx", "ny", "nz")):
        normals = np.column_stack([col("nx"), col("ny"), col("nz")])
    else:
        normals = None
    return positions, normals


def _read_obj_cloud(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    verts: list[list[float]] = []
    vnormals: list[list[float]] = []
    pairs: list[tuple[int, int]] = []  # (vertex index, normal index)
    with open(path, "r", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v" and len(parts) >= 4:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "vn" and len(parts) >= 4:
                vnormals.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                for token in parts[1:]:
                    bits = token.split("/")
                    if len(bits) == 3 and bits[2]:
                        vi = int(bits[0])
                        ni = int(bits[2])
                        vi = vi - 1 if vi > 0 else len(verts) + vi
                        ni = ni - 1 if ni > 0 else len(vnormals) + ni
                        pairs.append((vi, ni))
    if not verts:
        raise EmptyCloudError(f"{path}: no vertices")
    positions = np.asarray(verts, dtype=float)
    if vnormals:
        nsrc = np.asarray(vnormals, dtype=float)
        if pairs:
            acc = np.zeros_like(positions)
            hit = np.zeros(len(positions), dtype=bool)
            for vi, ni in pairs:
                if not (0 <= vi < len(positions)) or not (0 <= ni < len(nsrc)):
                    raise MalformedFileError(f"{path}: face index out of range")
                acc[vi] += nsrc[ni]
                hit[vi] = True
            if hit.all():
                return positions, acc
            return positions, None if not hit.any() else _fill_unreferenced(acc, hit)
        if len(nsrc) == len(positions):
            return positions, nsrc
    return positions, None


def _fill_unreferenced(acc: np.ndarray, hit: np.ndarray) -> np.ndarray | None:
    # Vertices never referenced by a face carry no normal; treat the cloud
    # as normal-less rather than inventing directions for part of it.
    return None


def _read_xyzn(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    try:
        table = np.loadtxt(path, comments="#", dtype=float, ndmin=2)
    except ValueError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    if table.size == 0:
        raise EmptyCloudError(f"{path}: empty cloud")
    if table.shape[1] == 6:
        return table[:, :3].copy(), table[:, 3:6].copy()
    if table.shape[1] == 3:
        return table.copy(), None
    raise MalformedFileError(
        f"{path}: expected 3 or 6 columns, found {table.shape[1]}")


def write_ply_points(path: str, positions: np.ndarray,
                     normals: np.ndarray | None = None,
                     colors: np.ndarray | None = None) -> None:
    """Write an ASCII PLY file (used for diagnostics such as weight maps)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(positions)}",
             "property float x", "property float y", "property float z"]
    if normals is not None:
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        lines += ["property float nx", "property float ny", "property float nz"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        for i in range(len(positions)):
            row = ["%.9g" % v for v in positions[i]]
            if normals is not None:
                row += ["%.9g" % v for v in normals[i]]
            if colors is not None:
                row += [str(int(v)) for v in colors[i]]
            fh.write(" ".join(row) + "\n")


# --- geometry operations ---------------------------------------------------------

def estimate_normals(cloud: PointCloud, k: int) -> PointCloud:
    """Estimate normals from k-nearest-neighbor covariance.

    The normal at each point is the least-significant eigenvector of the
    covariance of its ``k`` nearest neighbors (the point itself included),
    oriented away from the cloud centroid.

    Parameters
    ----------
    cloud : input cloud; stored normals are ignored.
    k : neighborhood size, at least 3 and at most ``len(cloud)``.
    """
    if k < 3:
        raise TooFewPointsError("normal estimation needs k >= 3")
    if len(cloud) < k:
        raise TooFewPointsError(f"cloud has {len(cloud)} points, k = {k}")
    _, idx = cloud.tree.query(cloud.positions, k=k)
    hoods = cloud.positions[idx]                      # (N, k, 3)
    centered = hoods - hoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    centroid = cloud.positions.mean(axis=0)
    flip = np.einsum("ni,ni->n", normals, cloud.positions - centroid) < 0.0
    normals[flip] *= -1.0
    return PointCloud(cloud.positions.copy(), normals, labels=cloud.labels)


def fps_sample(cloud: PointCloud, n: int, seed: int,
               candidates: np.ndarray | None = None,
               first: int | None = None) -> SampleSet:
    """Farthest-point sampling over the cloud (or a candidate subset).

    The first pick is drawn uniformly from the candidates using ``seed``
    (or pinned with ``first``); each later pick maximizes the minimum
    distance to everything already chosen.  Requesting at least as many
    samples as there are candidates returns all candidate indices.

    Returns
    -------
    SampleSet whose indices refer to the full cloud.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if candidates is None:
        cand = np.arange(len(cloud))
    else:
        cand = np.asarray(candidates, dtype=np.int64).reshape(-1)
        if len(cand) == 0:
            raise TooFewPointsError("empty candidate set")
    if n >= len(cand):
        return SampleSet(cand.copy(), seed)

    pts = cloud.positions[cand]
    if first is None:
        rng = np.random.default_rng(seed)
        cur = int(rng.integers(len(cand)))
    else:
        where = np.nonzero(cand == first)[0]
        if len(where) == 0:
            raise ValueError("pinned first index is not a candidate")
        cur = int(where[0])
    chosen = [cur]
    dist = np.linalg.norm(pts - pts[cur], axis=1)
    # chosen rows go negative so coincident points cannot be picked twice
    dist[cur] = -1.0
    for _ in range(n - 1):
        cur = int(np.argmax(dist))
        chosen.append(cur)
        np.minimum(dist, np.linalg.norm(pts - pts[cur], axis=1), out=dist)
        dist[cur] = -1.0
    return SampleSet(cand[np.array(chosen)], seed)


def nearest_neighbor(cloud: PointCloud, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest neighbor for each query point.

    Ties in distance resolve to the lowest point index, so results do not
    depend on spatial-index internals.

    Returns
    -------
    (indices, distances) arrays aligned with ``queries``.
    """
    queries = np.asarray(queries, dtype=float).reshape(-1, 3)
    tree = cloud.tree
    if len(cloud) == 1:
        d = np.linalg.norm(queries - cloud.positions[0], axis=1)
        return np.zeros(len(queries), dtype=np.int64), d
    d, ii = tree.query(queries, k=2)
    nearest = ii[:, 0].astype(np.int64)
    dist = d[:, 0]
    tied = d[:, 0] == d[:, 1]
    for row in np.nonzero(tied)[0]:
        group = tree.query_ball_point(queries[row], d[row, 0])
        if group:
            nearest[row] = min(group)
    return nearest, dist


def add_gaussian_noise(cloud: PointCloud, sigma: float, seed: int) -> PointCloud:
    """Return a copy with iid per-axis Gaussian position noise (normals kept)."""
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        return PointCloud(cloud.positions.copy(), cloud.normals.copy(),
                          labels=None if cloud.labels is None else cloud.labels.copy())
    rng = np.random.default_rng(seed)
    jitter = rng.normal(0.0, sigma, size=cloud.positions.shape)
    return PointCloud(cloud.positions + jitter, cloud.normals.copy(),
                      labels=None if cloud.labels is None else cloud.labels.copy())
