"""Cloud ingestion, normal estimation, sampling, NN queries, noise."""

import struct

import numpy as np
import pytest

from graspfit.errors import (
    EmptyCloudError,
    MalformedFileError,
    MissingNormalsError,
    TooFewPointsError,
)
from graspfit.pointcloud import (
    PointCloud,
    add_gaussian_noise,
    estimate_normals,
    fps_sample,
    load_point_cloud,
    nearest_neighbor,
    write_ply_points,
)


def _grid_cloud(n=5, spacing=0.01):
    g = np.arange(n) * spacing
    xx, yy = np.meshgrid(g, g)
    pos = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(n * n)])
    nrm = np.tile([0.0, 0.0, 1.0], (n * n, 1))
    return PointCloud(pos, nrm)


# --- construction invariants ---------------------------------------------------------


def test_cloud_renormalizes_normals():
    c = PointCloud(np.zeros((2, 3)), np.array([[0, 0, 2.0], [0, 3.0, 0]]))
    np.testing.assert_allclose(np.linalg.norm(c.normals, axis=1), 1, atol=1e-12)


def test_cloud_rejects_length_mismatch():
    with pytest.raises(MalformedFileError):
        PointCloud(np.zeros((3, 3)), np.tile([0.0, 0.0, 1.0], (2, 1)))


def test_cloud_rejects_zero_normal():
    with pytest.raises(MalformedFileError):
        PointCloud(np.zeros((1, 3)), np.zeros((1, 3)))


# --- file formats --------------------------------------------------------------------


def test_xyzn_single_line(tmp_path):
    p = tmp_path / "one.xyzn"
    p.write_text("# a comment\n0 0 0 0 0 1\n")
    c = load_point_cloud(str(p))
    assert len(c) == 1
    np.testing.assert_allclose(c.positions[0], [0, 0, 0])
    np.testing.assert_allclose(c.normals[0], [0, 0, 1])


def test_xyzn_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(50, 3))
    nrm = rng.normal(size=(50, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    p = tmp_path / "c.xyzn"
    rows = np.hstack([pos, nrm])
    p.write_text("\n".join(" ".join(f"{v:.17g}" for v in row) for row in rows))
    c = load_point_cloud(str(p))
    np.testing.assert_allclose(c.positions, pos, atol=1e-15)
    np.testing.assert_allclose(c.normals, nrm, atol=1e-12)


def test_ply_ascii_with_unnormalized_normals(tmp_path):
    p = tmp_path / "c.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        "end_header\n"
        "0 0 0 0 0 2\n1 0 0 2 0 0\n")
    c = load_point_cloud(str(p))
    np.testing.assert_allclose(np.linalg.norm(c.normals, axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(c.normals[0], [0, 0, 1])


def test_ply_binary_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    pos = rng.normal(size=(30, 3))
    nrm = rng.normal(size=(30, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    path = tmp_path / "bin.ply"
    write_ply_points(str(path), pos, nrm)
    c = load_point_cloud(str(path))
    np.testing.assert_allclose(c.positions, pos, atol=1e-6)
    np.testing.assert_allclose(c.normals, nrm, atol=1e-6)


def test_ply_double_precision(tmp_path):
    path = tmp_path / "d.ply"
    header = ("ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
              + "".join(f"property double {a}\n" for a in
                        ("x", "y", "z", "nx", "ny", "nz"))
              + "end_header\n")
    vals = (0.1234567890123456, -2.0, 3.5, 0.0, 0.0, 1.0)
    path.write_bytes(header.encode() + struct.pack("<6d", *vals))
    c = load_point_cloud(str(path))
    assert c.positions[0, 0] == pytest.approx(vals[0], abs=1e-16)


def test_obj_vertices_without_normals(tmp_path):
    p = tmp_path / "c.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(MissingNormalsError):
        load_point_cloud(str(p))


def test_obj_reads_referenced_vertex_normals(tmp_path):
    p = tmp_path / "c.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\n"
                 "f 1//1 2//1 3//1\n")
    c = load_point_cloud(str(p))
    np.testing.assert_allclose(c.normals, np.tile([0.0, 0.0, 1.0], (3, 1)),
                               atol=1e-12)


def test_obj_faces_without_normal_refs(tmp_path):
    p = tmp_path / "c.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(MissingNormalsError):
        load_point_cloud(str(p))
    c = load_point_cloud(str(p), estimate_k=3)
    np.testing.assert_allclose(np.abs(c.normals[:, 2]), 1, atol=1e-6)


def test_empty_and_malformed(tmp_path):
    empty = tmp_path / "e.xyzn"
    empty.write_text("# nothing\n")
    with pytest.raises(EmptyCloudError):
        load_point_cloud(str(empty))
    bad = tmp_path / "b.xyzn"
    bad.write_text("1 2 3 4\n")  # wrong column count
    with pytest.raises(MalformedFileError):
        load_point_cloud(str(bad))
    positions_only = tmp_path / "p.xyzn"
    positions_only.write_text("1 2 3\n4 5 6\n7 8 9\n0 0 0\n")
    with pytest.raises(MissingNormalsError):
        load_point_cloud(str(positions_only))
    with pytest.raises(MalformedFileError):
        load_point_cloud(str(tmp_path / "missing.xyzn"))
    odd = tmp_path / "c.weird"
    odd.write_text("0 0 0 0 0 1\n")
    with pytest.raises(MalformedFileError):
        load_point_cloud(str(odd))


# --- normal estimation ---------------------------------------------------------------


def test_estimate_normals_plane_exact():
    c = _grid_cloud(10)
    est = estimate_normals(c, k=8)
    # orthogonal to the plane to within 1e-6 radians
    tilt = np.arccos(np.clip(np.abs(est.normals[:, 2]), -1, 1))
    assert tilt.max() < 1e-6


def test_estimate_normals_sphere_orientation():
    from fixture_assets import fibonacci_sphere_cloud
    pos, exact = fibonacci_sphere_cloud(500, 1.0)
    est = estimate_normals(PointCloud(pos, np.tile([0.0, 0.0, 1.0], (500, 1))),
                           k=12)
    cosang = np.clip(np.einsum("ij,ij->i", est.normals, exact), -1, 1)
    # oriented away from the centroid => should agree with outward radials
    assert np.degrees(np.arccos(cosang)).max() < 10.0


def test_estimate_normals_too_few():
    c = PointCloud(np.zeros((2, 3)) + np.arange(2)[:, None],
                   np.tile([0.0, 0.0, 1.0], (2, 1)))
    with pytest.raises(TooFewPointsError):
        estimate_normals(c, k=3)


# --- farthest point sampling ---------------------------------------------------------


def test_fps_collinear():
    pos = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    c = PointCloud(pos, np.tile([0.0, 0.0, 1.0], (4, 1)))
    s = fps_sample(c, 2, seed=0, first=0)
    assert set(s.indices.tolist()) == {0, 3}


def test_fps_exhaustion_returns_all():
    c = _grid_cloud(3)
    s = fps_sample(c, 100, seed=0)
    assert sorted(s.indices.tolist()) == list(range(9))


def test_fps_square_corners():
    pos = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    c = PointCloud(pos, np.tile([0.0, 0.0, 1.0], (4, 1)))
    s = fps_sample(c, 3, seed=0, first=0)
    assert s.indices[0] == 0
    assert s.indices[1] == 2  # opposite corner


def test_fps_permutation_stable():
    rng = np.random.default_rng(3)
    pos = rng.normal(size=(60, 3))
    nrm = np.tile([0.0, 0.0, 1.0], (60, 1))
    cloud = PointCloud(pos, nrm)
    perm = rng.permutation(60)
    shuffled = PointCloud(pos[perm], nrm[perm])
    a = fps_sample(cloud, 8, seed=0, first=5)
    b = fps_sample(shuffled, 8, seed=0, first=int(np.nonzero(perm == 5)[0][0]))
    np.testing.assert_allclose(np.sort(pos[a.indices], axis=0),
                               np.sort(shuffled.positions[b.indices], axis=0),
                               atol=0)


def test_fps_deterministic_and_distinct():
    c = _grid_cloud(7)
    a = fps_sample(c, 10, seed=42)
    b = fps_sample(c, 10, seed=42)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert len(set(a.indices.tolist())) == 10


# --- nearest neighbors ---------------------------------------------------------------


def test_nn_identity_and_tiebreak():
    pos = np.zeros((8, 3))
    pos[:, 0] = [0, 1, 2, 5, 1, 2, 3, 5]  # indices 3 and 7 coincide
    c = PointCloud(pos, np.tile([0.0, 0.0, 1.0], (8, 1)))
    idx, dist = nearest_neighbor(c, np.array([[5.0, 0, 0]]))
    assert idx[0] == 3  # lowest index wins the tie
    assert dist[0] == 0.0


def test_nn_matches_bruteforce():
    rng = np.random.default_rng(4)
    pos = rng.normal(size=(1000, 3))
    c = PointCloud(pos, np.tile([0.0, 0.0, 1.0], (1000, 1)))
    queries = rng.normal(size=(50, 3))
    idx, dist = nearest_neighbor(c, queries)
    full = np.linalg.norm(queries[:, None, :] - pos[None, :, :], axis=2)
    np.testing.assert_array_equal(idx, np.argmin(full, axis=1))
    np.testing.assert_allclose(dist, full.min(axis=1), atol=1e-12)


# --- gaussian noise ------------------------------------------------------------------


def test_noise_zero_sigma_is_copy():
    c = _grid_cloud(4)
    out = add_gaussian_noise(c, 0.0, seed=1)
    np.testing.assert_array_equal(out.positions, c.positions)
    assert out.positions is not c.positions


def test_noise_statistics():
    c = PointCloud(np.zeros((10_000, 3)), np.tile([0.0, 0.0, 1.0], (10_000, 1)))
    out = add_gaussian_noise(c, 0.005, seed=2)
    sd = (out.positions - c.positions).std(axis=0)
    np.testing.assert_allclose(sd, 0.005, rtol=0.05)


def test_noise_keeps_normals_and_seed_contract():
    c = _grid_cloud(6)
    a = add_gaussian_noise(c, 0.002, seed=3)
    b = add_gaussian_noise(c, 0.002, seed=3)
    d = add_gaussian_noise(c, 0.002, seed=4)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, d.positions)
    np.testing.assert_array_equal(a.normals, c.normals)


def test_noise_rejects_negative_sigma():
    with pytest.raises(ValueError):
        add_gaussian_noise(_grid_cloud(2), -0.001, seed=0)
