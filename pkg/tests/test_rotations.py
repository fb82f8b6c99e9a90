"""Quaternion and rotation-matrix helpers against scipy's Rotation."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from graspfit.rotations import (
    align_vectors,
    axis_angle_matrix,
    matrix_to_quat,
    quat_from_tangent,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    rpy_matrix,
    skew,
)


def _random_quats(n, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _to_scipy(q):
    # internal layout is (w, x, y, z); scipy wants (x, y, z, w)
    return Rotation.from_quat(np.r_[q[1:], q[0]])


def test_normalize_unit_norm():
    q = quat_normalize(np.array([2.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(q, [1, 0, 0, 0])
    for q in _random_quats(20, 3) * 7.3:
        assert abs(np.linalg.norm(quat_normalize(q)) - 1.0) < 1e-12


def test_quat_to_matrix_matches_scipy():
    for q in _random_quats(50, 0):
        np.testing.assert_allclose(quat_to_matrix(q), _to_scipy(q).as_matrix(),
                                   atol=1e-12)


def test_matrix_quat_round_trip():
    for q in _random_quats(50, 1):
        q2 = matrix_to_quat(quat_to_matrix(q))
        # q and -q encode the same rotation
        if np.dot(q, q2) < 0:
            q2 = -q2
        np.testing.assert_allclose(q2, q, atol=1e-9)


def test_multiply_composes_like_matrices():
    qs = _random_quats(40, 2)
    for a, b in zip(qs[::2], qs[1::2]):
        left = quat_to_matrix(quat_multiply(a, b))
        right = quat_to_matrix(a) @ quat_to_matrix(b)
        np.testing.assert_allclose(left, right, atol=1e-12)


def test_identity_is_neutral():
    e = np.array([1.0, 0.0, 0.0, 0.0])
    for q in _random_quats(10, 4):
        np.testing.assert_allclose(quat_multiply(e, q), q, atol=1e-15)
        np.testing.assert_allclose(quat_multiply(q, e), q, atol=1e-15)


def test_tangent_exponential_small_angle():
    # exp of a tangent vector equals the axis-angle rotation of that vector
    rng = np.random.default_rng(5)
    for _ in range(25):
        v = rng.normal(size=3) * 0.5
        R = quat_to_matrix(quat_from_tangent(v))
        expected = Rotation.from_rotvec(v).as_matrix()
        np.testing.assert_allclose(R, expected, atol=1e-12)


def test_tangent_zero_is_identity():
    np.testing.assert_allclose(quat_from_tangent(np.zeros(3)),
                               [1, 0, 0, 0], atol=0)


def test_skew_reproduces_cross_product():
    rng = np.random.default_rng(6)
    for _ in range(10):
        a, b = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-14)


def test_axis_angle_quarter_turn():
    R = axis_angle_matrix(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_rpy_matches_scipy_convention():
    # URDF rpy is extrinsic x-y-z, i.e. R = Rz(yaw) @ Ry(pitch) @ Rx(roll)
    rng = np.random.default_rng(7)
    for _ in range(20):
        r, p, y = rng.uniform(-np.pi, np.pi, 3)
        np.testing.assert_allclose(
            rpy_matrix(r, p, y),
            Rotation.from_euler("xyz", [r, p, y]).as_matrix(), atol=1e-12)


def test_align_vectors_maps_a_to_b():
    rng = np.random.default_rng(8)
    for _ in range(30):
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        R = align_vectors(a, b)
        np.testing.assert_allclose(R @ a, b, atol=1e-10)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_align_vectors_antiparallel():
    a = np.array([0.0, 0.0, 1.0])
    R = align_vectors(a, -a)
    np.testing.assert_allclose(R @ a, -a, atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
