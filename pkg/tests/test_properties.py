"""Randomized invariants for sampling, kernels, rotations, and noise."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from graspfit.objective import (
    ContactSet,
    barrier_derivative,
    barrier_value,
    energy_force_closure,
)
from graspfit.pointcloud import (
    PointCloud,
    add_gaussian_noise,
    fps_sample,
    nearest_neighbor,
)
from graspfit.rotations import (
    axis_angle_matrix,
    matrix_to_quat,
    quat_from_tangent,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)

from fixture_assets import fibonacci_sphere_cloud


def _cloud(points: np.ndarray) -> PointCloud:
    normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
    return PointCloud(points, normals)


def _points(min_rows: int, max_rows: int, span: float = 1.0):
    return hnp.arrays(
        np.float64,
        st.tuples(st.integers(min_rows, max_rows), st.just(3)),
        elements=st.floats(-span, span, allow_nan=False, width=64),
    )


class TestNearestNeighbor:
    @given(pts=_points(1, 40), queries=_points(1, 10, span=1.5))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force(self, pts, queries):
        cloud = _cloud(pts)
        idx, dist = nearest_neighbor(cloud, queries)
        delta = np.linalg.norm(queries[:, None, :] - pts[None, :, :], axis=2)
        rowmin = delta.min(axis=1)
        achieved = delta[np.arange(len(queries)), idx]
        assert np.all(achieved <= rowmin + 1e-12)
        assert np.allclose(dist, rowmin, atol=1e-12)
        # where the minimum is unique the index must match exactly
        unique = (delta <= rowmin[:, None] + 1e-15).sum(axis=1) == 1
        assert np.array_equal(idx[unique], delta.argmin(axis=1)[unique])


class TestFarthestPointSampling:
    @given(pts=_points(3, 40), n=st.integers(2, 15),
           seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_greedy_structure(self, pts, n, seed):
        assume(n < len(pts))
        cloud = _cloud(pts)
        picked = fps_sample(cloud, n, seed).indices
        assert len(picked) == n
        assert len(set(picked.tolist())) == n
        assert picked.min() >= 0 and picked.max() < len(pts)
        # same seed, same answer; shorter runs are prefixes of longer ones
        assert np.array_equal(fps_sample(cloud, n, seed).indices, picked)
        if n > 2:
            assert np.array_equal(fps_sample(cloud, n - 1, seed).indices,
                                  picked[:-1])
        # each insertion is at most as far from the set as the one before
        chosen = cloud.positions[picked]
        radii = []
        for k in range(1, n):
            gaps = np.linalg.norm(chosen[:k] - chosen[k], axis=1)
            radii.append(gaps.min())
        assert all(b <= a + 1e-12 for a, b in zip(radii, radii[1:]))

    @given(pts=_points(2, 10), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_oversampling_returns_everything(self, pts, seed):
        cloud = _cloud(pts)
        s = fps_sample(cloud, len(pts) + 3, seed)
        assert np.array_equal(np.sort(s.indices), np.arange(len(pts)))


class TestBarrierKernel:
    @given(d=st.floats(1e-10, 0.2), d_hat=st.floats(0.01, 0.1))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_with_bounded_support(self, d, d_hat):
        v = float(barrier_value(d, d_hat, 1e-12))
        assert v >= 0.0
        if d >= d_hat:
            assert v == 0.0

    @given(ratio=st.floats(0.05, 0.95), d_hat=st.floats(0.01, 0.1))
    @settings(max_examples=60, deadline=None)
    def test_derivative_matches_finite_differences(self, ratio, d_hat):
        d = ratio * d_hat
        h = 1e-7 * d_hat
        analytic = float(barrier_derivative(d, d_hat, 1e-12))
        fd = float(barrier_value(d + h, d_hat, 1e-12)
                   - barrier_value(d - h, d_hat, 1e-12)) / (2.0 * h)
        assert analytic == pytest.approx(fd, rel=1e-4, abs=1e-10)

    @given(d_hat=st.floats(0.01, 0.1))
    @settings(max_examples=30, deadline=None)
    def test_vanishes_approaching_the_edge(self, d_hat):
        v = float(barrier_value(d_hat * (1.0 - 1e-8), d_hat, 1e-12))
        assert v < 1e-12


class TestRotations:
    @given(q=hnp.arrays(np.float64, 4,
                        elements=st.floats(-1, 1, allow_nan=False)))
    @settings(max_examples=100, deadline=None)
    def test_quaternion_matrix_round_trip(self, q):
        assume(np.linalg.norm(q) > 1e-3)
        q = quat_normalize(q)
        R = quat_to_matrix(q)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) > 0.0
        back = matrix_to_quat(R)
        assert np.allclose(quat_to_matrix(back), R, atol=1e-10)

    @given(a=hnp.arrays(np.float64, 4, elements=st.floats(-1, 1)),
           b=hnp.arrays(np.float64, 4, elements=st.floats(-1, 1)))
    @settings(max_examples=100, deadline=None)
    def test_product_composes_rotations(self, a, b):
        assume(np.linalg.norm(a) > 1e-3 and np.linalg.norm(b) > 1e-3)
        qa, qb = quat_normalize(a), quat_normalize(b)
        left = quat_to_matrix(quat_multiply(qa, qb))
        assert np.allclose(left, quat_to_matrix(qa) @ quat_to_matrix(qb),
                           atol=1e-12)

    @given(delta=hnp.arrays(np.float64, 3,
                            elements=st.floats(-0.5, 0.5)))
    @settings(max_examples=100, deadline=None)
    def test_tangent_step_angle(self, delta):
        q = quat_from_tangent(delta)
        assert abs(np.linalg.norm(q) - 1.0) < 1e-12
        angle = np.linalg.norm(delta)
        trace = np.trace(quat_to_matrix(q))
        assert np.isclose(trace, 1.0 + 2.0 * np.cos(angle), atol=1e-9)


class TestForceClosureEnergy:
    @given(pos=_points(2, 8), nrm=_points(2, 8),
           axis=hnp.arrays(np.float64, 3, elements=st.floats(-1, 1)),
           angle=st.floats(0, 2 * np.pi))
    @settings(max_examples=60, deadline=None)
    def test_rotation_invariant(self, pos, nrm, axis, angle):
        rows = min(len(pos), len(nrm))
        pos, nrm = pos[:rows], nrm[:rows]
        lengths = np.linalg.norm(nrm, axis=1)
        assume(np.all(lengths > 1e-3) and np.linalg.norm(axis) > 1e-3)
        nrm = nrm / lengths[:, None]
        R = axis_angle_matrix(axis / np.linalg.norm(axis), angle)
        base = energy_force_closure(ContactSet(np.arange(rows), pos, nrm))
        spun = energy_force_closure(
            ContactSet(np.arange(rows), pos @ R.T, nrm @ R.T))
        assert np.isclose(spun, base, rtol=1e-9, atol=1e-12)


class TestNoise:
    _POS, _NRM = fibonacci_sphere_cloud(64, 0.05)

    @given(sigma=st.floats(0, 0.01), seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_deterministic_per_seed(self, sigma, seed):
        cloud = PointCloud(self._POS.copy(), self._NRM.copy())
        a = add_gaussian_noise(cloud, sigma, seed)
        b = add_gaussian_noise(cloud, sigma, seed)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.normals, cloud.normals)

    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_zero_sigma_is_identity(self, seed):
        cloud = PointCloud(self._POS.copy(), self._NRM.copy())
        out = add_gaussian_noise(cloud, 0.0, seed)
        assert np.array_equal(out.positions, cloud.positions)
