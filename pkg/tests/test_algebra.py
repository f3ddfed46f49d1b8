"""Matrix conventions: axial vectors, exponentials, polar factors, quaternions."""

from __future__ import annotations

import numpy as np
import pytest

from thinrod.algebra import (
    E1,
    NonPositiveDeterminantError,
    axial_vector,
    cross_matrix,
    e1_dyad,
    left_jacobian,
    polar_rotation,
    polar_rotation_many,
    quat_from_matrix,
    quat_from_rotvec,
    quat_multiply,
    quat_to_matrix,
    right_jacobian,
    rotation_distance_squared,
    rotation_exp,
    rotation_log,
    skew_part,
    sym_part,
    transverse_part,
)

RNG = np.random.default_rng(20240817)


class TestAxialVector:
    def test_roundtrip_with_cross_matrix(self):
        for _ in range(100):
            a = RNG.standard_normal(3)
            A = cross_matrix(a)
            assert np.allclose(A, -A.T)
            assert np.allclose(axial_vector(A), a)

    def test_cross_matrix_acts_as_cross_product(self):
        for _ in range(50):
            a, x = RNG.standard_normal(3), RNG.standard_normal(3)
            assert np.allclose(cross_matrix(a) @ x, np.cross(a, x))

    def test_commutator_maps_to_cross_product(self):
        a, b = RNG.standard_normal(3), RNG.standard_normal(3)
        A, B = cross_matrix(a), cross_matrix(b)
        assert np.allclose(axial_vector(A @ B - B @ A), np.cross(a, b))


class TestE1Dyad:
    def test_pairing_identity(self):
        """e1_dyad(v) : M equals v . (M e1) for every v, M."""
        for _ in range(50):
            v = RNG.standard_normal(3)
            M = RNG.standard_normal((3, 3))
            assert np.isclose(np.sum(e1_dyad(v) * M), v @ (M @ E1))

    def test_transverse_part_zeroes_axis(self):
        x = np.array([3.0, -1.0, 2.0])
        assert np.allclose(transverse_part(x), [0.0, -1.0, 2.0])

    def test_sym_skew_split(self):
        M = RNG.standard_normal((3, 3))
        assert np.allclose(sym_part(M) + skew_part(M), M)
        assert np.allclose(sym_part(M), sym_part(M).T)
        assert np.allclose(skew_part(M), -skew_part(M).T)


class TestRotationExpLog:
    def test_exp_is_rotation(self):
        for scale in (1e-9, 1e-5, 0.1, 1.0, 3.0):
            v = scale * RNG.standard_normal(3)
            R = rotation_exp(v)
            assert np.allclose(R @ R.T, np.eye(3), atol=1e-14)
            assert np.isclose(np.linalg.det(R), 1.0)

    def test_log_inverts_exp(self):
        axis = np.array([0.3, -0.5, 0.8])
        axis /= np.linalg.norm(axis)
        for theta in (0.0, 1e-9, 1e-4, 0.5, 2.0, 3.0, np.pi - 1e-7):
            v = theta * axis
            assert np.allclose(rotation_log(rotation_exp(v)), v, atol=1e-6)

    def test_right_jacobian_matches_finite_differences(self):
        v = RNG.standard_normal(3)
        d = RNG.standard_normal(3)
        eps = 1e-7
        num = (rotation_exp(v + eps * d) - rotation_exp(v - eps * d)) / (2 * eps)
        ana = rotation_exp(v) @ cross_matrix(right_jacobian(v) @ d)
        assert np.abs(num - ana).max() < 1e-8

    def test_left_jacobian_is_exponential_average(self):
        from scipy.integrate import quad_vec

        v = 0.8 * RNG.standard_normal(3)
        M, _ = quad_vec(lambda t: rotation_exp(t * v), 0.0, 1.0)
        assert np.abs(M - left_jacobian(v)).max() < 1e-10


class TestPolarRotation:
    def test_identity_is_fixed_point(self):
        assert np.allclose(polar_rotation(np.eye(3)), np.eye(3))

    def test_rotations_are_fixed_points(self):
        for _ in range(20):
            R = rotation_exp(RNG.standard_normal(3))
            assert np.allclose(polar_rotation(R), R, atol=1e-14)

    def test_symmetric_positive_definite_factor_gives_identity(self):
        assert np.allclose(polar_rotation(np.diag([2.0, 1.0, 1.0])), np.eye(3))

    def test_rejects_nonpositive_determinant(self):
        with pytest.raises(NonPositiveDeterminantError):
            polar_rotation(np.diag([-1.0, 1.0, 1.0]))
        with pytest.raises(NonPositiveDeterminantError):
            polar_rotation(np.zeros((3, 3)))

    def test_is_closest_rotation(self):
        for _ in range(20):
            F = np.eye(3) + 0.5 * RNG.standard_normal((3, 3))
            if np.linalg.det(F) <= 0:
                continue
            R = polar_rotation(F)
            d0 = np.linalg.norm(F - R)
            for _ in range(50):
                Q = rotation_exp(RNG.standard_normal(3))
                assert d0 <= np.linalg.norm(F - Q) + 1e-12

    def test_batched_variant_agrees_with_svd_route(self):
        F = np.eye(3) + 0.4 * RNG.standard_normal((40, 3, 3))
        dets = np.linalg.det(F)
        F = F[dets > 0.05]
        batched = polar_rotation_many(F)
        for k in range(len(F)):
            assert np.abs(batched[k] - polar_rotation(F[k])).max() < 1e-12

    def test_distance_squared_matches_singular_values(self):
        F = np.eye(3) + 0.3 * RNG.standard_normal((3, 3))
        s = np.linalg.svd(F, compute_uv=False)
        if np.linalg.det(F) > 0:
            assert np.isclose(rotation_distance_squared(F), np.sum((s - 1.0) ** 2))
        R = polar_rotation(F) if np.linalg.det(F) > 0 else np.eye(3)
        assert rotation_distance_squared(F) <= np.linalg.norm(F - R) ** 2 + 1e-12


class TestQuaternions:
    def test_rotvec_roundtrip(self):
        v = RNG.standard_normal(3)
        assert np.allclose(quat_to_matrix(quat_from_rotvec(v)), rotation_exp(v), atol=1e-14)

    def test_multiply_composes(self):
        v, w = RNG.standard_normal(3), RNG.standard_normal(3)
        q = quat_multiply(quat_from_rotvec(v), quat_from_rotvec(w))
        assert np.allclose(quat_to_matrix(q), rotation_exp(v) @ rotation_exp(w), atol=1e-13)

    def test_from_matrix_roundtrip(self):
        for _ in range(50):
            R = rotation_exp(RNG.standard_normal(3) * RNG.uniform(0.1, 3.0))
            q = quat_from_matrix(R)
            assert np.isclose(np.linalg.norm(q), 1.0, atol=1e-14)
            assert np.allclose(quat_to_matrix(q), R, atol=1e-12)
