"""Energy density: frame indifference, gradients, quadratic forms, bounds."""

from __future__ import annotations

import numpy as np
import pytest

from thinrod.algebra import rotation_distance_squared, rotation_exp, sym_part
from thinrod.material import (
    DensityDiagnostics,
    ElasticMaterialField,
    IsotropicTensor,
    MaterialRegion,
    density_gradient,
    density_value,
    energy_and_stress_many,
    quadratic_form_value,
    taylor_residual,
)

RNG = np.random.default_rng(987)
X = np.array([0.4, 0.05, -0.1])


def random_orientation_preserving(scale=0.4):
    while True:
        F = np.eye(3) + scale * RNG.standard_normal((3, 3))
        if np.linalg.det(F) > 0.1:
            return F


class TestIsotropicTensor:
    def test_rejects_nonpositive_shear(self):
        with pytest.raises(ValueError):
            IsotropicTensor(1.0, 0.0)

    def test_rejects_indefinite_combination(self):
        with pytest.raises(ValueError):
            IsotropicTensor(-1.0, 1.0)

    def test_eigenvalue_bounds_on_symmetric_matrices(self):
        t = IsotropicTensor(2.0, 0.7)
        for _ in range(200):
            E = sym_part(RNG.standard_normal((3, 3)))
            q = t.quadratic_form(E)
            n2 = np.sum(E * E)
            assert t.eig_min * n2 - 1e-12 <= q <= t.eig_max * n2 + 1e-12

    def test_youngs_modulus(self):
        t = IsotropicTensor(1.0, 1.0)
        assert np.isclose(t.youngs_modulus, 2.5)
        assert np.isclose(t.poisson_ratio, 0.25)


class TestRegions:
    def test_first_match_wins(self):
        top = MaterialRegion("halfspace", IsotropicTensor(0.0, 5.0),
                             {"normal": [0, 0, 1.0], "offset": 0.0})
        base = MaterialRegion("all", IsotropicTensor(0.0, 1.0))
        field = ElasticMaterialField([top, base])
        assert field.tensor_at([0.0, 0.0, 0.5]).mu == 5.0
        assert field.tensor_at([0.0, 0.0, -0.5]).mu == 1.0

    def test_needs_catch_all(self):
        region = MaterialRegion("halfspace", IsotropicTensor(1.0, 1.0),
                                {"normal": [0, 0, 1.0], "offset": 0.0})
        with pytest.raises(ValueError):
            ElasticMaterialField([region])

    def test_box_and_cylinder_membership(self):
        box = MaterialRegion("box", IsotropicTensor(1.0, 1.0),
                             {"lo": [0, -1, -1], "hi": [0.5, 1, 1]})
        assert box.contains(np.array([[0.2, 0.0, 0.0]]))[0]
        assert not box.contains(np.array([[0.7, 0.0, 0.0]]))[0]
        cyl = MaterialRegion("cylinder", IsotropicTensor(1.0, 1.0),
                             {"point": [0, 0, 0], "direction": [1, 0, 0], "radius": 0.3})
        assert cyl.contains(np.array([[5.0, 0.2, 0.0]]))[0]
        assert not cyl.contains(np.array([[5.0, 0.2, 0.25]]))[0]

    def test_alpha_beta_span_regions(self):
        field = ElasticMaterialField([
            MaterialRegion("halfspace", IsotropicTensor(0.0, 5.0),
                           {"normal": [0, 0, 1.0], "offset": 0.0}),
            MaterialRegion("all", IsotropicTensor(1.0, 1.0)),
        ])
        assert field.alpha == 1.0
        assert field.beta == 5.0


class TestDensityValue:
    def test_zero_at_identity(self, unit_material):
        assert density_value(unit_material, X, np.eye(3)) == 0.0

    def test_zero_on_rotations(self, unit_material):
        for _ in range(20):
            R = rotation_exp(RNG.standard_normal(3))
            assert density_value(unit_material, X, R) < 1e-28

    def test_frame_indifference(self, unit_material):
        for _ in range(1000):
            F = random_orientation_preserving()
            R = rotation_exp(RNG.standard_normal(3))
            w1 = density_value(unit_material, X, F)
            w2 = density_value(unit_material, X, R @ F)
            assert abs(w1 - w2) <= 1e-12 * (1.0 + np.sum(F * F))

    def test_two_sided_distance_bounds(self, unit_material):
        for _ in range(1000):
            G = sym_part(RNG.standard_normal((3, 3)))
            w = quadratic_form_value(unit_material, X, G)
            n2 = np.sum(sym_part(G) ** 2)
            assert unit_material.alpha * n2 - 1e-12 <= w
            assert w <= unit_material.beta * n2 + 1e-12
        for _ in range(200):
            F = random_orientation_preserving()
            w = density_value(unit_material, X, F)
            d2 = rotation_distance_squared(F)
            assert unit_material.alpha * d2 - 1e-12 <= w <= unit_material.beta * d2 + 1e-12

    def test_penalty_branch_counts_and_is_finite(self, unit_material):
        diag = DensityDiagnostics()
        w = density_value(unit_material, X, -np.eye(3), diag)
        assert np.isfinite(w) and w > 0
        g = density_gradient(unit_material, X, -np.eye(3), diag)
        assert np.all(np.isfinite(g))
        assert diag.penalty_evaluations == 2

    def test_quadratic_expansion_near_identity(self, unit_material):
        """W(I + tG) approaches t^2 Q(G) for small symmetric perturbations."""
        G = sym_part(RNG.standard_normal((3, 3)))
        q = quadratic_form_value(unit_material, X, G)
        for t in (1e-3, 1e-4):
            w = density_value(unit_material, X, np.eye(3) + t * G)
            assert abs(w - t * t * q) <= 5.0 * t**3 * np.sum(G * G) ** 1.5


class TestDensityGradient:
    def test_zero_at_identity_and_rotations(self, unit_material):
        assert np.allclose(density_gradient(unit_material, X, np.eye(3)), 0.0)
        R = rotation_exp(RNG.standard_normal(3))
        assert np.allclose(density_gradient(unit_material, X, R), 0.0, atol=1e-14)

    def test_matches_finite_differences(self, unit_material):
        step = 1e-5
        for _ in range(100):
            F = random_orientation_preserving()
            G = density_gradient(unit_material, X, F)
            num = np.zeros((3, 3))
            for i in range(3):
                for j in range(3):
                    B = np.zeros((3, 3))
                    B[i, j] = step
                    num[i, j] = (
                        density_value(unit_material, X, F + B)
                        - density_value(unit_material, X, F - B)
                    ) / (2 * step)
            assert np.abs(G - num).max() <= 1e-6 * max(1.0, np.abs(G).max())

    def test_gradient_rotates_with_frame(self, unit_material):
        F = random_orientation_preserving()
        R = rotation_exp(RNG.standard_normal(3))
        G1 = density_gradient(unit_material, X, R @ F)
        G2 = R @ density_gradient(unit_material, X, F)
        assert np.abs(G1 - G2).max() < 1e-12

    def test_linear_growth(self, unit_material):
        for scale in (0.5, 2.0, 10.0, 100.0):
            F = scale * random_orientation_preserving(0.2)
            G = density_gradient(unit_material, X, F)
            M = 2.0 * unit_material.beta
            assert np.linalg.norm(G) <= M * (np.linalg.norm(F) + np.sqrt(3.0)) + 1e-9

    def test_stress_times_deformation_is_symmetric(self, unit_material):
        """DW(F) F^T symmetric: the pointwise consequence of frame indifference."""
        for _ in range(100):
            F = random_orientation_preserving()
            S = density_gradient(unit_material, X, F) @ F.T
            assert np.abs(S - S.T).max() < 1e-12 * max(1.0, np.abs(S).max())

    def test_hessian_at_identity_matches_quadratic_form(self, unit_material):
        t = 1e-4
        for _ in range(50):
            G = RNG.standard_normal((3, 3))
            q = quadratic_form_value(unit_material, X, G)
            w_pp = density_value(unit_material, X, np.eye(3) + t * G)
            w_mm = density_value(unit_material, X, np.eye(3) - t * G)
            second = (w_pp + w_mm) / (t * t)
            assert abs(second - 2.0 * q) <= 1e-4 * max(abs(q), 1e-8)

    def test_batched_kernel_agrees_with_scalar_path(self, unit_material):
        F = np.stack([random_orientation_preserving() for _ in range(30)])
        lam = np.full(30, 1.0)
        mu = np.full(30, 1.0)
        W, DW, det = energy_and_stress_many(lam, mu, F)
        for k in range(30):
            assert np.isclose(W[k], density_value(unit_material, X, F[k]), atol=1e-13)
            assert np.abs(DW[k] - density_gradient(unit_material, X, F[k])).max() < 1e-11
        assert np.all(det > 0)


class TestQuadraticForm:
    def test_vanishes_on_skew(self, unit_material):
        for _ in range(100):
            K = RNG.standard_normal((3, 3))
            K = K - K.T
            assert quadratic_form_value(unit_material, X, K) < 1e-28

    def test_identity_closed_form(self, unit_material):
        # mu |I|^2 + lam/2 tr(I)^2 with lam = mu = 1
        assert np.isclose(quadratic_form_value(unit_material, X, np.eye(3)), 7.5)

    def test_shear_dyad_closed_form(self, unit_material):
        G = np.zeros((3, 3))
        G[0, 1] = 1.0
        assert np.isclose(quadratic_form_value(unit_material, X, G), 0.5)

    def test_depends_only_on_symmetric_part(self, unit_material):
        G = RNG.standard_normal((3, 3))
        assert np.isclose(
            quadratic_form_value(unit_material, X, G),
            quadratic_form_value(unit_material, X, sym_part(G)),
        )


class TestTaylorResidual:
    def test_zero_perturbation(self, unit_material):
        assert taylor_residual(unit_material, X, np.zeros((3, 3)), 0.1) == 0.0

    def test_decay_along_halving_sequence(self, unit_material):
        G = RNG.standard_normal((3, 3))
        G /= np.linalg.norm(G)
        scales = [1e-1 / 2**k for k in range(8)]
        residuals = [taylor_residual(unit_material, X, G, s) for s in scales]
        # monotone in trend: each value below its predecessor up to 10% slack
        assert all(r1 <= 1.1 * r0 for r0, r1 in zip(residuals, residuals[1:]))
        assert residuals[-1] < residuals[0] / 50.0

    def test_below_threshold_at_reference_scale(self, unit_material):
        for _ in range(50):
            G = RNG.standard_normal((3, 3))
            G /= np.linalg.norm(G)
            assert taylor_residual(unit_material, X, G, 1e-3) < 1e-3

    def test_skew_direction_residual_small(self, unit_material):
        """Near-rotation perturbations: residual is O(h) along exp-map orbits."""
        K = RNG.standard_normal((3, 3))
        K = (K - K.T) / 2.0
        K /= np.linalg.norm(K)
        for h in (1e-2, 1e-3):
            res = taylor_residual(unit_material, X, K, h)
            # distance of I + hK to the rotation exp(hK) is O(h^2)
            assert res <= 2.0 * unit_material.beta * h

    def test_rejects_nonpositive_scale(self, unit_material):
        with pytest.raises(ValueError):
            taylor_residual(unit_material, X, np.eye(3), 0.0)
