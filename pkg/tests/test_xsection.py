"""Cross-section meshes and the warping relaxation."""

from __future__ import annotations

import numpy as np
import pytest

from thinrod.algebra import cross_matrix
from thinrod.material import ElasticMaterialField, IsotropicTensor, MaterialRegion
from thinrod.xsection import (
    CrossSectionMesh,
    MeshError,
    StiffnessTable,
    bmin,
    center_and_normalize,
    corrector_solve,
    disk_mesh,
    effective_stiffness,
    generate_mesh,
    parse_mesh_text,
    rectangle_mesh,
    section_system,
)

RNG = np.random.default_rng(41)


def halfspace_material(mu_top, mu_bottom, lam_top=0.0, lam_bottom=0.0):
    """Two half-sections split at x3 = 0, stiffer side on top by convention."""
    return ElasticMaterialField([
        MaterialRegion("halfspace", IsotropicTensor(lam_top, mu_top),
                       {"normal": [0.0, 0.0, 1.0], "offset": 0.0}),
        MaterialRegion("all", IsotropicTensor(lam_bottom, mu_bottom)),
    ])


class TestMeshGeneration:
    def test_disk_area_before_normalization(self):
        mesh = disk_mesh(0.7, 0.7 / 12)
        assert abs(mesh.area - np.pi * 0.49) < 0.01 * np.pi * 0.49

    def test_unit_square_triangle_count(self):
        mesh = rectangle_mesh(1.0, 1.0, 0.25)
        assert len(mesh.triangles) >= 32

    def test_degenerate_spec_rejected(self):
        with pytest.raises(MeshError):
            disk_mesh(0.0, 0.1)
        with pytest.raises(MeshError):
            rectangle_mesh(1.0, -1.0, 0.1)
        with pytest.raises(MeshError):
            generate_mesh("hexagon", 0.1)

    def test_target_edge_honored_within_factor_two(self):
        for target in (0.05, 0.11, 0.3):
            mesh = disk_mesh(1.0, target)
            p = mesh.vertices[mesh.triangles]
            edges = np.concatenate([
                np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
            ])
            assert edges.max() < 2.0 * target
            assert edges.max() > target / 2.0


class TestMeshImport:
    GOOD = "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n"

    def test_parses_valid_file(self):
        mesh = parse_mesh_text(self.GOOD)
        assert len(mesh.vertices) == 4
        assert np.isclose(mesh.area, 1.0)

    def test_reports_line_numbers(self):
        with pytest.raises(MeshError, match="line 1"):
            parse_mesh_text("not a header\n")
        with pytest.raises(MeshError, match="line 3"):
            parse_mesh_text("4 2\n0 0\n1 zero\n1 1\n0 1\n0 1 2\n0 2 3\n")
        with pytest.raises(MeshError, match="line 6"):
            parse_mesh_text("4 2\n0 0\n1 0\n1 1\n0 1\n0 1 9\n0 2 3\n")

    def test_rejects_nonconforming_meshes(self):
        # vertex 4 hangs inside the edge (1, 2): the left triangle spans it
        # while the two right triangles subdivide it
        bad = "5 3\n0 0\n1 0\n1 1\n2 0.5\n1 0.5\n0 1 2\n1 3 4\n4 3 2\n"
        with pytest.raises(MeshError, match="hanging"):
            parse_mesh_text(bad)

    def test_rejects_disconnected_meshes(self):
        bad = "6 2\n0 0\n1 0\n0 1\n5 5\n6 5\n5 6\n0 1 2\n3 4 5\n"
        with pytest.raises(MeshError, match="connected"):
            parse_mesh_text(bad)


class TestCenterAndNormalize:
    def test_idempotent_on_normalized_disk(self):
        mesh = center_and_normalize(disk_mesh(1.0, 0.2))
        again = center_and_normalize(mesh)
        assert np.abs(again.vertices - mesh.vertices).max() < 1e-12

    def test_translation_removed(self):
        base = disk_mesh(1.0, 0.2)
        shifted = CrossSectionMesh(base.vertices + [2.0, -3.0], base.triangles)
        out = center_and_normalize(shifted)
        assert abs(out.moments.first_x2) < 1e-10
        assert abs(out.moments.first_x3) < 1e-10
        assert abs(out.moments.area - 1.0) < 1e-12

    def test_tilted_rectangle_lands_on_principal_axes(self):
        base = rectangle_mesh(2.0, 1.0, 0.1)
        th = np.deg2rad(30.0)
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        tilted = CrossSectionMesh(base.vertices @ Q.T + [0.5, 0.25], base.triangles)
        out = center_and_normalize(tilted)
        assert abs(out.moments.product) < 1e-10
        # principal-axis oracle: the 2x2 moment matrix must be diagonal with
        # the larger moment along x2 (the long side ends up along x2)
        assert out.moments.i2 > out.moments.i3

    def test_moments_against_closed_forms(self):
        out = center_and_normalize(rectangle_mesh(2.0, 1.0, 0.05))
        # unit-area a x b rectangle with a/b = 4: i2 = a^2/12, i3 = b^2/12
        a = np.sqrt(2.0 / 1.0) * np.sqrt(2.0) / np.sqrt(2.0)  # = sqrt(2)
        b = 1.0 / a
        assert np.isclose(out.moments.i2, a * a / 12.0, rtol=1e-10)
        assert np.isclose(out.moments.i3, b * b / 12.0, rtol=1e-10)


class TestCorrectorSolve:
    def test_zero_datum_gives_zero(self, unit_material, coarse_disk):
        w, energy = corrector_solve(unit_material, 0.0, np.zeros((3, 3)), 0.0, coarse_disk)
        assert energy == 0.0
        assert np.abs(w.values).max() == 0.0

    def test_pure_stretch_relaxes_to_youngs_modulus(self, unit_material, fine_disk):
        """Minimizing over lateral contraction leaves the uniaxial energy E/2."""
        _, energy = corrector_solve(unit_material, 0.0, np.zeros((3, 3)), 1.0, fine_disk)
        young = unit_material.tensor_at([0, 0, 0]).youngs_modulus
        assert abs(energy - 0.5 * young) < 1e-12

    def test_disk_twist_matches_polar_moment(self, unit_material, fine_disk):
        """On a disk the torsion warping vanishes: energy = mu J / 2 exactly
        with J the polar moment of the meshed polygon."""
        B = cross_matrix([1.0, 0.0, 0.0])
        w, energy = corrector_solve(unit_material, 0.0, B, 0.0, fine_disk)
        J = fine_disk.moments.i2 + fine_disk.moments.i3
        mu = unit_material.tensor_at([0, 0, 0]).mu
        assert abs(energy - 0.5 * mu * J) < 1e-12
        assert np.abs(w.values).max() < 1e-12

    def test_gauge_conditions_hold(self, unit_material, coarse_disk):
        B = cross_matrix(RNG.standard_normal(3))
        w, _ = corrector_solve(unit_material, 0.0, B, 0.7, coarse_disk)
        assert np.abs(w.gauge_residuals(coarse_disk)).max() < 1e-12

    def test_gauge_invariance_of_energy(self, unit_material, coarse_disk):
        """Shifting the minimizer by kernel fields does not change the functional."""
        a = np.array([0.4, -0.2, 0.9])
        system = section_system(unit_material, 0.0, coarse_disk)
        w, energy, f = system.solve(a, 0.3)
        shift = np.empty_like(w.values)
        shift[:, 0] = 1.3
        shift[:, 1] = -0.2 - 0.8 * coarse_disk.vertices[:, 1]
        shift[:, 2] = 0.5 + 0.8 * coarse_disk.vertices[:, 0]
        wk = (w.values + shift).reshape(-1)
        K = system.K
        c0 = system.datum_pairing(a, 0.3, a, 0.3)
        shifted_energy = 0.5 * c0 + float(f @ wk) + 0.5 * float(wk @ (K @ wk))
        assert abs(shifted_energy - energy) < 1e-12 * max(1.0, abs(energy))


class TestEffectiveStiffness:
    def test_disk_oracles(self, unit_material, fine_disk, disk_stiffness):
        """Euler-Bernoulli / uniaxial / torsion closed forms for the unit disk."""
        t = unit_material.tensor_at([0, 0, 0])
        young, mu = t.youngs_modulus, t.mu
        d = np.diag(disk_stiffness.gram)
        assert abs(d[0] - mu / (2 * np.pi)) < 0.02 * mu / (2 * np.pi)
        assert abs(d[1] - young / (4 * np.pi)) < 0.02 * young / (4 * np.pi)
        assert abs(d[2] - young / (4 * np.pi)) < 0.02 * young / (4 * np.pi)
        assert abs(d[3] - young) < 0.01 * young
        off = disk_stiffness.gram - np.diag(d)
        assert np.abs(off).max() < 1e-3 * np.abs(d).max()

    def test_quadratic_consistency_with_fresh_solves(self, unit_material, coarse_disk):
        eff = effective_stiffness(unit_material, 0.0, coarse_disk)
        for _ in range(50):
            a = RNG.standard_normal(3)
            b = float(RNG.standard_normal())
            _, energy = corrector_solve(unit_material, 0.0, cross_matrix(a), b, coarse_disk)
            predicted = eff.energy(a, b)
            assert abs(energy - predicted) <= 1e-8 * max(abs(predicted), 1e-12)

    def test_homogeneous_centered_section_decouples_stretch(self, unit_material,
                                                            disk_stiffness):
        assert np.abs(disk_stiffness.bmin_row).max() < 1e-10

    def test_reduced_is_schur_complement_and_minimal(self, unit_material, coarse_disk):
        eff = effective_stiffness(unit_material, 0.0, coarse_disk)
        a = RNG.standard_normal(3)
        q_red = eff.reduced_energy(a)
        b_star = float(eff.bmin_row @ a)
        values = [eff.energy(a, b_star + db) for db in np.linspace(-1.0, 1.0, 21)]
        assert np.isclose(q_red, eff.energy(a, b_star))
        assert all(v >= q_red - 1e-14 for v in values)

    def test_mesh_convergence_of_reduced_entries(self, unit_material):
        entries = []
        for edge in (1.0 / 11, 1.0 / 16):
            mesh = center_and_normalize(disk_mesh(1.0, edge))
            entries.append(np.diag(effective_stiffness(unit_material, 0.0, mesh).reduced))
        rel = np.abs(entries[1] - entries[0]) / np.abs(entries[1])
        assert rel.max() < 0.01

    def test_monotone_in_material(self, unit_material, coarse_disk):
        """Pointwise larger elastic tensor gives a larger quadratic form."""
        eff1 = effective_stiffness(unit_material, 0.0, coarse_disk)
        for s in (1.5, 4.0):
            scaled = ElasticMaterialField.homogeneous(s * 1.0, s * 1.0)
            eff2 = effective_stiffness(scaled, 0.0, coarse_disk)
            eigs = np.linalg.eigvalsh(eff2.gram - eff1.gram)
            assert eigs.min() > -1e-10
        half = halfspace_material(4.0, 1.0, 1.0, 1.0)
        eff_half = effective_stiffness(half, 0.0, coarse_disk)
        assert np.linalg.eigvalsh(eff_half.gram - eff1.gram).min() > -1e-10

    def test_bimaterial_torsion_between_bounds(self, coarse_disk):
        soft = ElasticMaterialField.homogeneous(1.0, 1.0)
        stiff = ElasticMaterialField.homogeneous(1.0, 10.0)
        mix = halfspace_material(10.0, 1.0, 1.0, 1.0)
        t_soft = effective_stiffness(soft, 0.0, coarse_disk).gram[0, 0]
        t_stiff = effective_stiffness(stiff, 0.0, coarse_disk).gram[0, 0]
        eff = effective_stiffness(mix, 0.0, coarse_disk)
        assert t_soft < eff.gram[0, 0] < t_stiff
        np.linalg.cholesky(eff.reduced)  # SPD

    def test_rectangle_couplings_vanish_by_symmetry(self, unit_material):
        mesh = center_and_normalize(rectangle_mesh(2.0, 1.0, 0.1))
        eff = effective_stiffness(unit_material, 0.0, mesh)
        off = eff.gram - np.diag(np.diag(eff.gram))
        assert np.abs(off).max() < 1e-10 * np.abs(eff.gram).max()


class TestBmin:
    def test_zero_for_zero_datum(self, disk_stiffness):
        assert bmin(disk_stiffness, np.zeros((3, 3))) == 0.0

    def test_zero_for_homogeneous_centered_section(self, disk_stiffness):
        B = cross_matrix(RNG.standard_normal(3))
        assert abs(bmin(disk_stiffness, B)) < 1e-10

    def test_layered_section_closed_form(self, fine_disk):
        """lam = 0 decouples the warping exactly: the two-layer axial-energy
        argmin -int(E x3)/int(E) is reproduced to solver precision, and the
        analytic half-disk moment pins it independently of the mesh."""
        mu_top, mu_bot = 5.0, 1.0
        mat = halfspace_material(mu_top, mu_bot)
        eff = effective_stiffness(mat, 0.0, fine_disk)
        B = cross_matrix([0.0, 1.0, 0.0])  # bending with axial strain ~ x3
        b = bmin(eff, B)
        # mesh-exact oracle (quadrature of E and E x3 over the section)
        pts, wq = fine_disk.quadrature()
        E_pt = np.where(pts[:, 1] >= 0.0, 2.0 * mu_top, 2.0 * mu_bot)
        b_mesh = -float(wq @ (E_pt * pts[:, 1])) / float(wq @ E_pt)
        assert abs(b - b_mesh) < 1e-10
        # analytic disk oracle: int_{top half} x3 dA = (2/3) r^3, r = 1/sqrt(pi)
        r = 1.0 / np.sqrt(np.pi)
        moment = (2.0 / 3.0) * r**3 * (2.0 * mu_top - 2.0 * mu_bot)
        mean_E = 0.5 * (2.0 * mu_top + 2.0 * mu_bot)
        b_analytic = -moment / mean_E
        assert abs(b - b_analytic) < 0.01 * abs(b_analytic)
        assert b < 0.0  # stiff side on top pulls the neutral axis up

    def test_first_order_condition(self, fine_disk):
        mat = halfspace_material(3.0, 1.0, 0.5, 0.2)
        eff = effective_stiffness(mat, 0.0, fine_disk)
        a = RNG.standard_normal(3)
        b = bmin(eff, cross_matrix(a))
        slope = float(eff.gram[3, :3] @ a + eff.gram[3, 3] * b)
        assert abs(slope) < 1e-10


class TestStiffnessTable:
    def test_uniform_material_shares_one_solve(self, unit_material, coarse_disk):
        table = StiffnessTable(unit_material, coarse_disk)
        effs = table.sample(np.linspace(0.05, 0.95, 7))
        assert len(table._cache) == 1
        assert all(e is effs[0] for e in effs)

    def test_axially_varying_material_splits_cache(self, coarse_disk):
        mat = ElasticMaterialField([
            MaterialRegion("box", IsotropicTensor(1.0, 5.0),
                           {"lo": [0.0, -np.inf, -np.inf], "hi": [0.5, np.inf, np.inf]}),
            MaterialRegion("all", IsotropicTensor(1.0, 1.0)),
        ])
        assert not mat.is_uniform_in_x1()
        table = StiffnessTable(mat, coarse_disk)
        effs = table.sample([0.25, 0.75])
        assert len(table._cache) == 2
        assert effs[0].gram[0, 0] > effs[1].gram[0, 0]
