"""Diagnostics connecting the 3D equilibria to the 1D limit model.

Provides the pieces of the desk-scale convergence experiment: slice-fitted
rotation fields and their curvature, linearized strain and nonlinear
stress with their cross-sectional moments, the exact corrector-identity
decomposition of a displacement into an elementary rod-like part plus a
controlled remainder, extraction of the ansatz corrector z and of the
axial stretch p1, and the h-ladder study that packages everything into a
report with empirical rates and pass/fail verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    axial_vector,
    cross_matrix,
    left_jacobian,
    polar_rotation,
    rotation_exp,
    rotation_log,
    skew_part,
    sym_part,
)
from .material import ElasticMaterialField, energy_and_stress_many
from .rod1d import (
    CurvatureField,
    LoadSpec,
    RodState,
    frame_integrate,
    minimize_limit_energy,
    stationarity_residual_1d,
)
from .rod3d import (
    DeformationField,
    PrismMesh,
    min_scaled_det,
    minimize_3d,
    rest_state,
    scaled_gradients,
)
from .xsection import CrossSectionMesh, StiffnessTable


class RotationPath:
    """Piecewise-geodesic rotation field on a uniform grid of (0, L).

    Between nodes the field follows R(x) = R_j exp(t hat(w_j)) with
    t = (x - x_j)/dx and w_j = log(R_j^T R_{j+1}); the running tangent
    integral int_0^x R e1 has the closed form dx R_j J_left(t w_j) e1 t on
    each segment, so ansatz lifts and comparisons never need numerical
    quadrature of the frame field.
    """

    def __init__(self, rotations: np.ndarray, length: float):
        self.R = np.asarray(rotations, dtype=float)
        self.length = float(length)
        self.n = len(self.R) - 1
        if self.n < 1:
            raise ValueError("rotation path needs at least two nodes")
        self.dx = self.length / self.n
        self.w = np.empty((self.n, 3))
        for i in range(self.n):
            self.w[i] = rotation_log(self.R[i].T @ self.R[i + 1])
        # nodal tangent integrals Y_j = int_0^{x_j} R e1
        self.Y = np.zeros((self.n + 1, 3))
        for i in range(self.n):
            self.Y[i + 1] = self.Y[i] + self.dx * (self.R[i] @ left_jacobian(self.w[i]))[:, 0]

    @classmethod
    def from_rod_state(cls, state: RodState) -> "RotationPath":
        return cls(state.frames, state.curvature.length)

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        seg = np.clip((x / self.dx).astype(int), 0, self.n - 1)
        t = x / self.dx - seg
        return seg, t

    def rotation_at(self, x) -> np.ndarray:
        seg, t = self._locate(x)
        return self.R[seg] @ rotation_exp(t[..., None] * self.w[seg])

    def tangent_integral_at(self, x) -> np.ndarray:
        seg, t = self._locate(x)
        partial = (t * self.dx)[..., None] * np.einsum(
            "...ij,...j->...i", self.R[seg] @ left_jacobian(t[..., None] * self.w[seg]),
            np.broadcast_to([1.0, 0.0, 0.0], t.shape + (3,)),
        )
        return self.Y[seg] + partial

    def curvature_segments(self) -> np.ndarray:
        """Per-segment axial curvature vectors axl(A) = w / dx."""
        return self.w / self.dx


def make_ansatz_deformation(mesh: PrismMesh, h: float, path: RotationPath,
                            z_nodal: np.ndarray | None = None) -> DeformationField:
    """Lift a frame field to the 3D mesh: y = int R e1 + h x2 R e2 + h x3 R e3 + h z."""
    nv = len(mesh.section.vertices)
    layers = mesh.layer_x1()
    R = path.rotation_at(layers)  # (n1+1, 3, 3)
    Y = path.tangent_integral_at(layers)
    values = np.empty((mesh.node_count, 3))
    xs = mesh.section.vertices
    for j in range(len(layers)):
        sl = slice(j * nv, (j + 1) * nv)
        values[sl] = (
            Y[j]
            + h * xs[:, 0:1] * R[j][:, 1]
            + h * xs[:, 1:2] * R[j][:, 2]
        )
    if z_nodal is not None:
        values = values + h * np.asarray(z_nodal, dtype=float)
    return DeformationField(mesh, values, h)


# ---------------------------------------------------------------------------
# Slice rotations and strain/stress fields
# ---------------------------------------------------------------------------

class SliceFitError(RuntimeError):
    """Raised when a slice average is too degenerate to carry a rotation."""


@dataclass
class SliceFrameField:
    """Per-node rotations fitted to the scaled gradient, with their curvature.

    curvature_segments[i] = axl(A) on segment i where A = R^T R' is taken
    from the geodesic log between neighboring node rotations (exactly skew
    by construction).
    """

    x1: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        self.path = RotationPath(self.rotations, float(self.x1[-1]))

    def curvature_segments(self) -> np.ndarray:
        return self.path.curvature_segments()

    def rotation_at(self, x) -> np.ndarray:
        return self.path.rotation_at(x)


def fit_slice_rotations(deformation: DeformationField) -> SliceFrameField:
    """Closest rotation to the volume-averaged scaled gradient per x1 node.

    The slice of a node collects the tetrahedra of its adjacent axial
    layers (one layer at the ends).  Degenerate slice averages
    (det <= 0) are reported with the offending node index.
    """
    mesh = deformation.mesh
    F = scaled_gradients(deformation)
    n1 = mesh.axial_elements
    vol = mesh.volumes
    layer_avg = np.zeros((n1, 3, 3))
    layer_vol = np.zeros(n1)
    np.add.at(layer_avg, mesh.tet_layer, vol[:, None, None] * F)
    np.add.at(layer_vol, mesh.tet_layer, vol)
    rotations = np.empty((n1 + 1, 3, 3))
    for j in range(n1 + 1):
        if j == 0:
            mean = layer_avg[0] / layer_vol[0]
        elif j == n1:
            mean = layer_avg[-1] / layer_vol[-1]
        else:
            mean = (layer_avg[j - 1] + layer_avg[j]) / (layer_vol[j - 1] + layer_vol[j])
        det = np.linalg.det(mean)
        if det <= 0.0:
            raise SliceFitError(
                f"slice average at node {j} has det {det:.3e}; deformation too degenerate"
            )
        rotations[j] = polar_rotation(mean)
    return SliceFrameField(x1=mesh.layer_x1(), rotations=rotations)


@dataclass
class StrainStressFields:
    """Per-quadrature-point linearized strain and nonlinear stress.

    G = (R^T grad_h y - I)/h and E = DW(., I + h G)/h, with the slice
    aggregates Ebar (mean), Etilde (x2 moment) and Ehat (x3 moment) taken
    per axial layer with the assembly quadrature.
    """

    h: float
    G: np.ndarray
    E: np.ndarray
    Ebar: np.ndarray
    Etilde: np.ndarray
    Ehat: np.ndarray
    layer_x1_mid: np.ndarray


def compute_strain_stress(deformation: DeformationField, mat: ElasticMaterialField,
                          frames: SliceFrameField) -> StrainStressFields:
    mesh = deformation.mesh
    h = deformation.h
    F = scaled_gradients(deformation)
    R = frames.rotation_at(mesh.centroids[:, 0])
    G = (np.swapaxes(R, -1, -2) @ F - np.eye(3)) / h
    lam, mu = mat.lame_at(mesh.centroids)
    _, DW, _ = energy_and_stress_many(lam, mu, np.eye(3) + h * G)
    E = DW / h
    n1 = mesh.axial_elements
    dx1 = mesh.length / n1
    vol = mesh.volumes
    x2c = mesh.centroids[:, 1]
    x3c = mesh.centroids[:, 2]
    Ebar = np.zeros((n1, 3, 3))
    Etilde = np.zeros((n1, 3, 3))
    Ehat = np.zeros((n1, 3, 3))
    np.add.at(Ebar, mesh.tet_layer, vol[:, None, None] * E)
    np.add.at(Etilde, mesh.tet_layer, (vol * x2c)[:, None, None] * E)
    np.add.at(Ehat, mesh.tet_layer, (vol * x3c)[:, None, None] * E)
    mid = (np.arange(n1) + 0.5) * dx1
    return StrainStressFields(
        h=h, G=G, E=E, Ebar=Ebar / dx1, Etilde=Etilde / dx1, Ehat=Ehat / dx1,
        layer_x1_mid=mid,
    )


def skew_stress_residual(fields: StrainStressFields) -> float:
    """Max pointwise defect of skew(E) = h skew(G E^T) over quadrature points."""
    lhs = skew_part(fields.E)
    rhs = fields.h * skew_part(fields.G @ np.swapaxes(fields.E, -1, -2))
    return float(np.abs(lhs - rhs).max())


# ---------------------------------------------------------------------------
# Corrector-identity (Griso-type) decomposition
# ---------------------------------------------------------------------------

@dataclass
class GrisoDecomposition:
    """Split of a displacement into skew-field part and remainder.

    sym grad_h u = sym iota(Psi' p) + sym grad_h v holds exactly at the
    quadrature points (identity_residual is roundoff); the measured
    constant of the a-priori bound is reported as bound_constant.
    """

    psi: np.ndarray  # (n1+1, 3, 3) skew matrices at the axial nodes
    v_nodal: np.ndarray  # (node_count, 3) remainder at the mesh nodes
    grad_v: np.ndarray  # (ntet, 3, 3) exact scaled gradient of the remainder
    identity_residual: float
    psi_norm_w12: float
    v_norm_l2: float
    grad_v_norm_l2: float
    sym_norm_l2: float

    @property
    def bound_constant(self) -> float:
        return (self.psi_norm_w12 + self.v_norm_l2 + self.grad_v_norm_l2) / max(
            self.sym_norm_l2, 1e-300
        )


def _nodal_gradients_h(mesh: PrismMesh, values: np.ndarray, h: float) -> np.ndarray:
    F = np.einsum("tai,taj->tij", values[mesh.tets], mesh.shape_gradients)
    F[:, :, 1:] /= h
    return F


def griso_decompose(mesh: PrismMesh, u_nodal: np.ndarray, h: float) -> GrisoDecomposition:
    """Constructive corrector decomposition of a displacement field u.

    Per axial node the skew field Psi is the slice least-squares fit of u
    against the section position (with the centered moments the fit is
    diagonal: Psi_12 = int x2 u1 / I2 and so on); the compensated field

        c = Psi p - (1/h)(int_0^x1 Psi_12 e2 + int_0^x1 Psi_13 e3)

    has sym grad_h c = sym iota(Psi' p) exactly, which is verified
    numerically (the 1/h terms must cancel), and the remainder is
    v = u - c with its scaled gradient evaluated in closed form at the
    quadrature points.
    """
    section = mesh.section
    nv = len(section.vertices)
    n1 = mesh.axial_elements
    dx1 = mesh.length / n1
    u_nodal = np.asarray(u_nodal, dtype=float)
    if u_nodal.shape != (mesh.node_count, 3):
        raise ValueError("displacement must be nodal on the prism mesh")

    i0, i2, i3 = section.vertex_integrals()
    m = section.moments
    psi_entries = np.empty((n1 + 1, 3))  # (Psi_12, Psi_13, Psi_23) per node
    for j in range(n1 + 1):
        u = u_nodal[j * nv:(j + 1) * nv]
        psi_entries[j, 0] = (i2 @ u[:, 0]) / m.i2
        psi_entries[j, 1] = (i3 @ u[:, 0]) / m.i3
        psi_entries[j, 2] = ((i3 @ u[:, 1]) - (i2 @ u[:, 2])) / (m.i2 + m.i3)

    def to_skew(entries):
        out = np.zeros(entries.shape[:-1] + (3, 3))
        out[..., 0, 1] = entries[..., 0]
        out[..., 1, 0] = -entries[..., 0]
        out[..., 0, 2] = entries[..., 1]
        out[..., 2, 0] = -entries[..., 1]
        out[..., 1, 2] = entries[..., 2]
        out[..., 2, 1] = -entries[..., 2]
        return out

    psi = to_skew(psi_entries)
    # running integral of Psi (trapezoid = exact for the nodal-linear field)
    psi_hat = np.zeros_like(psi_entries)
    psi_hat[1:] = np.cumsum(0.5 * dx1 * (psi_entries[:-1] + psi_entries[1:]), axis=0)

    # compensated field at the mesh nodes
    c_nodal = np.empty_like(u_nodal)
    xs = section.vertices
    for j in range(n1 + 1):
        sl = slice(j * nv, (j + 1) * nv)
        pvec = np.zeros((nv, 3))
        pvec[:, 1:] = xs
        c_nodal[sl] = np.einsum("ij,nj->ni", psi[j], pvec)
        c_nodal[sl, 1] -= psi_hat[j, 0] / h
        c_nodal[sl, 2] -= psi_hat[j, 1] / h
    v_nodal = u_nodal - c_nodal

    # exact scaled gradient of c at the tet centroids
    layer = mesh.tet_layer
    t = (mesh.centroids[:, 0] - layer * dx1) / dx1
    psi_c = psi[layer] + t[:, None, None] * (psi[layer + 1] - psi[layer])
    dpsi = (psi[layer + 1] - psi[layer]) / dx1
    pvec_c = mesh.centroids.copy()
    pvec_c[:, 0] = 0.0
    grad_c = np.zeros((len(mesh.tets), 3, 3))
    grad_c[:, :, 0] = np.einsum("tij,tj->ti", dpsi, pvec_c)
    grad_c[:, 1, 0] -= psi_c[:, 0, 1] / h
    grad_c[:, 2, 0] -= psi_c[:, 0, 2] / h
    grad_c[:, :, 1] = psi_c[:, :, 1] / h
    grad_c[:, :, 2] = psi_c[:, :, 2] / h

    grad_u = _nodal_gradients_h(mesh, u_nodal, h)
    grad_v = grad_u - grad_c

    # identity check: sym grad_h c must equal sym iota(Psi' p) exactly
    elementary = np.zeros_like(grad_c)
    elementary[:, :, 0] = np.einsum("tij,tj->ti", dpsi, pvec_c)
    residual = float(np.abs(sym_part(grad_c) - sym_part(elementary)).max())

    # measured norms for the a-priori bound
    sym_u = sym_part(grad_u)
    vol = mesh.volumes
    sym_norm = float(np.sqrt(vol @ np.sum(sym_u * sym_u, axis=(1, 2))))
    gv_norm = float(np.sqrt(vol @ np.sum(grad_v * grad_v, axis=(1, 2))))
    # v at centroids: P1 mean of nodal u minus exact c at the centroid
    u_cent = u_nodal[mesh.tets].mean(axis=1)
    psihat_c = psi_hat[layer] + t[:, None] * dx1 * (
        psi_entries[layer] + 0.5 * t[:, None] * (psi_entries[layer + 1] - psi_entries[layer])
    )
    c_cent = np.einsum("tij,tj->ti", psi_c, pvec_c)
    c_cent[:, 1] -= psihat_c[:, 0] / h
    c_cent[:, 2] -= psihat_c[:, 1] / h
    v_cent = u_cent - c_cent
    v_norm = float(np.sqrt(vol @ np.sum(v_cent * v_cent, axis=1)))
    # W12 norm of Psi on (0, L): piecewise linear entries, exact integrals
    e = psi_entries
    seg_sq = (e[:-1] ** 2 + e[:-1] * e[1:] + e[1:] ** 2).sum(axis=1) / 3.0
    de = (e[1:] - e[:-1]) / dx1
    psi_norm = float(np.sqrt(dx1 * (2.0 * seg_sq).sum() + dx1 * (2.0 * de**2).sum()))
    # entries appear twice in the skew matrix, hence the factors 2

    return GrisoDecomposition(
        psi=psi, v_nodal=v_nodal, grad_v=grad_v, identity_residual=residual,
        psi_norm_w12=psi_norm, v_norm_l2=v_norm, grad_v_norm_l2=gv_norm,
        sym_norm_l2=sym_norm,
    )


# ---------------------------------------------------------------------------
# Ansatz extraction
# ---------------------------------------------------------------------------

def extract_ansatz_fields(deformation: DeformationField, frames: SliceFrameField):
    """Recover the corrector z and the slice-mean axial stretch p1.

    z = (y - int_0^x1 R e1 - h x2 R e2 - h x3 R e3)/h at the mesh nodes;
    p1 per axial layer is the slice mean of (R^T d1 z) . e1.
    """
    mesh = deformation.mesh
    h = deformation.h
    nv = len(mesh.section.vertices)
    layers = mesh.layer_x1()
    R = frames.path.rotation_at(layers)
    Y = frames.path.tangent_integral_at(layers)
    xs = mesh.section.vertices
    z = np.empty_like(deformation.values)
    for j in range(len(layers)):
        sl = slice(j * nv, (j + 1) * nv)
        lift = Y[j] + h * xs[:, 0:1] * R[j][:, 1] + h * xs[:, 1:2] * R[j][:, 2]
        z[sl] = (deformation.values[sl] - lift) / h
    dz = np.einsum("tai,taj->tij", z[mesh.tets], mesh.shape_gradients)  # unscaled
    d1z = dz[:, :, 0]
    Rc = frames.rotation_at(mesh.centroids[:, 0])
    p_axial = np.einsum("tji,tj->ti", Rc, d1z)[:, 0]
    n1 = mesh.axial_elements
    dx1 = mesh.length / n1
    p1 = np.zeros(n1)
    np.add.at(p1, mesh.tet_layer, mesh.volumes * p_axial)
    return z, p1 / dx1


# ---------------------------------------------------------------------------
# The h-ladder convergence study
# ---------------------------------------------------------------------------

@dataclass
class LadderScenario:
    """Everything the per-h pipeline needs, independent of h."""

    length: float
    section: CrossSectionMesh
    material: ElasticMaterialField
    load: LoadSpec
    axial_per_h: float = 6.0
    axial_elements: int | None = None  # fixed count overrides the h scaling
    min_axial: int = 8
    tol_1d: float = 1e-10
    tol_3d: float = 1e-8
    max_iter_1d: int = 5000
    max_iter_3d: int = 100

    def axial_count(self, h: float) -> int:
        if self.axial_elements is not None:
            return self.axial_elements
        return max(self.min_axial, int(np.ceil(self.axial_per_h * self.length / h)))


@dataclass
class LadderRow:
    """Diagnostics of one thickness in the convergence study."""

    h: float
    axial_elements: int
    err_grad: float
    err_rot: float
    energy_gap: float
    residual_1d: float
    ident_gap: float
    stress_mean: float
    elastic_energy: float
    total_energy: float
    min_det: float
    tip_position: tuple
    iterations_3d: int
    failure: str = ""


@dataclass
class ConvergenceReport:
    rows: list
    rates: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    reference_tip: tuple = ()

    def passed(self) -> bool:
        return all(self.verdicts.values())


def _l2_gradient_error(deformation: DeformationField, target_path: RotationPath) -> float:
    mesh = deformation.mesh
    F = scaled_gradients(deformation)
    Rt = target_path.rotation_at(mesh.centroids[:, 0])
    diff = F - Rt
    return float(np.sqrt(mesh.volumes @ np.sum(diff * diff, axis=(1, 2))))


def _rotation_fit_error(deformation: DeformationField, frames: SliceFrameField) -> float:
    mesh = deformation.mesh
    F = scaled_gradients(deformation)
    Rs = frames.rotation_at(mesh.centroids[:, 0])
    diff = F - Rs
    return float(np.sqrt(mesh.volumes @ np.sum(diff * diff, axis=(1, 2))))


def run_ladder_step(scenario: LadderScenario, h: float, table: StiffnessTable) -> LadderRow:
    """One thickness of the convergence experiment."""
    n1 = scenario.axial_count(h)
    mesh = PrismMesh(scenario.section, scenario.length, n1)
    dx1 = scenario.length / n1
    mids = (np.arange(n1) + 0.5) * dx1
    eff_list = table.sample(mids)

    # 1D stationary point on the same axial grid, zero init, used for the lift
    base_curv, base_state, _ = minimize_limit_energy(
        CurvatureField.zero(n1, scenario.length), eff_list, scenario.load,
        tol=scenario.tol_1d, max_iter=scenario.max_iter_1d,
    )
    lift = make_ansatz_deformation(mesh, h, RotationPath.from_rod_state(base_state))
    solution, result = minimize_3d(lift, scenario.material, scenario.load,
                                   tol=scenario.tol_3d, max_iter=scenario.max_iter_3d)

    frames = fit_slice_rotations(solution)
    fields = compute_strain_stress(solution, scenario.material, frames)
    _, p1 = extract_ansatz_fields(solution, frames)

    # projected 1D state and the basin-matched reference solve
    projected = CurvatureField(frames.curvature_segments(), scenario.length)
    ref_curv, ref_state, _ = minimize_limit_energy(
        projected, eff_list, scenario.load,
        tol=scenario.tol_1d, max_iter=scenario.max_iter_1d,
    )
    ref_path = RotationPath.from_rod_state(ref_state)

    err_grad = _l2_gradient_error(solution, ref_path)
    err_rot = _rotation_fit_error(solution, frames)
    residual_1d = stationarity_residual_1d(
        frame_integrate(projected), eff_list, scenario.load
    )

    reduced = np.stack([e.reduced for e in eff_list])
    elastic_1d = 0.5 * dx1 * float(
        np.einsum("ni,nij,nj->", ref_curv.values, reduced, ref_curv.values)
    )
    elastic_3d = _elastic_energy(solution, scenario.material)
    total = elastic_3d - _work_of_load(solution, scenario.load)

    bmin_seg = np.array([
        float(e.bmin_row @ a) for e, a in zip(eff_list, projected.values)
    ])
    ident_gap = float(np.sqrt(dx1 * np.sum((p1 - bmin_seg) ** 2)))
    stress_cols = fields.Ebar[:, :, 0]
    stress_mean = float(np.sqrt(dx1 * np.sum(stress_cols**2)))

    nv = len(scenario.section.vertices)
    tip = solution.values[-nv:].mean(axis=0)
    return LadderRow(
        h=h, axial_elements=n1, err_grad=err_grad, err_rot=err_rot,
        energy_gap=abs(elastic_3d - elastic_1d), residual_1d=residual_1d,
        ident_gap=ident_gap, stress_mean=stress_mean,
        elastic_energy=elastic_3d, total_energy=total,
        min_det=min_scaled_det(solution), tip_position=tuple(tip),
        iterations_3d=result.iterations,
    )


def _elastic_energy(deformation: DeformationField, mat: ElasticMaterialField) -> float:
    mesh = deformation.mesh
    lam, mu = mat.lame_at(mesh.centroids)
    F = scaled_gradients(deformation)
    W, _, _ = energy_and_stress_many(lam, mu, F)
    return float(mesh.volumes @ W) / deformation.h**2


def _work_of_load(deformation: DeformationField, load: LoadSpec) -> float:
    mesh = deformation.mesh
    from .rod3d import _load_at_centroids

    g_c = _load_at_centroids(load, mesh)
    y_mean = deformation.values[mesh.tets].mean(axis=1)
    return float(np.sum(mesh.volumes[:, None] * g_c * y_mean))


def convergence_study(scenario: LadderScenario, h_list,
                      thresholds: dict | None = None) -> ConvergenceReport:
    """Run the ladder and assemble rates and verdicts.

    h_list must be strictly decreasing with at least three entries.  Any
    failing sub-solve marks its row and the report carries the partial
    results.  Default verdict thresholds follow the acceptance scenario:
    err_grad strictly decreasing, err_rot/h within a factor 3 across the
    ladder, slice-mean stress first column down by >= 2x, identification
    gap decreasing.
    """
    h_arr = np.asarray(list(h_list), dtype=float)
    if len(h_arr) < 3:
        raise ValueError("h ladder needs at least three values")
    if not np.all(np.diff(h_arr) < 0.0):
        raise ValueError("h ladder must be strictly decreasing")
    thr = {"err_rot_ratio_factor": 3.0, "stress_trend_factor": 2.0}
    if thresholds:
        thr.update(thresholds)

    table = StiffnessTable(scenario.material, scenario.section)
    rows = []
    for h in h_arr:
        try:
            rows.append(run_ladder_step(scenario, float(h), table))
        except Exception as exc:  # partial report with failure marker
            rows.append(LadderRow(
                h=float(h), axial_elements=scenario.axial_count(float(h)),
                err_grad=np.nan, err_rot=np.nan, energy_gap=np.nan,
                residual_1d=np.nan, ident_gap=np.nan, stress_mean=np.nan,
                elastic_energy=np.nan, total_energy=np.nan, min_det=np.nan,
                tip_position=(), iterations_3d=0,
                failure=f"{type(exc).__name__}: {exc}",
            ))

    report = ConvergenceReport(rows=rows)
    ok = [r for r in rows if not r.failure]
    if len(ok) == len(rows):
        def rate(values):
            out = []
            for r0, r1, h0, h1 in zip(values, values[1:], h_arr, h_arr[1:]):
                with np.errstate(divide="ignore", invalid="ignore"):
                    out.append(float(np.log(r0 / r1) / np.log(h0 / h1)))
            return out

        grads = [r.err_grad for r in rows]
        rots = [r.err_rot for r in rows]
        stresses = [r.stress_mean for r in rows]
        idents = [r.ident_gap for r in rows]
        report.rates = {
            "err_grad": rate(grads),
            "err_rot": rate(rots),
            "stress_mean": rate(stresses),
            "ident_gap": rate(idents),
        }
        ratios = [r.err_rot / r.h for r in rows]
        report.verdicts = {
            "err_grad_strictly_decreasing": all(a > b for a, b in zip(grads, grads[1:])),
            "err_rot_ratio_bounded": max(ratios) <= thr["err_rot_ratio_factor"] * min(ratios),
            "stress_mean_trend": stresses[-1] * thr["stress_trend_factor"] <= stresses[0],
            "ident_gap_decreasing": all(a > b for a, b in zip(idents, idents[1:])),
        }
        report.reference_tip = rows[-1].tip_position
    else:
        report.verdicts = {"completed": False}
    return report
