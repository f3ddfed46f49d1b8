"""The 3D thin-rod problem on the fixed domain (0, L) x omega.

A prism mesh is the tensor product of a uniform axial partition with a
cross-section triangulation, each prism split into three tetrahedra by a
globally consistent min-vertex rule (shared quad faces get the same
diagonal from both sides, so the mesh is conforming).  The same fixed-
domain mesh serves every thickness h; only the functional changes through
the scaled gradient (d1, d2/h, d3/h) and the Dirichlet lift
y(0, x') = (0, h x2, h x3).

Energy and first variation use one-point (centroid) quadrature per
tetrahedron; minimization runs the shared quasi-Newton engine on the free
nodal values, keeping the clamped layer exact at every iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import polar_rotation_many
from .material import DensityDiagnostics, ElasticMaterialField, energy_and_stress_many
from .optim import MinimizeResult
from .rod1d import LoadSpec
from .xsection import CrossSectionMesh


class PrismMesh:
    """Tetrahedral mesh of (0, L) x omega from axial extrusion.

    Node (layer, section-vertex v) has index layer * nv + v; the x1 = 0
    layer (indices < nv) carries the Dirichlet data.
    """

    def __init__(self, section: CrossSectionMesh, length: float, axial_elements: int):
        if not length > 0.0:
            raise ValueError("rod length must be positive")
        if axial_elements < 1:
            raise ValueError("need at least one axial element")
        self.section = section
        self.length = float(length)
        self.axial_elements = int(axial_elements)
        nv = len(section.vertices)
        n1 = self.axial_elements
        x1 = np.linspace(0.0, self.length, n1 + 1)
        self.nodes = np.empty(((n1 + 1) * nv, 3))
        for layer in range(n1 + 1):
            sl = slice(layer * nv, (layer + 1) * nv)
            self.nodes[sl, 0] = x1[layer]
            self.nodes[sl, 1:] = section.vertices
        tets = []
        layer_of = []
        for layer in range(n1):
            base = layer * nv
            top = (layer + 1) * nv
            for tri in section.triangles:
                p, q, r = sorted(int(v) for v in tri)
                tets.append((base + p, base + q, base + r, top + r))
                tets.append((base + p, base + q, top + q, top + r))
                tets.append((base + p, top + p, top + q, top + r))
                layer_of.extend((layer, layer, layer))
        self.tets = np.array(tets, dtype=np.int64)
        self.tet_layer = np.array(layer_of, dtype=np.int64)
        self._orient_and_precompute()
        self.dirichlet_nodes = np.arange(nv)

    def _orient_and_precompute(self):
        corners = self.nodes[self.tets]  # (nt, 4, 3)
        d = corners[:, 1:] - corners[:, :1]
        vol6 = np.linalg.det(d)
        flip = vol6 < 0.0
        if flip.any():
            t = self.tets.copy()
            t[flip, 2], t[flip, 3] = self.tets[flip, 3], self.tets[flip, 2]
            self.tets = t
            corners = self.nodes[self.tets]
            d = corners[:, 1:] - corners[:, :1]
            vol6 = np.linalg.det(d)
        if np.any(vol6 <= 0.0):
            raise ValueError("degenerate tetrahedron in prism mesh")
        self.volumes = vol6 / 6.0
        self.centroids = corners.mean(axis=1)
        # P1 shape gradients: rows of the inverse edge matrix
        inv = np.linalg.inv(d)  # (nt, 3, 3); columns pair with vertices 1..3
        grads = np.empty((len(self.tets), 4, 3))
        grads[:, 1:, :] = np.swapaxes(inv, -1, -2)
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        self.shape_gradients = grads

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def layer_x1(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.axial_elements + 1)


@dataclass
class DeformationField:
    """Nodal deformation on a prism mesh at thickness h.

    The Dirichlet layer must match (0, h x2, h x3) exactly; violating
    inputs are rejected rather than projected.
    """

    mesh: PrismMesh
    values: np.ndarray
    h: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.node_count, 3):
            raise ValueError("deformation values must have shape (node_count, 3)")
        if not self.h > 0.0:
            raise ValueError("thickness h must be positive")
        err = self.dirichlet_error()
        if err > 1e-12:
            raise ValueError(f"Dirichlet layer violated by {err:.3e}")

    def dirichlet_error(self) -> float:
        nv = len(self.mesh.section.vertices)
        want = np.zeros((nv, 3))
        want[:, 1:] = self.h * self.mesh.section.vertices
        return float(np.abs(self.values[:nv] - want).max())


def rest_state(mesh: PrismMesh, h: float) -> DeformationField:
    """The trivial deformation y = (x1, h x2, h x3)."""
    values = mesh.nodes.copy()
    values[:, 1:] *= h
    return DeformationField(mesh, values, h)


def scaled_gradients(deformation: DeformationField) -> np.ndarray:
    """Scaled gradient (d1 y, d2 y / h, d3 y / h) per tetrahedron, (nt, 3, 3)."""
    mesh = deformation.mesh
    y = deformation.values[mesh.tets]  # (nt, 4, 3)
    F = np.einsum("tai,taj->tij", y, mesh.shape_gradients)
    F[:, :, 1:] /= deformation.h
    return F


def scaled_gradient(deformation: DeformationField, element: int) -> np.ndarray:
    """Scaled gradient on one tetrahedron (single quadrature point)."""
    mesh = deformation.mesh
    y = deformation.values[mesh.tets[element]]
    F = np.einsum("ai,aj->ij", y, mesh.shape_gradients[element])
    F[:, 1:] /= deformation.h
    return F


def _lame_at_centroids(mat: ElasticMaterialField, mesh: PrismMesh):
    return mat.lame_at(mesh.centroids)


def _load_at_centroids(load: LoadSpec, mesh: PrismMesh) -> np.ndarray:
    g = np.zeros((len(mesh.tets), 3))
    x1 = mesh.centroids[:, 0]
    for a, b, vec in load.pieces:
        inside = (x1 >= a) & (x1 < b)
        g[inside] = vec
    if load.pieces:
        a, b, vec = load.pieces[-1]
        g[x1 == b] = vec
    return g


def energy_3d(deformation: DeformationField, mat: ElasticMaterialField,
              load: LoadSpec, diag: DensityDiagnostics | None = None) -> float:
    """Scaled elastic energy plus load potential, one-point quadrature."""
    value, _ = _energy_and_gradient(deformation, mat, load, need_grad=False, diag=diag)
    return value


def _energy_and_gradient(deformation: DeformationField, mat: ElasticMaterialField,
                         load: LoadSpec, need_grad: bool = True,
                         precomputed=None, diag: DensityDiagnostics | None = None):
    mesh = deformation.mesh
    h = deformation.h
    if precomputed is None:
        lam, mu = _lame_at_centroids(mat, mesh)
        g_c = _load_at_centroids(load, mesh)
    else:
        lam, mu, g_c = precomputed
    F = scaled_gradients(deformation)
    W, DW, _ = energy_and_stress_many(lam, mu, F, diag=diag)
    vol = mesh.volumes
    y_mean = deformation.values[mesh.tets].mean(axis=1)
    value = float(vol @ W) / h**2 - float(np.sum(vol[:, None] * g_c * y_mean))
    if not need_grad:
        return value, None
    P = DW.copy()
    P[:, :, 1:] /= h
    contrib = np.einsum("t,tij,taj->tai", vol / h**2, P, mesh.shape_gradients)
    contrib -= (vol[:, None] * g_c / 4.0)[:, None, :]
    grad = np.zeros_like(deformation.values)
    np.add.at(grad, mesh.tets.reshape(-1), contrib.reshape(-1, 3))
    return value, grad


def first_variation_3d(deformation: DeformationField, mat: ElasticMaterialField,
                       load: LoadSpec, test: np.ndarray) -> float:
    """Directional derivative of the energy at `deformation` along `test`.

    `test` is a nodal field of the deformation's shape vanishing on the
    Dirichlet layer (discrete version of the admissible variations).
    Assembled as  h^-2 int DW : grad_h psi - int g . psi  with the same
    quadrature as the energy, so it matches directional finite differences
    of energy_3d.
    """
    mesh = deformation.mesh
    test = np.asarray(test, dtype=float)
    if test.shape != deformation.values.shape:
        raise ValueError("test field shape mismatch")
    nv = len(mesh.section.vertices)
    if np.abs(test[:nv]).max() > 0.0:
        raise ValueError("test field must vanish on the clamped layer")
    _, grad = _energy_and_gradient(deformation, mat, load)
    return float(np.sum(grad * test))


def field_norm_h(deformation_like: np.ndarray, mesh: PrismMesh, h: float) -> float:
    """W^{1,2}-type norm with the scaled gradient: (|psi|^2 + |grad_h psi|^2)^1/2."""
    psi = DeformationFieldView(mesh, np.asarray(deformation_like, dtype=float), h)
    F = scaled_gradients(psi)
    mean_sq = (psi.values[mesh.tets] ** 2).mean(axis=1).sum(axis=1)
    val = float(mesh.volumes @ (mean_sq + np.sum(F * F, axis=(1, 2))))
    return np.sqrt(val)


class DeformationFieldView:
    """Duck-typed carrier for fields that need not satisfy the Dirichlet data."""

    def __init__(self, mesh, values, h):
        self.mesh = mesh
        self.values = values
        self.h = h


class Rod3DSolveError(RuntimeError):
    """Minimization failure; carries the best deformation and diagnostics."""

    def __init__(self, message, deformation: DeformationField, min_det: float,
                 result: MinimizeResult):
        super().__init__(message + f" (min det grad_h y = {min_det:.3e})")
        self.best_deformation = deformation
        self.min_det = min_det
        self.result = result


def _scaled_shape_gradients(mesh: PrismMesh, h: float) -> np.ndarray:
    g = mesh.shape_gradients.copy()
    g[:, :, 1:] /= h
    return g


def _free_dofs(mesh: PrismMesh) -> np.ndarray:
    nv = len(mesh.section.vertices)
    free_nodes = np.arange(nv, mesh.node_count)
    return (3 * free_nodes[:, None] + np.arange(3)).reshape(-1)


def corotational_tangent(mesh: PrismMesh, h: float, lam, mu,
                         rotations: np.ndarray) -> sp.csr_matrix:
    """Frozen-rotation tangent stiffness of the scaled energy, full dof set.

    Per tetrahedron with rotation R the quadratic form is
      (vol / h^2) A sym(R^T grad_h v) : sym(R^T grad_h w),
    which is the exact Hessian when the stress vanishes and a symmetric
    positive semidefinite approximation elsewhere (the classical
    corotational tangent).  Entries close over w = R g_hat:

      K[(a,i),(b,j)] = (vol/h^2) [ mu delta_ij (g_a . g_b)
                                   + mu w_bi w_aj + lam w_ai w_bj ].
    """
    ghat = _scaled_shape_gradients(mesh, h)  # (nt, 4, 3)
    w = np.einsum("tik,tak->tai", rotations, ghat)  # (nt, 4, 3)
    gdot = np.einsum("tak,tbk->tab", ghat, ghat)
    vol = mesh.volumes / h**2
    mu_v = np.asarray(mu) * vol
    lam_v = np.asarray(lam) * vol
    K_el = (
        np.einsum("t,tab,ij->taibj", mu_v, gdot, np.eye(3))
        + np.einsum("t,tbi,taj->taibj", mu_v, w, w)
        + np.einsum("t,tai,tbj->taibj", lam_v, w, w)
    ).reshape(-1, 12, 12)
    dofs = (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(-1, 12)
    ii = np.repeat(dofs[:, :, None], 12, axis=2)
    jj = np.repeat(dofs[:, None, :], 12, axis=1)
    n = 3 * mesh.node_count
    return sp.coo_matrix(
        (K_el.reshape(-1), (ii.reshape(-1), jj.reshape(-1))), shape=(n, n)
    ).tocsr()


def minimize_3d(init: DeformationField, mat: ElasticMaterialField, load: LoadSpec,
                tol: float, max_iter: int = 100):
    """Minimize the scaled 3D energy over the free nodal values.

    Line-search descent with directions from the factorized corotational
    tangent (rotations refreshed each iteration); energy is non-increasing
    across accepted steps and the Dirichlet layer is held exactly.
    Convergence means the free-node gradient satisfies
    ||g|| <= tol (1 + ||g at init||).  Deterministic.  Returns
    (DeformationField, MinimizeResult).
    """
    mesh = init.mesh
    h = init.h
    nv = len(mesh.section.vertices)
    free = np.ones(mesh.node_count, dtype=bool)
    free[:nv] = False
    free_d = _free_dofs(mesh)
    template = init.values.copy()
    lam, mu = _lame_at_centroids(mat, mesh)
    g_c = _load_at_centroids(load, mesh)
    pre = (lam, mu, g_c)

    def unpack(x):
        values = template.copy()
        values[free] = x.reshape(-1, 3)
        return values

    def fun_grad(x):
        field = DeformationFieldView(mesh, unpack(x), h)
        value, grad = _energy_and_gradient(field, mat, load, precomputed=pre)
        return value, grad[free].reshape(-1)

    x = init.values[free].reshape(-1).copy()
    f, g = fun_grad(x)
    g0_norm = float(np.linalg.norm(g))
    target = tol * (1.0 + g0_norm)
    trace = [f]
    iterations = 0

    def fail(message):
        best = DeformationField(mesh, unpack(x), h)
        dets = np.linalg.det(scaled_gradients(best))
        result = MinimizeResult(x, f, float(np.linalg.norm(g)), g0_norm,
                                iterations, False, trace)
        return Rod3DSolveError(message, best, float(dets.min()), result)

    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= target:
            result = MinimizeResult(x, f, gnorm, g0_norm, iterations, True, trace)
            return DeformationField(mesh, unpack(x), h), result
        if iterations >= max_iter:
            raise fail(f"iteration cap {max_iter} reached with ||g|| = {gnorm:.3e}")
        F = scaled_gradients(DeformationFieldView(mesh, unpack(x), h))
        dets = np.linalg.det(F)
        if np.any(dets <= 0.0):
            # tangent undefined through the polar factor; steepest descent
            d = -g
        else:
            R = polar_rotation_many(F)
            K = corotational_tangent(mesh, h, lam, mu, R)
            K_ff = K[free_d][:, free_d].tocsc()
            d = spla.splu(K_ff).solve(-g)
        slope = float(g @ d)
        if not slope < 0.0:
            d = -g
            slope = -gnorm * gnorm
        step = 1.0
        accepted = False
        for _ in range(60):
            x_try = x + step * d
            f_try, g_try = fun_grad(x_try)
            if f_try <= f + 1e-4 * step * slope:
                x, f, g = x_try, f_try, g_try
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise fail(f"line search failed at iteration {iterations}")
        trace.append(f)
        iterations += 1


def min_scaled_det(deformation: DeformationField) -> float:
    return float(np.linalg.det(scaled_gradients(deformation)).min())
