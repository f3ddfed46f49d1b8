"""Cross-section meshes and the warping relaxation behind the 1D stiffness.

A cross-section omega is a conforming triangulation, centered and scaled to
unit area so its first moments and product moment vanish.  The effective
one-dimensional energy density at a station x1 is obtained by minimizing

    F(w) = integral over omega of Q(x1, x', iota(B p(x') + b e1) + D(w))

over P1 warping fields w: omega -> R^3, where D(w) is the matrix with
columns (0, d w/d x2, d w/d x3) and Q is the material's quadratic form.
The minimum is a quadratic function of (axl B, b); its 4x4 Gram matrix, the
3x3 bending-torsion block after eliminating the axial stretch, and the
linear stretch-elimination map are packaged as EffectiveStiffness.

The minimization has a four-dimensional kernel (three constant shifts and
the in-plane infinitesimal rotation); it is removed exactly by Lagrange
multipliers on the four gauge functionals

    integral w = 0 (componentwise),   integral (x2 w3 - x3 w2) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import axial_vector
from .material import ElasticMaterialField

_GAUGE_COUNT = 4
_SOLVE_TOL = 1e-10


class MeshError(ValueError):
    """Raised for malformed cross-section meshes or import files."""


class CorrectorSolveError(RuntimeError):
    """Raised when the warping solve fails its residual test.

    Attributes:
        residual_history: relative residuals after each refinement pass.
    """

    def __init__(self, message, residual_history):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class SectionMoments:
    """Area integrals of 1, x2, x3, x2*x3, x2^2 and x3^2 over omega."""

    area: float
    first_x2: float
    first_x3: float
    product: float
    i2: float
    i3: float


class CrossSectionMesh:
    """Conforming triangulation of a plane cross-section.

    vertices: (nv, 2) float array, triangles: (nt, 3) int array with
    positive orientation (negative triangles are flipped on construction).
    """

    def __init__(self, vertices, triangles, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (nt, 3)")
        if self.triangles.size == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle indices out of range")
        self._orient_positive()
        if validate:
            self._validate()
        self.moments = self._compute_moments()

    # -- geometry ----------------------------------------------------------

    def _corners(self):
        return self.vertices[self.triangles]  # (nt, 3, 2)

    def _signed_areas(self):
        p = self._corners()
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def _orient_positive(self):
        s = self._signed_areas()
        scale = np.sqrt(np.abs(s).sum())
        if np.any(np.abs(s) <= 1e-14 * max(scale, 1e-30) ** 2):
            raise MeshError("mesh contains a degenerate (zero-area) triangle")
        flip = s < 0.0
        if flip.any():
            t = self.triangles.copy()
            t[flip, 1], t[flip, 2] = self.triangles[flip, 2], self.triangles[flip, 1]
            self.triangles = t

    @property
    def triangle_areas(self):
        return self._signed_areas()

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    def quadrature(self):
        """Edge-midpoint rule, exact for quadratics.

        Returns (points (nq, 2), weights (nq,)) with nq = 3 * nt, ordered
        by triangle then by edge (01, 12, 20).
        """
        p = self._corners()
        mids = np.stack(
            (0.5 * (p[:, 0] + p[:, 1]), 0.5 * (p[:, 1] + p[:, 2]), 0.5 * (p[:, 2] + p[:, 0])),
            axis=1,
        )
        w = np.repeat(self.triangle_areas / 3.0, 3)
        return mids.reshape(-1, 2), w

    def shape_gradients(self):
        """P1 shape-function gradients, shape (nt, 3, 2)."""
        p = self._corners()
        g = np.empty((len(self.triangles), 3, 2))
        twice_area = 2.0 * self.triangle_areas
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            edge = p[:, c] - p[:, b]
            g[:, a, 0] = -edge[:, 1] / twice_area
            g[:, a, 1] = edge[:, 0] / twice_area
        return g

    def vertex_integrals(self):
        """(I0, I2, I3) with I0[a] = int phi_a, I2[a] = int x2 phi_a, I3[a] = int x3 phi_a."""
        nv = len(self.vertices)
        pts, w = self.quadrature()
        # phi values at the three edge midpoints for vertices (0, 1, 2)
        phi = np.array([[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        i0 = np.zeros(nv)
        i2 = np.zeros(nv)
        i3 = np.zeros(nv)
        x2 = pts[:, 0].reshape(-1, 3)
        x3 = pts[:, 1].reshape(-1, 3)
        wq = w.reshape(-1, 3)
        for a in range(3):
            np.add.at(i0, self.triangles[:, a], (wq * phi[a]).sum(axis=1))
            np.add.at(i2, self.triangles[:, a], (wq * phi[a] * x2).sum(axis=1))
            np.add.at(i3, self.triangles[:, a], (wq * phi[a] * x3).sum(axis=1))
        return i0, i2, i3

    def _compute_moments(self) -> SectionMoments:
        pts, w = self.quadrature()
        x2, x3 = pts[:, 0], pts[:, 1]
        return SectionMoments(
            area=float(w.sum()),
            first_x2=float(w @ x2),
            first_x3=float(w @ x3),
            product=float(w @ (x2 * x3)),
            i2=float(w @ (x2 * x2)),
            i3=float(w @ (x3 * x3)),
        )

    # -- validation --------------------------------------------------------

    def _edge_counts(self):
        edges = {}
        for tri in self.triangles:
            for a in range(3):
                e = (int(tri[a]), int(tri[(a + 1) % 3]))
                key = (min(e), max(e))
                edges[key] = edges.get(key, 0) + 1
        return edges

    def _validate(self):
        nv = len(self.vertices)
        used = np.zeros(nv, dtype=bool)
        used[self.triangles.reshape(-1)] = True
        if not used.all():
            raise MeshError(f"mesh has {int((~used).sum())} unused vertices")
        scale = float(np.abs(self.vertices).max()) or 1.0
        # duplicate vertices break conformity silently
        rounded = np.round(self.vertices / (1e-12 * scale)).astype(np.int64)
        if len(np.unique(rounded, axis=0)) != nv:
            raise MeshError("mesh has duplicate vertices")
        edges = self._edge_counts()
        over = [e for e, c in edges.items() if c > 2]
        if over:
            raise MeshError(f"non-manifold edges (shared by >2 triangles): {over[:3]}")
        boundary = [e for e, c in edges.items() if c == 1]
        # hanging node: a vertex strictly inside a boundary edge
        tol = 1e-10 * scale
        for i, j in boundary:
            p, q = self.vertices[i], self.vertices[j]
            d = q - p
            L2 = float(d @ d)
            rel = self.vertices - p
            t = (rel @ d) / L2
            perp = rel - np.outer(t, d)
            on_line = (np.linalg.norm(perp, axis=1) < tol) & (t > 1e-9) & (t < 1.0 - 1e-9)
            on_line[[i, j]] = False
            if on_line.any():
                k = int(np.nonzero(on_line)[0][0])
                raise MeshError(f"hanging node: vertex {k} lies inside boundary edge ({i}, {j})")
        # edge-connectivity of the triangle adjacency graph
        nt = len(self.triangles)
        owner = {}
        adj = [[] for _ in range(nt)]
        for ti, tri in enumerate(self.triangles):
            for a in range(3):
                e = (int(tri[a]), int(tri[(a + 1) % 3]))
                key = (min(e), max(e))
                if key in owner:
                    adj[owner[key]].append(ti)
                    adj[ti].append(owner[key])
                else:
                    owner[key] = ti
        seen = np.zeros(nt, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            t = stack.pop()
            for u in adj[t]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        if not seen.all():
            raise MeshError("mesh is not connected")


# ---------------------------------------------------------------------------
# Mesh generation
# ---------------------------------------------------------------------------

def disk_mesh(radius: float, target_edge: float) -> CrossSectionMesh:
    """Structured polar triangulation of a disk (6-fold symmetric).

    Ring j carries 6*j vertices; the edge length is radius / nr with
    nr chosen so the requested target is honored within a factor 2.
    """
    if radius <= 0.0:
        raise MeshError(f"disk radius must be positive, got {radius}")
    if target_edge <= 0.0:
        raise MeshError(f"target_edge must be positive, got {target_edge}")
    nr = max(1, int(round(radius / target_edge)))
    verts = [(0.0, 0.0)]
    offsets = [0]
    for j in range(1, nr + 1):
        offsets.append(len(verts))
        n = 6 * j
        ang = 2.0 * np.pi * np.arange(n) / n
        r = radius * j / nr
        verts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
    tris = []
    for j in range(1, nr + 1):
        n_out = 6 * j
        n_in = 6 * (j - 1)
        out0, in0 = offsets[j], offsets[j - 1]
        for s in range(6):
            out = [out0 + (s * j + t) % n_out for t in range(j + 1)]
            if j == 1:
                tris.append((out[0], out[1], in0))
                continue
            inn = [in0 + (s * (j - 1) + t) % n_in for t in range(j)]
            for t in range(j):
                tris.append((out[t], out[t + 1], inn[t]))
            for t in range(j - 1):
                tris.append((inn[t], out[t + 1], inn[t + 1]))
    return CrossSectionMesh(np.array(verts), np.array(tris, dtype=np.int64))


def rectangle_mesh(width: float, height: float, target_edge: float) -> CrossSectionMesh:
    """Union-jack triangulated rectangle centered at the origin.

    Cell counts are forced even so the mesh is symmetric under both axis
    reflections (keeps spurious stiffness couplings at roundoff level).
    """
    if width <= 0.0 or height <= 0.0:
        raise MeshError(f"rectangle sides must be positive, got {width} x {height}")
    if target_edge <= 0.0:
        raise MeshError(f"target_edge must be positive, got {target_edge}")
    nx = 2 * max(1, int(round(width / target_edge / 2.0)))
    ny = 2 * max(1, int(round(height / target_edge / 2.0)))
    xs = np.linspace(-0.5 * width, 0.5 * width, nx + 1)
    ys = np.linspace(-0.5 * height, 0.5 * height, ny + 1)
    verts = np.array([(x, y) for y in ys for x in xs])
    idx = lambda i, j: j * (nx + 1) + i  # noqa: E731
    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = idx(i, j), idx(i + 1, j)
            v01, v11 = idx(i, j + 1), idx(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))
    return CrossSectionMesh(verts, np.array(tris, dtype=np.int64))


def parse_mesh_text(text: str) -> CrossSectionMesh:
    """Parse the ASCII interchange format.

    Line 1: "nv nt"; then nv lines "x2 x3"; then nt lines "i j k" with
    0-based vertex indices.  Raises MeshError naming the offending line.
    """
    lines = text.splitlines()
    significant = [(k + 1, ln.strip()) for k, ln in enumerate(lines) if ln.strip()]
    if not significant:
        raise MeshError("line 1: empty mesh file")
    lineno, header = significant[0]
    parts = header.split()
    if len(parts) != 2:
        raise MeshError(f"line {lineno}: expected 'nv nt', got {header!r}")
    try:
        nv, nt = int(parts[0]), int(parts[1])
    except ValueError:
        raise MeshError(f"line {lineno}: expected two integers, got {header!r}") from None
    if len(significant) != 1 + nv + nt:
        raise MeshError(
            f"line {lineno}: header promises {nv} vertices and {nt} triangles, "
            f"found {len(significant) - 1} data lines"
        )
    verts = np.empty((nv, 2))
    for k in range(nv):
        lineno, ln = significant[1 + k]
        parts = ln.split()
        if len(parts) != 2:
            raise MeshError(f"line {lineno}: expected 'x2 x3', got {ln!r}")
        try:
            verts[k] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshError(f"line {lineno}: expected two floats, got {ln!r}") from None
    tris = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        lineno, ln = significant[1 + nv + k]
        parts = ln.split()
        if len(parts) != 3:
            raise MeshError(f"line {lineno}: expected 'i j k', got {ln!r}")
        try:
            tris[k] = [int(parts[0]), int(parts[1]), int(parts[2])]
        except ValueError:
            raise MeshError(f"line {lineno}: expected three integers, got {ln!r}") from None
        if tris[k].min() < 0 or tris[k].max() >= nv:
            raise MeshError(f"line {lineno}: vertex index out of range in {ln!r}")
    return CrossSectionMesh(verts, tris)


def generate_mesh(kind: str, target_edge: float, *, radius: float = 1.0,
                  width: float = 1.0, height: float = 1.0,
                  text: str | None = None) -> CrossSectionMesh:
    """Build a cross-section mesh from a shape keyword.

    kind is one of 'disk', 'rectangle', 'imported'.  Imported meshes pass
    the file content through `text`.
    """
    if kind == "disk":
        return disk_mesh(radius, target_edge)
    if kind == "rectangle":
        return rectangle_mesh(width, height, target_edge)
    if kind == "imported":
        if text is None:
            raise MeshError("imported mesh requires the file content")
        return parse_mesh_text(text)
    raise MeshError(f"unknown section kind {kind!r}")


def center_and_normalize(mesh: CrossSectionMesh) -> CrossSectionMesh:
    """Translate, rotate and scale so the section satisfies the centering
    conditions: unit area, zero first moments, zero product moment.

    The rotation aligns the principal axes of the second-moment matrix
    (largest moment along x2); it is skipped when the product moment
    already vanishes, which makes the operation idempotent.
    """
    m = mesh.moments
    if m.area <= 0.0:
        raise MeshError("mesh area must be positive")
    verts = mesh.vertices - np.array([m.first_x2, m.first_x3]) / m.area
    centered = CrossSectionMesh(verts, mesh.triangles, validate=False)
    mc = centered.moments
    scale2 = mc.i2 + mc.i3
    if abs(mc.product) > 1e-13 * scale2:
        M = np.array([[mc.i2, mc.product], [mc.product, mc.i3]])
        _, vectors = np.linalg.eigh(M)
        axes = vectors[:, ::-1]  # descending: largest moment along new x2
        for col in range(2):
            k = int(np.argmax(np.abs(axes[:, col])))
            if axes[k, col] < 0.0:
                axes[:, col] = -axes[:, col]
        if np.linalg.det(axes) < 0.0:
            axes[:, 1] = -axes[:, 1]
        verts = verts @ axes
    verts = verts / np.sqrt(m.area)
    out = CrossSectionMesh(verts, mesh.triangles, validate=False)
    mo = out.moments
    checks = (abs(mo.area - 1.0), abs(mo.first_x2), abs(mo.first_x3), abs(mo.product))
    if max(checks) > 1e-10:
        raise MeshError(f"normalization failed to reach centered form: {checks}")
    return out


# ---------------------------------------------------------------------------
# The warping (corrector) problem
# ---------------------------------------------------------------------------

@dataclass
class WarpingField:
    """Nodal corrector displacement (nv, 3), gauge-fixed.

    Gauge: zero mean componentwise and zero twist moment
    integral (x2 w3 - x3 w2) = 0, both up to solver tolerance.
    """

    values: np.ndarray

    def gauge_residuals(self, mesh: CrossSectionMesh) -> np.ndarray:
        i0, i2, i3 = mesh.vertex_integrals()
        means = i0 @ self.values
        twist = i2 @ self.values[:, 2] - i3 @ self.values[:, 1]
        return np.array([means[0], means[1], means[2], twist])


class EffectiveStiffnessError(RuntimeError):
    """Internal-consistency failure while assembling the stiffness form."""


@dataclass(frozen=True)
class EffectiveStiffness:
    """Quadratic form of the relaxed section energy in (axl B, b) coordinates.

    gram:     4x4 SPD matrix, energy = 1/2 q^T gram q with q = (axl B, b).
    reduced:  3x3 SPD Schur complement after eliminating b.
    bmin_row: row vector with b_min(B) = bmin_row . axl(B).
    """

    gram: np.ndarray
    reduced: np.ndarray
    bmin_row: np.ndarray

    def __post_init__(self):
        for name, M in (("gram", self.gram), ("reduced", self.reduced)):
            if np.abs(M - M.T).max() > 1e-10 * (1.0 + np.abs(M).max()):
                raise EffectiveStiffnessError(f"{name} matrix is not symmetric")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise EffectiveStiffnessError(f"{name} matrix is not positive definite") from None

    def energy(self, a, b: float) -> float:
        q = np.concatenate([np.asarray(a, dtype=float), [float(b)]])
        return 0.5 * float(q @ self.gram @ q)

    def reduced_energy(self, a) -> float:
        a = np.asarray(a, dtype=float)
        return 0.5 * float(a @ self.reduced @ a)


def _datum_at(points, a, b):
    """m(x') = B p(x') + b e1 for B = cross_matrix(a), at 2D points (n, 2)."""
    x2, x3 = points[:, 0], points[:, 1]
    m = np.empty((len(points), 3))
    m[:, 0] = b + a[1] * x3 - a[2] * x2
    m[:, 1] = -a[0] * x3
    m[:, 2] = a[0] * x2
    return m


class SectionSystem:
    """Assembled and factorized warping operator at one axial station.

    Reused across the four basis data when building an EffectiveStiffness;
    the factorization is the dominant cost.
    """

    def __init__(self, mesh: CrossSectionMesh, lam_q: np.ndarray, mu_q: np.ndarray):
        self.mesh = mesh
        self.lam_q = np.asarray(lam_q, dtype=float)
        self.mu_q = np.asarray(mu_q, dtype=float)
        self.points, self.weights = mesh.quadrature()
        self.ndof = 3 * len(mesh.vertices)
        self._assemble()

    def _assemble(self):
        mesh = self.mesh
        nt = len(mesh.triangles)
        grads = mesh.shape_gradients()  # (nt, 3, 2)
        wq = self.weights.reshape(nt, 3)
        lam_el = (wq * self.lam_q.reshape(nt, 3)).sum(axis=1)
        mu_el = (wq * self.mu_q.reshape(nt, 3)).sum(axis=1)

        # S[(a, i)] = sym(e_i outer (0, g_a2, g_a3)); pairing
        # S_ai : S_bj = 1/4 [ delta_ij (g_a . g_b) + g_a[j-1] g_b[i-1] ]
        # in the convention g_a = (g_a2, g_a3) and components i, j in {0,1,2}
        # where index -1 means the entry is absent (i or j = 0 only pairs
        # through the delta term plus the diagonal duplication below).
        # Assembled explicitly for clarity:
        K_el = np.zeros((nt, 9, 9))
        ext = np.zeros((nt, 3, 3))  # ext[:, a, i] = extended gradient entry g_a[i], with g_a[0] = 0
        ext[:, :, 1] = grads[:, :, 0]
        ext[:, :, 2] = grads[:, :, 1]
        gdot = np.einsum("tak,tbk->tab", grads, grads)  # g_a . g_b
        for a in range(3):
            for i in range(3):
                for b in range(3):
                    for j in range(3):
                        # 2 mu S_ai : S_bj with S_ai : S_bj expanded below
                        s_pair = 0.5 * (
                            (i == j) * gdot[:, a, b] + ext[:, a, j] * ext[:, b, i]
                        )
                        val = 2.0 * mu_el * s_pair
                        # lam tr(S_ai) tr(S_bj), tr(S_ai) = ext[a, i] at row i
                        val = val + lam_el * ext[:, a, i] * ext[:, b, j]
                        K_el[:, 3 * a + i, 3 * b + j] = val

        rows = np.repeat(3 * mesh.triangles, 3, axis=1) + np.tile([0, 1, 2], 3)  # (nt, 9)
        ii = np.repeat(rows[:, :, None], 9, axis=2)
        jj = np.repeat(rows[:, None, :], 9, axis=1)
        K = sp.coo_matrix(
            (K_el.reshape(-1), (ii.reshape(-1), jj.reshape(-1))),
            shape=(self.ndof, self.ndof),
        ).tocsr()

        i0, i2, i3 = mesh.vertex_integrals()
        C = sp.lil_matrix((_GAUGE_COUNT, self.ndof))
        for comp in range(3):
            C[comp, comp::3] = i0
        C[3, 1::3] = -i3
        C[3, 2::3] = i2
        C = C.tocsr()

        self.K = K
        self.C = C
        saddle = sp.bmat([[K, C.T], [C, None]], format="csc")
        self._lu = spla.splu(saddle)
        self._grads = grads
        self._ext = ext

    # -- data-dependent pieces --------------------------------------------

    def _stress_of_datum(self, a, b):
        """A sym(iota(m)) at every quadrature point, shape (nq, 3, 3)."""
        m = _datum_at(self.points, np.asarray(a, dtype=float), float(b))
        nq = len(self.points)
        s = np.zeros((nq, 3, 3))
        s[:, 0, 0] = m[:, 0]
        s[:, 0, 1] = s[:, 1, 0] = 0.5 * m[:, 1]
        s[:, 0, 2] = s[:, 2, 0] = 0.5 * m[:, 2]
        tr = m[:, 0]
        s = 2.0 * self.mu_q[:, None, None] * s
        s[:, 0, 0] += self.lam_q * tr
        s[:, 1, 1] += self.lam_q * tr
        s[:, 2, 2] += self.lam_q * tr
        return s, m

    def load_vector(self, a, b):
        """f with f[(a_vert, i)] = int A sym(iota(m)) : sym(D(phi_a e_i))."""
        s, _ = self._stress_of_datum(a, b)
        nt = len(self.mesh.triangles)
        sq = (self.weights[:, None, None] * s).reshape(nt, 3, 3, 3).sum(axis=1)  # (nt, 3, 3)
        f = np.zeros(self.ndof)
        # s : S_ai = s[i, 1] g_a2 + s[i, 2] g_a3
        contrib = np.einsum("tij,taj->tai", sq[:, :, 1:], self._grads)  # (nt, vert, comp)
        dofs = (3 * self.mesh.triangles[:, :, None] + np.arange(3)[None, None, :]).reshape(-1)
        np.add.at(f, dofs, contrib.reshape(-1))
        return f

    def datum_pairing(self, a1, b1, a2, b2):
        """int A sym(iota(m1)) : sym(iota(m2)) over omega."""
        m1 = _datum_at(self.points, np.asarray(a1, dtype=float), float(b1))
        m2 = _datum_at(self.points, np.asarray(a2, dtype=float), float(b2))
        pair = m1[:, 0] * m2[:, 0] + 0.5 * (m1[:, 1] * m2[:, 1] + m1[:, 2] * m2[:, 2])
        return float(self.weights @ (2.0 * self.mu_q * pair + self.lam_q * m1[:, 0] * m2[:, 0]))

    def solve(self, a, b):
        """Minimize the relaxation functional for datum (a = axl B, b).

        Returns (WarpingField, energy, load vector).  The saddle solve is
        checked to relative residual 1e-10 with iterative refinement.
        """
        f = self.load_vector(a, b)
        rhs = np.concatenate([-f, np.zeros(_GAUGE_COUNT)])
        sol = self._lu.solve(rhs)
        history = []
        scale = max(float(np.linalg.norm(f)), 1e-300)
        for _ in range(4):
            res_top = self.K @ sol[: self.ndof] + self.C.T @ sol[self.ndof:] + f
            res_bot = self.C @ sol[: self.ndof]
            rel = float(np.sqrt(np.linalg.norm(res_top) ** 2 + np.linalg.norm(res_bot) ** 2)) / scale
            history.append(rel)
            if rel <= _SOLVE_TOL:
                break
            sol = sol - self._lu.solve(np.concatenate([res_top, res_bot]))
        else:
            raise CorrectorSolveError(
                f"warping solve stalled at relative residual {history[-1]:.3e}", history
            )
        w = sol[: self.ndof]
        c0 = self.datum_pairing(a, b, a, b)
        energy = 0.5 * c0 + 0.5 * float(f @ w)
        return WarpingField(w.reshape(-1, 3)), energy, f


def _lame_at_station(mat: ElasticMaterialField, x1: float, mesh: CrossSectionMesh):
    pts2d, _ = mesh.quadrature()
    pts3d = np.column_stack([np.full(len(pts2d), float(x1)), pts2d])
    return mat.lame_at(pts3d)


def section_system(mat: ElasticMaterialField, x1: float, mesh: CrossSectionMesh) -> SectionSystem:
    lam_q, mu_q = _lame_at_station(mat, x1, mesh)
    return SectionSystem(mesh, lam_q, mu_q)


def corrector_solve(mat: ElasticMaterialField, x1: float, B, b: float,
                    mesh: CrossSectionMesh):
    """Solve the warping problem for one datum (B skew, b scalar).

    Returns (WarpingField, energy); the energy is the discrete relaxed
    density at (x1, B, b).
    """
    a = axial_vector(np.asarray(B, dtype=float))
    system = section_system(mat, x1, mesh)
    w, energy, _ = system.solve(a, float(b))
    return w, energy


def effective_stiffness_from_system(system: SectionSystem) -> EffectiveStiffness:
    """Gram matrix from the four basis solves plus bilinear pairing.

    Off-diagonal entries come from gram_kl = c_kl + f_k . w_l; the
    symmetry defect |f_k . w_l - f_l . w_k| is an internal consistency
    check on the solves.
    """
    basis = [
        (np.array([1.0, 0.0, 0.0]), 0.0),
        (np.array([0.0, 1.0, 0.0]), 0.0),
        (np.array([0.0, 0.0, 1.0]), 0.0),
        (np.array([0.0, 0.0, 0.0]), 1.0),
    ]
    solutions = [system.solve(a, b) for a, b in basis]
    gram = np.empty((4, 4))
    for k in range(4):
        ak, bk = basis[k]
        _, _, fk = solutions[k]
        for l in range(k, 4):
            al, bl = basis[l]
            wl = solutions[l][0].values.reshape(-1)
            c_kl = system.datum_pairing(ak, bk, al, bl)
            gram[k, l] = gram[l, k] = c_kl + float(fk @ wl)
    # cross-pairing symmetry check
    scale = np.abs(gram).max()
    for k in range(4):
        for l in range(k + 1, 4):
            wk = solutions[k][0].values.reshape(-1)
            fl = solutions[l][2]
            alt = system.datum_pairing(*basis[k], *basis[l]) + float(fl @ wk)
            if abs(alt - gram[k, l]) > 1e-8 * max(scale, 1.0):
                raise EffectiveStiffnessError(
                    f"gram entry ({k}, {l}) fails the symmetry cross-check: "
                    f"{gram[k, l]:.12g} vs {alt:.12g}"
                )
    gbb = gram[3, 3]
    coupling = gram[:3, 3]
    reduced = gram[:3, :3] - np.outer(coupling, coupling) / gbb
    bmin_row = -coupling / gbb
    return EffectiveStiffness(gram=gram, reduced=reduced, bmin_row=bmin_row)


def effective_stiffness(mat: ElasticMaterialField, x1: float,
                        mesh: CrossSectionMesh) -> EffectiveStiffness:
    """Relaxed quadratic stiffness form of the section at station x1."""
    return effective_stiffness_from_system(section_system(mat, x1, mesh))


def bmin(eff: EffectiveStiffness, B) -> float:
    """Energy-minimizing axial stretch for bending-torsion datum B (skew).

    Verifies the first-order condition d/db Q0 = 0 at the returned value.
    """
    a = axial_vector(np.asarray(B, dtype=float))
    b = float(eff.bmin_row @ a)
    slope = float(eff.gram[3, :3] @ a + eff.gram[3, 3] * b)
    scale = max(1.0, float(np.abs(eff.gram).max() * np.linalg.norm(a)))
    if abs(slope) > 1e-10 * scale:
        raise EffectiveStiffnessError(f"stationarity of b_min violated: slope {slope:.3e}")
    return b


class StiffnessTable:
    """Per-station effective stiffness with caching by material signature.

    Stations with identical Lame fields on the section (byte-identical
    quadrature-point moduli) share one solve; for materials uniform in x1
    everything collapses to a single entry.
    """

    def __init__(self, mat: ElasticMaterialField, mesh: CrossSectionMesh):
        self.mat = mat
        self.mesh = mesh
        self._cache: dict[bytes, EffectiveStiffness] = {}

    def at(self, x1: float) -> EffectiveStiffness:
        lam_q, mu_q = _lame_at_station(self.mat, float(x1), self.mesh)
        key = lam_q.tobytes() + mu_q.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = effective_stiffness_from_system(SectionSystem(self.mesh, lam_q, mu_q))
            self._cache[key] = hit
        return hit

    def sample(self, x1_values) -> list[EffectiveStiffness]:
        return [self.at(x) for x in np.asarray(x1_values, dtype=float)]
