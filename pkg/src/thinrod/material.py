"""Frame-indifferent elastic energy densities and their quadratic forms.

The stored energy implemented here is

    W(x, F) = 1/2 A(x) E(F) : E(F),   E(F) = sym(polar_rotation(F)^T F - I),

with A(x) the isotropic fourth-order tensor A E = 2 mu E + lam tr(E) I of
the region containing x.  This choice is exactly frame indifferent, has
Hessian A(x) at the identity, vanishes exactly on rotations, and satisfies
the two-sided bound  alpha dist^2(F, SO(3)) <= W <= beta dist^2(F, SO(3))
on the branch det F > 0, where (alpha, beta) are the extreme eigenvalues
of 1/2 A over symmetric matrices.

For det F <= 0 the density falls back to the finite penalty
beta * dist^2(F, SO(3)) with a finite-difference gradient; evaluations on
that branch are counted in an optional diagnostics record.  Converged
states never touch it.

All functions are pure; every operation may be called concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import polar_rotation, rotation_distance_squared, sym_part

_FD_STEP = 1e-7


@dataclass(frozen=True)
class IsotropicTensor:
    """Isotropic elasticity tensor defined by Lame moduli (pressure units).

    Acts on symmetric matrices as A E = 2 mu E + lam tr(E) I.  Positive
    definiteness on symmetric matrices requires mu > 0 and 3 lam + 2 mu > 0.
    """

    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"shear modulus must be positive, got mu = {self.mu}")
        if not 3.0 * self.lam + 2.0 * self.mu > 0.0:
            raise ValueError(
                f"3*lam + 2*mu must be positive, got lam = {self.lam}, mu = {self.mu}"
            )

    def apply(self, E):
        """A E for symmetric E (stacks allowed)."""
        E = np.asarray(E, dtype=float)
        tr = np.trace(E, axis1=-2, axis2=-1)
        return 2.0 * self.mu * E + self.lam * tr[..., None, None] * np.eye(3)

    def quadratic_form(self, G):
        """1/2 A sym G : sym G = mu |sym G|^2 + lam/2 tr(G)^2."""
        S = sym_part(np.asarray(G, dtype=float))
        tr = np.trace(S, axis1=-2, axis2=-1)
        return self.mu * np.sum(S * S, axis=(-2, -1)) + 0.5 * self.lam * tr * tr

    @property
    def eig_min(self) -> float:
        """Smallest eigenvalue of 1/2 A on symmetric matrices."""
        return min(self.mu, self.mu + 1.5 * self.lam)

    @property
    def eig_max(self) -> float:
        """Largest eigenvalue of 1/2 A on symmetric matrices."""
        return max(self.mu, self.mu + 1.5 * self.lam)

    @property
    def youngs_modulus(self) -> float:
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    @property
    def poisson_ratio(self) -> float:
        return 0.5 * self.lam / (self.lam + self.mu)


@dataclass(frozen=True)
class MaterialRegion:
    """A spatial predicate paired with an isotropic tensor.

    Supported shapes (coordinates live on the fixed domain (0, L) x omega):
      all        - matches everything
      halfspace  - normal . x >= offset          params: normal (3,), offset
      box        - lo <= x <= hi componentwise   params: lo (3,), hi (3,)
      cylinder   - distance to axis line <= radius
                   params: point (3,), direction (3,), radius
    """

    shape: str
    tensor: IsotropicTensor
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.shape not in ("all", "halfspace", "box", "cylinder"):
            raise ValueError(f"unknown region shape {self.shape!r}")

    def contains(self, points) -> np.ndarray:
        """Vectorized membership test for points of shape (..., 3)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self.shape == "all":
            return np.ones(x.shape[:-1], dtype=bool)
        if self.shape == "halfspace":
            n = np.asarray(self.params["normal"], dtype=float)
            return x @ n >= float(self.params["offset"])
        if self.shape == "box":
            lo = np.asarray(self.params["lo"], dtype=float)
            hi = np.asarray(self.params["hi"], dtype=float)
            return np.all((x >= lo) & (x <= hi), axis=-1)
        # cylinder
        p = np.asarray(self.params["point"], dtype=float)
        d = np.asarray(self.params["direction"], dtype=float)
        d = d / np.linalg.norm(d)
        rel = x - p
        perp = rel - (rel @ d)[..., None] * d
        return np.linalg.norm(perp, axis=-1) <= float(self.params["radius"])


@dataclass
class DensityDiagnostics:
    """Mutable counters surfaced by the det F <= 0 fallback branch."""

    penalty_evaluations: int = 0


class ElasticMaterialField:
    """Piecewise-isotropic material on the reference domain, first match wins.

    The final region must be a catch-all ('all' shape) so that evaluation is
    total; alpha and beta are the extreme eigenvalue bounds of 1/2 A over all
    regions, making the non-degeneracy constants explicit and testable.
    """

    def __init__(self, regions):
        regions = list(regions)
        if not regions:
            raise ValueError("material field needs at least one region")
        if regions[-1].shape != "all":
            raise ValueError("last material region must have shape 'all' to cover the domain")
        self.regions = regions
        self.alpha = min(r.tensor.eig_min for r in regions)
        self.beta = max(r.tensor.eig_max for r in regions)

    @classmethod
    def homogeneous(cls, lam: float, mu: float) -> "ElasticMaterialField":
        return cls([MaterialRegion("all", IsotropicTensor(lam, mu))])

    def tensor_at(self, x) -> IsotropicTensor:
        x = np.asarray(x, dtype=float)
        for region in self.regions:
            if bool(region.contains(x[None, :])[0]):
                return region.tensor
        raise RuntimeError("material regions do not cover the queried point")

    def lame_at(self, points):
        """Per-point (lam, mu) arrays for points of shape (n, 3), first match wins."""
        pts = np.asarray(points, dtype=float)
        lam = np.empty(pts.shape[0])
        mu = np.empty(pts.shape[0])
        unset = np.ones(pts.shape[0], dtype=bool)
        for region in self.regions:
            hit = unset & region.contains(pts)
            lam[hit] = region.tensor.lam
            mu[hit] = region.tensor.mu
            unset &= ~hit
            if not unset.any():
                break
        return lam, mu

    def is_uniform_in_x1(self) -> bool:
        """True when no region predicate depends on the axial coordinate."""
        for region in self.regions:
            if region.shape == "halfspace" and abs(region.params["normal"][0]) > 0.0:
                return False
            if region.shape == "box":
                lo0 = float(region.params["lo"][0])
                hi0 = float(region.params["hi"][0])
                if np.isfinite(lo0) or np.isfinite(hi0):
                    return False
            if region.shape == "cylinder":
                d = np.asarray(region.params["direction"], dtype=float)
                d = d / np.linalg.norm(d)
                if abs(abs(d[0]) - 1.0) > 1e-12:
                    return False
        return True


def _biot_strain(F):
    """E(F) = sym(polar(F)^T F - I) for a single matrix with det F > 0."""
    R = polar_rotation(F)
    return sym_part(R.T @ F) - np.eye(3), R


def density_value(mat: ElasticMaterialField, x, F, diag: DensityDiagnostics | None = None):
    """Stored energy W(x, F); finite penalty branch for det F <= 0."""
    F = np.asarray(F, dtype=float)
    tensor = mat.tensor_at(x)
    if np.linalg.det(F) > 0.0:
        E, _ = _biot_strain(F)
        return 0.5 * float(np.sum(tensor.apply(E) * E))
    if diag is not None:
        diag.penalty_evaluations += 1
    return tensor.eig_max * rotation_distance_squared(F)


def density_gradient(mat: ElasticMaterialField, x, F, diag: DensityDiagnostics | None = None):
    """Derivative DW(x, F) with respect to F.

    On the det F > 0 branch the closed form R A E is exact: the stress
    A E commutes with the polar stretch for isotropic A, so the rotation
    sensitivity drops out of the chain rule.  The penalty branch uses
    central finite differences.
    """
    F = np.asarray(F, dtype=float)
    tensor = mat.tensor_at(x)
    if np.linalg.det(F) > 0.0:
        E, R = _biot_strain(F)
        return R @ tensor.apply(E)
    if diag is not None:
        diag.penalty_evaluations += 1
    grad = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            bump = np.zeros((3, 3))
            bump[i, j] = _FD_STEP
            wp = tensor.eig_max * rotation_distance_squared(F + bump)
            wm = tensor.eig_max * rotation_distance_squared(F - bump)
            grad[i, j] = (wp - wm) / (2.0 * _FD_STEP)
    return grad


def quadratic_form_value(mat: ElasticMaterialField, x, G):
    """Q(x, G) = 1/2 A(x) sym G : sym G; depends on G only through sym G."""
    return float(mat.tensor_at(x).quadratic_form(G))


def taylor_residual(mat: ElasticMaterialField, x, G, h_scale: float):
    """Normalized defect of the quadratic expansion at the identity.

    Returns |W(x, I + h G) - h^2 Q(x, G)| / (h^2 |G|^2); zero for G = 0 by
    convention.  Decays linearly in h |G| for this density.
    """
    if not h_scale > 0.0:
        raise ValueError(f"h_scale must be positive, got {h_scale}")
    G = np.asarray(G, dtype=float)
    norm_g2 = float(np.sum(G * G))
    if norm_g2 == 0.0:
        return 0.0
    w = density_value(mat, x, np.eye(3) + h_scale * G)
    q = quadratic_form_value(mat, x, G)
    return abs(w - h_scale**2 * q) / (h_scale**2 * norm_g2)


# ---------------------------------------------------------------------------
# Vectorized kernels used by the 3D assembly
# ---------------------------------------------------------------------------

def energy_and_stress_many(lam, mu, F, diag: DensityDiagnostics | None = None):
    """Batched (W, DW) for per-point Lame moduli and deformation gradients.

    lam, mu have shape (n,), F has shape (n, 3, 3).  Slices with
    det F <= 0 are routed through the penalty branch one by one (they are
    not expected at converged states).  Returns (W (n,), DW (n, 3, 3),
    det (n,)).
    """
    from .algebra import polar_rotation_many

    F = np.asarray(F, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = F.shape[0]
    det = np.linalg.det(F)
    good = det > 0.0
    W = np.zeros(n)
    DW = np.zeros((n, 3, 3))
    if good.any():
        Fg = F[good]
        R = polar_rotation_many(Fg)
        E = sym_part(np.swapaxes(R, -1, -2) @ Fg) - np.eye(3)
        trE = np.trace(E, axis1=-2, axis2=-1)
        lam_g = lam[good]
        mu_g = mu[good]
        S = 2.0 * mu_g[:, None, None] * E + lam_g[:, None, None] * trE[:, None, None] * np.eye(3)
        W[good] = 0.5 * np.sum(S * E, axis=(-2, -1))
        DW[good] = R @ S
    if (~good).any():
        bad_idx = np.nonzero(~good)[0]
        if diag is not None:
            diag.penalty_evaluations += len(bad_idx)
        for i in bad_idx:
            beta_i = max(mu[i], mu[i] + 1.5 * lam[i])
            W[i] = beta_i * rotation_distance_squared(F[i])
            grad = np.zeros((3, 3))
            for a in range(3):
                for b in range(3):
                    bump = np.zeros((3, 3))
                    bump[a, b] = _FD_STEP
                    wp = beta_i * rotation_distance_squared(F[i] + bump)
                    wm = beta_i * rotation_distance_squared(F[i] - bump)
                    grad[a, b] = (wp - wm) / (2.0 * _FD_STEP)
            DW[i] = grad
    return W, DW, det
