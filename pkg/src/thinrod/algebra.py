"""Small-matrix conventions shared by every solver in the package.

Fixes the 3x3 algebra used throughout: symmetric/skew splits, the axial
vector of a skew matrix, the rank-one embedding of a vector into the first
matrix column, closed-form SO(3) exponential/logarithm with their right and
left Jacobians, unit-quaternion helpers, and the polar (closest-rotation)
factor of a matrix with positive determinant.

Conventions:
  cross_matrix(a) @ x == cross(a, x)   and   axial_vector(cross_matrix(a)) == a
  e1_dyad(v) == outer(v, e1)           so    e1_dyad(v) : M == v . (M @ e1)
  transverse_part((x1, x2, x3)) == (0, x2, x3)
"""

from __future__ import annotations

import numpy as np

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

# Below this rotation angle the trig coefficient functions switch to their
# Taylor expansions (relative error < 1e-16 at the crossover).
_SMALL_ANGLE = 1e-4


def sym_part(M):
    """Symmetric part (M + M^T)/2; works on stacks of matrices."""
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def skew_part(M):
    """Skew part (M - M^T)/2; works on stacks of matrices."""
    return 0.5 * (M - np.swapaxes(M, -1, -2))


def cross_matrix(a):
    """Skew matrix of a 3-vector: cross_matrix(a) @ x == np.cross(a, x)."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (3, 3))
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    out[..., 0, 1] = -a3
    out[..., 0, 2] = a2
    out[..., 1, 0] = a3
    out[..., 1, 2] = -a1
    out[..., 2, 0] = -a2
    out[..., 2, 1] = a1
    return out


def axial_vector(W):
    """Axial vector of a skew matrix, inverse of cross_matrix.

    Defined entrywise as (-W_23, W_13, -W_12); for non-skew input the skew
    part is taken implicitly (entries are averaged with their transposes).
    """
    W = np.asarray(W, dtype=float)
    return np.stack(
        (
            0.5 * (W[..., 2, 1] - W[..., 1, 2]),
            0.5 * (W[..., 0, 2] - W[..., 2, 0]),
            0.5 * (W[..., 1, 0] - W[..., 0, 1]),
        ),
        axis=-1,
    )


def e1_dyad(v):
    """Embed a 3-vector as the first column of a 3x3 matrix: outer(v, e1)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., :, 0] = v
    return out


def transverse_part(x):
    """Project a point onto its cross-sectional coordinates: (0, x2, x3)."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[..., 0] = 0.0
    return out


def _trig_coeffs(theta):
    """Coefficients (sin t / t, (1-cos t)/t^2, (t - sin t)/t^3) with Taylor fallback."""
    theta = np.asarray(theta, dtype=float)
    small = theta < _SMALL_ANGLE
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)
    c0 = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    c1 = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    c2 = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - np.sin(safe)) / (safe**3))
    return c0, c1, c2


def rotation_exp(v):
    """Rotation matrix exp(cross_matrix(v)) by the Rodrigues formula.

    Accepts stacks of rotation vectors (shape (..., 3)).
    """
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    c0, c1, _ = _trig_coeffs(theta)
    K = cross_matrix(v)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + c0[..., None, None] * K + c1[..., None, None] * (K @ K)


def rotation_log(R):
    """Rotation vector of a single rotation matrix (angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    w = axial_vector(R)
    if theta < _SMALL_ANGLE:
        # R ~ I + hat(v): axial of skew part is v up to O(theta^3)
        return w * (1.0 + theta * theta / 6.0)
    if np.pi - theta < 1e-6:
        # Near-pi angles: recover the axis from the symmetric part.
        B = 0.5 * (R + R.T) - np.cos(theta) * np.eye(3)
        axis = np.sqrt(np.maximum(np.diag(B) / (1.0 - np.cos(theta)), 0.0))
        # Fix signs using the largest component.
        k = int(np.argmax(axis))
        signs = np.ones(3)
        for j in range(3):
            if j != k and B[k, j] < 0.0:
                signs[j] = -1.0
        axis = axis * signs
        if w[k] < 0.0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return w * theta / np.sin(theta)


def right_jacobian(v):
    """Right Jacobian of the SO(3) exponential.

    d/dt exp(hat(v + t*d))|_0 = exp(hat(v)) @ hat(right_jacobian(v) @ d).
    """
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    _, c1, c2 = _trig_coeffs(theta)
    K = cross_matrix(v)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye - c1[..., None, None] * K + c2[..., None, None] * (K @ K)


def left_jacobian(v):
    """Left Jacobian: integral of exp(t*hat(v)) over t in [0, 1]."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    _, c1, c2 = _trig_coeffs(theta)
    K = cross_matrix(v)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + c1[..., None, None] * K + c2[..., None, None] * (K @ K)


class NonPositiveDeterminantError(ValueError):
    """Raised when an operation requires det F > 0 and the input violates it."""


def polar_rotation(F):
    """Closest rotation to F (Frobenius distance), det F > 0 required.

    Computed from the signed singular value decomposition F = U S V^T as
    R = U V^T; for det F > 0 no sign correction is needed, but the branch
    flipping the smallest singular direction is kept so near-degenerate
    inputs stay on the orthogonal Procrustes solution.
    """
    F = np.asarray(F, dtype=float)
    det = np.linalg.det(F)
    if not det > 0.0:
        raise NonPositiveDeterminantError(
            f"polar rotation requires det F > 0, got det F = {det:.6g}"
        )
    U, _, Vt = np.linalg.svd(F)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


def polar_rotation_many(F):
    """Vectorized closest rotation for a stack (..., 3, 3) with det > 0.

    Uses the Newton iteration R <- (R + R^{-T})/2, which converges
    quadratically to the polar factor for det > 0; agrees with
    polar_rotation to machine precision.  Falls back to the SVD route for
    any slice that has not converged after the iteration cap.
    """
    F = np.asarray(F, dtype=float)
    X = F.copy()
    for _ in range(30):
        Xinv_t = np.swapaxes(_inverse_3x3(X), -1, -2)
        # Scaled Newton step accelerates strongly stretched inputs.
        gamma = (
            np.abs(_det_3x3(Xinv_t)) / np.abs(_det_3x3(X))
        ) ** (1.0 / 6.0)
        X_new = 0.5 * (gamma[..., None, None] * X + Xinv_t / gamma[..., None, None])
        delta = np.max(np.abs(X_new - X))
        X = X_new
        if delta < 1e-15:
            break
    # Orthogonality check; repair stragglers through the exact SVD path.
    err = np.abs(np.swapaxes(X, -1, -2) @ X - np.eye(3)).max(axis=(-1, -2))
    bad = err > 1e-12
    if np.any(bad):
        flat = X.reshape(-1, 3, 3)
        flat_bad = bad.reshape(-1)
        src = F.reshape(-1, 3, 3)
        for i in np.nonzero(flat_bad)[0]:
            flat[i] = polar_rotation(src[i])
        X = flat.reshape(F.shape)
    return X


def _det_3x3(M):
    return (
        M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
        - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
        + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0])
    )


def _inverse_3x3(M):
    """Closed-form inverse of a stack of 3x3 matrices (adjugate / det)."""
    adj = np.empty_like(M)
    adj[..., 0, 0] = M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1]
    adj[..., 0, 1] = M[..., 0, 2] * M[..., 2, 1] - M[..., 0, 1] * M[..., 2, 2]
    adj[..., 0, 2] = M[..., 0, 1] * M[..., 1, 2] - M[..., 0, 2] * M[..., 1, 1]
    adj[..., 1, 0] = M[..., 1, 2] * M[..., 2, 0] - M[..., 1, 0] * M[..., 2, 2]
    adj[..., 1, 1] = M[..., 0, 0] * M[..., 2, 2] - M[..., 0, 2] * M[..., 2, 0]
    adj[..., 1, 2] = M[..., 0, 2] * M[..., 1, 0] - M[..., 0, 0] * M[..., 1, 2]
    adj[..., 2, 0] = M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0]
    adj[..., 2, 1] = M[..., 0, 1] * M[..., 2, 0] - M[..., 0, 0] * M[..., 2, 1]
    adj[..., 2, 2] = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return adj / _det_3x3(M)[..., None, None]


def rotation_distance_squared(F):
    """Squared Frobenius distance of F to SO(3), any determinant sign.

    dist^2 = sum (s_i - 1)^2 for det F >= 0; for det F < 0 the smallest
    singular value enters with flipped sign.
    """
    F = np.asarray(F, dtype=float)
    s = np.linalg.svd(F, compute_uv=False)
    if np.linalg.det(F) < 0.0:
        s = s.copy()
        s[-1] = -s[-1]
    return float(np.sum((s - 1.0) ** 2))


# ---------------------------------------------------------------------------
# Unit quaternions (scalar-first convention)
# ---------------------------------------------------------------------------

def quat_identity(shape=()):
    q = np.zeros(shape + (4,))
    q[..., 0] = 1.0
    return q


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(p, q):
    """Hamilton product, composing rotations: R(p q) = R(p) R(q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        (
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ),
        axis=-1,
    )


def quat_from_rotvec(v):
    """Unit quaternion of the rotation exp(cross_matrix(v))."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    half = 0.5 * theta
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    q = np.empty(v.shape[:-1] + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = k[..., None] * v
    return q


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion (stacks allowed)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def quat_from_matrix(R):
    """Unit quaternion of a single rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)
