"""Rotation-group helpers: skew/vee, exponential and logarithm maps, Euler angles.

Attitudes are stored as 3x3 rotation matrices mapping body-frame vectors into
the reference frame (``x_ref = B @ x_body``).

Euler convention: intrinsic Z-Y-X (yaw, pitch, roll). :func:`to_euler` returns the
triple ``(phi, theta, psi)`` = (roll about x, pitch about y, yaw about z), with
``R = Rz(psi) @ Ry(theta) @ Rx(phi)``. Under this convention the triples
``(pi, pi, 0)`` and ``(0, 0, -pi)`` describe the same rotation.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateMatrixError, InvalidArgumentError, InvalidRotationError

ORTHO_TOL = 1e-6
_SMALL_ANGLE = 1e-12
_NEAR_PI = 1e-3


def skew(w) -> np.ndarray:
    """Return the 3x3 matrix ``S`` with ``S @ b == cross(w, b)``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (3,) or not np.isfinite(w).all():
        raise InvalidArgumentError(f"skew expects a finite 3-vector, got {w!r}")
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def vee(S) -> np.ndarray:
    """Inverse of :func:`skew` (uses the antisymmetric part of ``S``)."""
    S = np.asarray(S, dtype=float)
    return 0.5 * np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]])


def _det3(R) -> float:
    return float(
        R[0, 0] * (R[1, 1] * R[2, 2] - R[1, 2] * R[2, 1])
        - R[0, 1] * (R[1, 0] * R[2, 2] - R[1, 2] * R[2, 0])
        + R[0, 2] * (R[1, 0] * R[2, 1] - R[1, 1] * R[2, 0])
    )


def orthonormality_error(R) -> float:
    R = np.asarray(R, dtype=float)
    E = R.T @ R
    E[0, 0] -= 1.0
    E[1, 1] -= 1.0
    E[2, 2] -= 1.0
    return math.sqrt(float(np.sum(E * E)))


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        return False
    return orthonormality_error(R) <= tol and abs(_det3(R) - 1.0) <= tol


def so3_exp(v) -> np.ndarray:
    """Rodrigues formula. Falls back to a second-order series for tiny angles."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.isfinite(v).all():
        raise InvalidArgumentError(f"so3_exp expects a finite 3-vector, got {v!r}")
    theta = np.linalg.norm(v)
    K = skew(v)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R, tol: float = ORTHO_TOL) -> np.ndarray:
    """Principal axis-angle vector of ``R`` (norm in ``[0, pi]``).

    At exactly ``pi`` the axis sign is chosen so that its largest-magnitude
    component is positive.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        raise InvalidRotationError("so3_log expects a finite 3x3 matrix")
    if orthonormality_error(R) > tol or abs(_det3(R) - 1.0) > tol:
        raise InvalidRotationError(
            f"matrix is not a rotation (orthonormality error {orthonormality_error(R):.3e})"
        )
    w = vee(R)  # sin(theta) * axis
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta < 1e-6:
        # theta / sin(theta) ~ 1 + theta^2 / 6
        return w * (1.0 + theta * theta / 6.0)
    if np.pi - theta > _NEAR_PI:
        return w * (theta / s)

    # Near pi: recover the axis from the symmetric part, n n^T = (S - cI) / (1 - c).
    S = 0.5 * (R + R.T)
    M = (S - c * np.eye(3)) / (1.0 - c)
    i = int(np.argmax(np.diag(M)))
    axis = M[:, i] / np.sqrt(max(M[i, i], 1e-300))
    axis /= np.linalg.norm(axis)
    proj = float(axis @ w)
    if abs(proj) > 1e-12:
        if proj < 0.0:
            axis = -axis
    elif axis[int(np.argmax(np.abs(axis)))] < 0.0:
        axis = -axis
    return theta * axis


def right_jacobian_inv(phi) -> np.ndarray:
    """Inverse right Jacobian of SO(3): ``d/dt log(R) = Jr^-1(log R) @ w`` for ``R' = R skew(w)``."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * K + (K @ K) / 12.0
    coef = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * K + coef * (K @ K)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def from_euler(angles) -> np.ndarray:
    """Rotation matrix from ``(phi, theta, psi)`` in the Z-Y-X convention."""
    phi, theta, psi = (float(a) for a in angles)
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def to_euler(R) -> np.ndarray:
    """Extract ``(phi, theta, psi)``; at gimbal lock ``psi`` is set to zero."""
    R = np.asarray(R, dtype=float)
    theta = np.arctan2(-R[2, 0], np.hypot(R[0, 0], R[1, 0]))
    if abs(abs(theta) - np.pi / 2) < 1e-9:
        sgn = np.sign(theta)
        return np.array([np.arctan2(sgn * R[0, 1], R[1, 1]), theta, 0.0])
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])


def orthonormalize(M) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise DegenerateMatrixError("orthonormalize expects a finite 3x3 matrix")
    if _det3(M) <= 0.0:
        raise DegenerateMatrixError("matrix has non-positive determinant")
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt
