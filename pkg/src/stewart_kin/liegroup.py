"""SO(3)/SE(3) maps and rotation-representation conversions.

Rotations are plain ``(3, 3)`` float arrays, poses are ``(4, 4)`` homogeneous
matrices and twists are 6-vectors ordered ``(rho, omega)``: the translation
part (mm) first, then the rotation vector (rad).

Most converters accept leading batch dimensions.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .exceptions import NearPiSingularity, RankDeficientWarning

#: Below this rotation angle the exp/log/V-matrix coefficients switch to series.
SMALL_ANGLE = 1e-8
#: The log map refuses rotation angles at or above ``pi - NEAR_PI``.
NEAR_PI = 1e-6
#: Series branch for the cancellation-prone third-order coefficients.
_SERIES_ANGLE = 1e-4


def hat(omega) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    wx, wy, wz = np.asarray(omega, dtype=float)
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sinc_coeffs(theta: float) -> tuple[float, float, float]:
    """Return ``sin(t)/t``, ``(1-cos t)/t^2`` and ``(t - sin t)/t^3``."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    a = math.sin(theta) / theta
    half = math.sin(0.5 * theta) / theta
    b = 2.0 * half * half
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        c = (theta - math.sin(theta)) / theta**3
    return a, b, c


def so3_exp(omega) -> np.ndarray:
    """Rodrigues formula ``exp(omega^)``."""
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    a, b, _ = _sinc_coeffs(theta)
    w = hat(omega)
    return np.eye(3) + a * w + b * (w @ w)


def rotation_angle(r) -> np.ndarray:
    """Angle in ``[0, pi]`` of one or many rotation matrices."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r, axis1=-2, axis2=-1)
    s = 0.5 * np.stack(
        [r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]],
        axis=-1,
    )
    return np.arctan2(np.linalg.norm(s, axis=-1), 0.5 * (tr - 1.0))


def so3_log(r) -> np.ndarray:
    """Rotation vector of ``r``.

    Raises :class:`NearPiSingularity` when the angle is within ``NEAR_PI`` of pi,
    where the axis sign becomes ambiguous.
    """
    r = np.asarray(r, dtype=float)
    theta = float(rotation_angle(r))
    if theta >= math.pi - NEAR_PI:
        raise NearPiSingularity(theta)
    v = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < SMALL_ANGLE:
        return v * (1.0 + theta * theta / 6.0)
    return v * (theta / math.sin(theta))


def left_jacobian(omega) -> np.ndarray:
    """The SO(3) left Jacobian, i.e. the ``V`` matrix of the SE(3) exp map."""
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    _, b, c = _sinc_coeffs(theta)
    w = hat(omega)
    return np.eye(3) + b * w + c * (w @ w)


def left_jacobian_inv(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    w = hat(omega)
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = 0.5 * theta
        d = (1.0 - half / math.tan(half)) / (theta * theta)
    return np.eye(3) - 0.5 * w + d * (w @ w)


def make_pose(r, t) -> np.ndarray:
    """Homogeneous 4x4 matrix from a rotation and a translation."""
    pose = np.eye(4)
    pose[:3, :3] = r
    pose[:3, 3] = t
    return pose


def se3_exp(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    rho, omega = xi[:3], xi[3:]
    return make_pose(so3_exp(omega), left_jacobian(omega) @ rho)


def se3_log(pose) -> np.ndarray:
    pose = np.asarray(pose, dtype=float)
    omega = so3_log(pose[:3, :3])
    rho = left_jacobian_inv(omega) @ pose[:3, 3]
    return np.concatenate([rho, omega])


def euler_to_rotation(alpha, beta, gamma) -> np.ndarray:
    """``R_x(alpha) @ R_y(beta) @ R_z(gamma)``; broadcasts over array inputs."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    shape = np.broadcast(ca, cb, cg).shape
    r = np.empty(shape + (3, 3))
    r[..., 0, 0] = cb * cg
    r[..., 0, 1] = -cb * sg
    r[..., 0, 2] = sb
    r[..., 1, 0] = ca * sg + sa * sb * cg
    r[..., 1, 1] = ca * cg - sa * sb * sg
    r[..., 1, 2] = -sa * cb
    r[..., 2, 0] = sa * sg - ca * sb * cg
    r[..., 2, 1] = sa * cg + ca * sb * sg
    r[..., 2, 2] = ca * cb
    return r


def rotation_to_euler(r) -> np.ndarray:
    """Inverse of :func:`euler_to_rotation` for ``|beta| < pi/2``."""
    r = np.asarray(r, dtype=float)
    beta = np.arcsin(np.clip(r[..., 0, 2], -1.0, 1.0))
    alpha = np.arctan2(-r[..., 1, 2], r[..., 2, 2])
    gamma = np.arctan2(-r[..., 0, 1], r[..., 0, 0])
    return np.stack([alpha, beta, gamma], axis=-1)


def rotation_to_quaternion(r) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``.

    Uses the largest-diagonal branch selection so every input stays well
    conditioned, including half-turns.
    """
    r = np.asarray(r, dtype=float)
    batch = r.shape[:-2]
    m = r.reshape(-1, 3, 3)
    q = np.empty((m.shape[0], 4))
    tr = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    diag = np.stack([tr, m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]], axis=1)
    branch = np.argmax(diag, axis=1)

    sel = branch == 0
    s = 2.0 * np.sqrt(1.0 + tr[sel])
    q[sel] = np.stack(
        [0.25 * s, (m[sel, 2, 1] - m[sel, 1, 2]) / s,
         (m[sel, 0, 2] - m[sel, 2, 0]) / s, (m[sel, 1, 0] - m[sel, 0, 1]) / s], axis=1)
    sel = branch == 1
    s = 2.0 * np.sqrt(1.0 + m[sel, 0, 0] - m[sel, 1, 1] - m[sel, 2, 2])
    q[sel] = np.stack(
        [(m[sel, 2, 1] - m[sel, 1, 2]) / s, 0.25 * s,
         (m[sel, 0, 1] + m[sel, 1, 0]) / s, (m[sel, 0, 2] + m[sel, 2, 0]) / s], axis=1)
    sel = branch == 2
    s = 2.0 * np.sqrt(1.0 + m[sel, 1, 1] - m[sel, 0, 0] - m[sel, 2, 2])
    q[sel] = np.stack(
        [(m[sel, 0, 2] - m[sel, 2, 0]) / s, (m[sel, 0, 1] + m[sel, 1, 0]) / s,
         0.25 * s, (m[sel, 1, 2] + m[sel, 2, 1]) / s], axis=1)
    sel = branch == 3
    s = 2.0 * np.sqrt(1.0 + m[sel, 2, 2] - m[sel, 0, 0] - m[sel, 1, 1])
    q[sel] = np.stack(
        [(m[sel, 1, 0] - m[sel, 0, 1]) / s, (m[sel, 0, 2] + m[sel, 2, 0]) / s,
         (m[sel, 1, 2] + m[sel, 2, 1]) / s, 0.25 * s], axis=1)

    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q.reshape(batch + (4,))


def quaternion_to_rotation(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def svd_orthogonalize(q, *, warn: bool = True) -> np.ndarray:
    """Project a raw 9-vector (row-major 3x3) onto SO(3).

    Returns ``U diag(1, 1, det(U V^T)) V^T``, the rotation closest to ``M(q)``
    in Frobenius norm. Leading batch dimensions are kept. A
    :class:`RankDeficientWarning` is emitted when some ``M(q)`` has a singular
    value below 1e-12; the result is still a valid rotation.
    """
    q = np.asarray(q, dtype=float)
    m = q.reshape(q.shape[:-1] + (3, 3))
    u, s, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    d = np.where(d == 0, 1.0, d)
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    if warn and np.any(s[..., 2] < 1e-12):
        warnings.warn("M(q) is rank deficient; SVD projection is not unique",
                      RankDeficientWarning, stacklevel=2)
    return u @ vt


def geodesic_distance(r1, r2) -> np.ndarray:
    """``||log(r1 r2^T)||_F``, i.e. sqrt(2) times the relative rotation angle."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    rel = r1 @ np.swapaxes(r2, -1, -2)
    return math.sqrt(2.0) * rotation_angle(rel)


def geodesic_to_degrees(value):
    """Degrees view of a geodesic (Frobenius) distance."""
    return np.degrees(np.asarray(value) / math.sqrt(2.0))
