"""SO(3) conversions between rotation matrices, extrinsic x-y-z Euler angles
and axis-angle vectors.

Euler angles ``(phi, omega, psi)`` = (roll, pitch, yaw) in radians compose as
``R = Rz(psi) @ Ry(omega) @ Rx(phi)``. Points are row vectors and rotate as
``p @ R.T``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class EulerAngles(NamedTuple):
    phi: float
    omega: float
    psi: float


class AxisAngle(NamedTuple):
    axis: np.ndarray
    angle: float

    @property
    def rotvec(self) -> np.ndarray:
        return self.angle * np.asarray(self.axis, dtype=float)


def rot_x(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(e) -> np.ndarray:
    phi, omega, psi = (float(x) for x in e)
    cf, sf = math.cos(phi), math.sin(phi)
    co, so = math.cos(omega), math.sin(omega)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cp * co, cp * so * sf - sp * cf, cp * so * cf + sp * sf],
            [sp * co, sp * so * sf + cp * cf, sp * so * cf - cp * sf],
            [-so, co * sf, co * cf],
        ]
    )


def matrix_to_euler(R) -> EulerAngles:
    """Recover roll, pitch and yaw.

    Pitch comes from ``atan2(-r31, hypot(r32, r33))`` (equal to
    ``arcsin(-r31)`` but well conditioned near ±pi/2). Yaw is solved from
    ``R @ (Ry Rx).T`` so that recomposition stays exact even when roll is
    poorly determined. At exact gimbal lock roll is set to 0.
    """
    (r11, r12, r13), (r21, r22, r23), (r31, r32, r33) = np.asarray(R, dtype=float).tolist()
    cos_omega = math.hypot(r32, r33)
    omega = math.atan2(-r31, cos_omega)
    if cos_omega < 1e-12:
        phi = 0.0
    else:
        phi = math.atan2(r32, r33)
    # first column of R @ (Ry Rx).T; at gimbal lock (phi = 0) this reduces
    # to atan2(-r12, r22)
    co, so = math.cos(omega), math.sin(omega)
    u = (co, so * math.sin(phi), so * math.cos(phi))
    psi = math.atan2(r21 * u[0] + r22 * u[1] + r23 * u[2], r11 * u[0] + r12 * u[1] + r13 * u[2])
    return EulerAngles(phi, omega, psi)


def axis_angle_to_matrix(aa) -> np.ndarray:
    if isinstance(aa, AxisAngle):
        axis, angle = np.asarray(aa.axis, dtype=float), float(aa.angle)
    else:
        axis, angle = np.asarray(aa[0], dtype=float), float(aa[1])
    if angle == 0.0:
        return np.eye(3)
    x, y, z = (axis / np.linalg.norm(axis)).tolist()
    c, s = math.cos(angle), math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + t * x * x, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, c + t * y * y, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, c + t * z * z],
        ]
    )


def rotvec_to_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    angle = float(np.linalg.norm(m))
    if angle == 0.0:
        return np.eye(3)
    return axis_angle_to_matrix(AxisAngle(m / angle, angle))


def matrix_to_axis_angle(R) -> AxisAngle:
    R = np.asarray(R, dtype=float)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * float(np.linalg.norm(v))
    c = 0.5 * (float(np.trace(R)) - 1.0)
    angle = math.atan2(s, c)
    if s < 1e-15 and c > 0:
        return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)
    if c >= 0:
        return AxisAngle(v / (2.0 * s), angle)
    # near pi the antisymmetric part vanishes; the symmetric part is
    # (1 - cos) * a a^T, well conditioned here
    S = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(S)))
    axis = S[:, k] / math.sqrt(S[k, k])
    axis /= np.linalg.norm(axis)
    if s > 0 and axis @ v < 0:
        axis = -axis
    return AxisAngle(axis, angle)


def is_rotation(M, tol: float = 1e-9) -> bool:
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        return False
    return bool(
        np.allclose(M.T @ M, np.eye(3), atol=tol, rtol=0)
        and abs(np.linalg.det(M) - 1.0) <= tol
    )


def random_rotation(seed=None) -> np.ndarray:
    """Uniform rotation from a normalized Gaussian quaternion."""
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return quaternion_to_matrix(q)


def random_rotations(n: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    out = np.empty((n, 3, 3))
    out[:, 0] = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], axis=1)
    out[:, 1] = np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], axis=1)
    out[:, 2] = np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], axis=1)
    return out


def quaternion_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def apply_rotation(points, R) -> np.ndarray:
    return np.asarray(points, dtype=float) @ np.asarray(R, dtype=float).T
