"""Minimal batched quaternion algebra (w, x, y, z convention)."""

from __future__ import annotations

import numpy as np


def quat_identity(n: int) -> np.ndarray:
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return q


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    w = q[..., 0:1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    qc = q.copy()
    qc[..., 1:] *= -1.0
    return quat_rotate(qc, v)


def quat_from_rpy(roll, pitch, yaw) -> np.ndarray:
    roll, pitch, yaw = np.broadcast_arrays(roll, pitch, yaw)
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.stack(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ],
        axis=-1,
    )


def quat_integrate(q: np.ndarray, omega_world: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientation by world-frame angular velocity over dt."""
    dq = np.concatenate([np.zeros(q.shape[:-1] + (1,)), omega_world], axis=-1)
    q_new = q + 0.5 * dt * quat_mul(dq, q)
    return quat_normalize(q_new)


def gravity_in_body(q: np.ndarray) -> np.ndarray:
    """Unit gravity direction expressed in the body frame."""
    g = np.zeros(q.shape[:-1] + (3,))
    g[..., 2] = -1.0
    return quat_rotate_inverse(q, g)


def body_z_world(q: np.ndarray) -> np.ndarray:
    """World-frame direction of the body z axis."""
    ez = np.zeros(q.shape[:-1] + (3,))
    ez[..., 2] = 1.0
    return quat_rotate(q, ez)
