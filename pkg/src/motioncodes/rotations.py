"""Rotation representations: two-column 6D form, rotation matrices, axis-angle.

Matrices are column-convention (columns are the rotated basis vectors), so
points transform as ``R @ p``. The 6D form stores the first two columns; the
full matrix is recovered by Gram-Schmidt plus a cross product. Every forward
here has a matching hand-written backward used by the training losses.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def rot6d_to_matrix(r6: np.ndarray, want_cache: bool = False):
    """Map 6D rotations (..., 6) to matrices (..., 3, 3).

    Columns: x = normalize(a), y = normalize(b - (x.b)x), z = x cross y,
    where a, b are the two stored 3-vectors.
    """
    r6 = np.asarray(r6)
    a = r6[..., 0:3]
    b = r6[..., 3:6]
    na = np.sqrt(np.sum(a * a, axis=-1, keepdims=True))
    x = a / np.maximum(na, _EPS)
    proj = np.sum(x * b, axis=-1, keepdims=True)
    y0 = b - proj * x
    ny = np.sqrt(np.sum(y0 * y0, axis=-1, keepdims=True))
    y = y0 / np.maximum(ny, _EPS)
    z = np.cross(x, y)
    rot = np.stack([x, y, z], axis=-1)  # (..., 3, 3), columns x|y|z
    if want_cache:
        return rot, (b, na, x, proj, ny, y, z)
    return rot


def rot6d_to_matrix_backward(cache, grad_rot: np.ndarray) -> np.ndarray:
    """Backward of rot6d_to_matrix: (..., 3, 3) grad -> (..., 6) grad."""
    b, na, x, proj, ny, y, z = cache
    gx = grad_rot[..., :, 0]
    gy = grad_rot[..., :, 1]
    gz = grad_rot[..., :, 2]
    # z = x cross y
    gx = gx + np.cross(y, gz)
    gy = gy + np.cross(gz, x)
    # y = y0 / ny
    gy0 = (gy - np.sum(y * gy, axis=-1, keepdims=True) * y) / np.maximum(ny, _EPS)
    # y0 = b - (x.b) x
    dot = np.sum(gy0 * x, axis=-1, keepdims=True)
    gb = gy0 - dot * x
    gx = gx - dot * b - proj * gy0
    # x = a / na
    ga = (gx - np.sum(x * gx, axis=-1, keepdims=True) * x) / np.maximum(na, _EPS)
    return np.concatenate([ga, gb], axis=-1)


def matrix_to_rot6d(rot: np.ndarray) -> np.ndarray:
    """First two columns of (..., 3, 3), flattened to (..., 6)."""
    rot = np.asarray(rot)
    return np.concatenate([rot[..., :, 0], rot[..., :, 1]], axis=-1)


def axis_angle_to_matrix(rotvec: np.ndarray) -> np.ndarray:
    """Rodrigues formula for rotation vectors (..., 3); angle = |rotvec|."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.sqrt(np.sum(rotvec * rotvec, axis=-1))[..., None, None]
    kx, ky, kz = rotvec[..., 0], rotvec[..., 1], rotvec[..., 2]
    zero = np.zeros_like(kx)
    skew = np.stack(
        [
            np.stack([zero, -kz, ky], axis=-1),
            np.stack([kz, zero, -kx], axis=-1),
            np.stack([-ky, kx, zero], axis=-1),
        ],
        axis=-2,
    )
    # sin(t)/t and (1-cos(t))/t^2 with series fallbacks near zero
    small = theta < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(small, 1.0 - theta**2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        c = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, theta**2))
    eye = np.broadcast_to(np.eye(3), skew.shape)
    return eye + s * skew + c * (skew @ skew)


def matrix_to_axis_angle(rot: np.ndarray) -> np.ndarray:
    """Rotation vector (..., 3) of (..., 3, 3). Intended for small-to-moderate
    angles (frame-to-frame increments); degrades only near angle = pi."""
    rot = np.asarray(rot)
    v = 0.5 * np.stack(
        [
            rot[..., 2, 1] - rot[..., 1, 2],
            rot[..., 0, 2] - rot[..., 2, 0],
            rot[..., 1, 0] - rot[..., 0, 1],
        ],
        axis=-1,
    )
    s = np.sqrt(np.sum(v * v, axis=-1))  # sin(theta)
    c = 0.5 * (np.trace(rot, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, np.clip(c, -1.0, 1.0))
    scale = np.where(s < 1e-8, 1.0, theta / np.where(s < 1e-8, 1.0, s))
    return v * scale[..., None]


def yaw_matrix(theta) -> np.ndarray:
    """Rotation about +y by theta (scalar or any leading shape)."""
    theta = np.asarray(theta, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    zero = np.zeros_like(ct)
    one = np.ones_like(ct)
    return np.stack(
        [
            np.stack([ct, zero, st], axis=-1),
            np.stack([zero, one, zero], axis=-1),
            np.stack([-st, zero, ct], axis=-1),
        ],
        axis=-2,
    )
