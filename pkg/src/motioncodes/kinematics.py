"""Forward kinematics, finite differencing, and root-trajectory integration.

FK composes local rotations down the joint tree in the column convention:
``pos[j] = pos[parent] + R_global[parent] @ rest_offset[j]``. The backward
passes exist because the training losses differentiate through FK and through
the 6D-to-matrix map.
"""

from __future__ import annotations

import numpy as np

from .errors import StructuralError
from .rotations import rot6d_to_matrix, rot6d_to_matrix_backward, yaw_matrix
from .skeleton import Skeleton


def forward_kinematics(rotations: np.ndarray, root_position: np.ndarray,
                       skeleton: Skeleton, want_cache: bool = False):
    """Global joint positions (..., J, 3) from local rotations (..., J, 3, 3)
    and a root position (..., 3)."""
    j = skeleton.joint_count
    if rotations.shape[-3] != j:
        raise StructuralError(
            f"rotations carry {rotations.shape[-3]} joints, skeleton has {j}"
        )
    off = skeleton.rest_offsets
    glob = [None] * j  # per-joint global rotation (..., 3, 3)
    pos = [None] * j
    glob[0] = rotations[..., 0, :, :]
    pos[0] = root_position
    for child in range(1, j):
        par = skeleton.parents[child]
        glob[child] = glob[par] @ rotations[..., child, :, :]
        pos[child] = pos[par] + (glob[par] @ off[child])
    out = np.stack(pos, axis=-2)
    if want_cache:
        return out, (rotations, glob)
    return out


def forward_kinematics_backward(cache, skeleton: Skeleton, grad_pos: np.ndarray):
    """Backward of forward_kinematics.

    grad_pos: (..., J, 3) -> (grad_rotations (..., J, 3, 3), grad_root (..., 3)).
    """
    rotations, glob = cache
    j = skeleton.joint_count
    off = skeleton.rest_offsets
    g_pos = [np.array(grad_pos[..., child, :]) for child in range(j)]
    g_glob = [np.zeros_like(glob[child]) for child in range(j)]
    g_rot = np.zeros_like(rotations)
    for child in range(j - 1, 0, -1):
        par = skeleton.parents[child]
        g_pos[par] = g_pos[par] + g_pos[child]
        # pos[child] = pos[par] + glob[par] @ off[child]
        g_glob[par] = g_glob[par] + g_pos[child][..., :, None] * off[child]
        # glob[child] = glob[par] @ rot[child]
        g_glob[par] = g_glob[par] + g_glob[child] @ np.swapaxes(rotations[..., child, :, :], -1, -2)
        g_rot[..., child, :, :] = np.swapaxes(glob[par], -1, -2) @ g_glob[child]
    g_rot[..., 0, :, :] = g_glob[0]
    return g_rot, g_pos[0]


def fk_positions_6d(r6: np.ndarray, root_position: np.ndarray,
                    skeleton: Skeleton, want_cache: bool = False):
    """FK straight from 6D local rotations (..., J, 6)."""
    rot, rcache = rot6d_to_matrix(r6, want_cache=True)
    pos, fcache = forward_kinematics(rot, root_position, skeleton, want_cache=True)
    if want_cache:
        return pos, (rcache, fcache)
    return pos


def fk_positions_6d_backward(cache, skeleton: Skeleton, grad_pos: np.ndarray):
    rcache, fcache = cache
    g_rot, g_root = forward_kinematics_backward(fcache, skeleton, grad_pos)
    g_r6 = rot6d_to_matrix_backward(rcache, g_rot)
    return g_r6, g_root


def finite_diff(x: np.ndarray, fps: float, axis: int = 0) -> np.ndarray:
    """Forward differences times fps along `axis`; the last frame repeats the
    previous derivative so the output length matches the input."""
    x = np.asarray(x)
    n = x.shape[axis]
    if n < 2:
        raise StructuralError(f"finite_diff needs at least 2 frames, got {n}")
    xm = np.moveaxis(x, axis, 0)
    d = (xm[1:] - xm[:-1]) * fps
    out = np.concatenate([d, d[-1:]], axis=0)
    return np.moveaxis(out, 0, axis)


def finite_diff_backward(grad_y: np.ndarray, fps: float, axis: int = 0) -> np.ndarray:
    """Backward of finite_diff (including the repeated last frame)."""
    gy = np.moveaxis(np.asarray(grad_y), axis, 0).copy()
    n = gy.shape[0]
    if n < 2:
        raise StructuralError("finite_diff_backward needs at least 2 frames")
    gy[-2] += gy[-1]  # last output frame is a copy of the previous one
    gd = gy[:-1] * fps
    gx = np.zeros_like(gy)
    gx[1:] += gd
    gx[:-1] -= gd
    return np.moveaxis(gx, 0, axis)


def integrate_root(velocities: np.ndarray, yaw_rates: np.ndarray, fps: float,
                   initial_position=(0.0, 0.0, 0.0), initial_heading: float = 0.0,
                   heights: np.ndarray | None = None) -> np.ndarray:
    """Explicit-Euler world trajectory [T, 3] of the root.

    `velocities` are heading-frame root velocities [T, 3]; `yaw_rates` [T] are
    heading angular velocities (rad/s). When `heights` [T] is given, the
    vertical coordinate is taken from it instead of being integrated.
    """
    velocities = np.asarray(velocities, dtype=float)
    yaw_rates = np.asarray(yaw_rates, dtype=float)
    t = velocities.shape[0]
    if velocities.shape != (t, 3) or yaw_rates.shape != (t,):
        raise StructuralError(
            f"integrate_root shapes: velocities {velocities.shape}, yaw_rates {yaw_rates.shape}"
        )
    if fps <= 0:
        raise StructuralError(f"fps must be positive, got {fps}")
    headings = np.empty(t)
    headings[0] = initial_heading
    if t > 1:
        headings[1:] = initial_heading + np.cumsum(yaw_rates[:-1]) / fps
    world_v = np.einsum("tij,tj->ti", yaw_matrix(headings), velocities)
    pos = np.empty((t, 3))
    pos[0] = np.asarray(initial_position, dtype=float)
    if t > 1:
        pos[1:] = pos[0] + np.cumsum(world_v[:-1], axis=0) / fps
    if heights is not None:
        heights = np.asarray(heights, dtype=float)
        if heights.shape != (t,):
            raise StructuralError(f"heights shape {heights.shape} != ({t},)")
        pos[:, 1] = heights
    return pos


def root_trajectory(clip) -> np.ndarray:
    """World root trajectory of a clip: horizontal by integrating the root's
    heading-frame velocity and yaw rate, vertical read from the height channel."""
    return integrate_root(
        clip.v[:, 0],
        clip.w[:, 0, 1],
        clip.fps,
        initial_position=(0.0, float(clip.h[0, 1]), 0.0),
        heights=clip.h[:, 1],
    )
