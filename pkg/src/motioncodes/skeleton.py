"""Skeleton and motion-clip containers.

A clip stores per-frame state in stacked arrays over a root-relative,
heading-free frame: joint positions ``p`` and velocities ``v`` live in the
yaw-rotated frame at the root (so ``p[:, 0]`` is identically zero), ``r6``
holds per-joint local rotations in 6D form with the root slot carrying the
root's tilt, ``w`` holds angular velocities in the same heading frame, ``h``
is the global root height as a 3-vector, and ``up`` is the world up direction
expressed in the root's body frame. Horizontal world position and heading are
deliberately absent; they are recovered by integrating root velocities.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError, StructuralError
from .rotations import rot6d_to_matrix


@dataclass
class Skeleton:
    """Joint tree: ``parents[0] == 0`` (root points at itself) and every other
    parent index precedes its child."""

    parents: list[int]
    rest_offsets: np.ndarray  # [J, 3], bone offset from parent in parent frame
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rest_offsets = np.asarray(self.rest_offsets, dtype=float)
        j = len(self.parents)
        if j < 2:
            raise StructuralError(f"skeleton needs at least 2 joints, got {j}")
        if self.rest_offsets.shape != (j, 3):
            raise StructuralError(
                f"rest_offsets shape {self.rest_offsets.shape} != ({j}, 3)"
            )
        if self.parents[0] != 0:
            raise StructuralError("root parent index must be 0 (itself)")
        for child in range(1, j):
            par = self.parents[child]
            if not 0 <= par < child:
                raise StructuralError(
                    f"parent of joint {child} is {par}; parents must precede children"
                )
        if not np.all(np.isfinite(self.rest_offsets)):
            raise NumericError("non-finite rest offset")
        if not self.names:
            self.names = [f"joint_{i}" for i in range(j)]
        elif len(self.names) != j:
            raise StructuralError("names length != joint count")

    @property
    def joint_count(self) -> int:
        return len(self.parents)


@dataclass
class FrameState:
    """One frame of clip state (see module docstring for frames of reference)."""

    p: np.ndarray  # [J, 3]
    r6: np.ndarray  # [J, 6]
    v: np.ndarray  # [J, 3]
    w: np.ndarray  # [J, 3]
    h: np.ndarray  # [3]
    up: np.ndarray  # [3]


@dataclass
class MotionClip:
    skeleton: Skeleton
    fps: float
    p: np.ndarray  # [T, J, 3]
    r6: np.ndarray  # [T, J, 6]
    v: np.ndarray  # [T, J, 3]
    w: np.ndarray  # [T, J, 3]
    h: np.ndarray  # [T, 3]
    up: np.ndarray  # [T, 3]
    style_label: str | None = None

    @property
    def frame_count(self) -> int:
        return self.p.shape[0]

    def frame(self, t: int) -> FrameState:
        return FrameState(self.p[t], self.r6[t], self.v[t], self.w[t], self.h[t], self.up[t])

    def window(self, start: int, length: int) -> "MotionClip":
        """Contiguous sub-clip sharing the frame storage (views, no copies)."""
        if not (0 <= start and length >= 1 and start + length <= self.frame_count):
            raise StructuralError(
                f"window [{start}, {start + length}) out of range for {self.frame_count} frames"
            )
        sl = slice(start, start + length)
        return replace(
            self, p=self.p[sl], r6=self.r6[sl], v=self.v[sl], w=self.w[sl],
            h=self.h[sl], up=self.up[sl],
        )

    def validate(self) -> None:
        """Raise on shape, finiteness, or unit/orthonormality violations."""
        j = self.skeleton.joint_count
        t = self.frame_count
        if t < 1:
            raise StructuralError("clip needs at least one frame")
        if self.fps <= 0:
            raise StructuralError(f"fps must be positive, got {self.fps}")
        shapes = {
            "p": (self.p, (t, j, 3)),
            "r6": (self.r6, (t, j, 6)),
            "v": (self.v, (t, j, 3)),
            "w": (self.w, (t, j, 3)),
            "h": (self.h, (t, 3)),
            "up": (self.up, (t, 3)),
        }
        for name, (arr, want) in shapes.items():
            if arr.shape != want:
                raise StructuralError(f"{name} shape {arr.shape} != {want}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite value in {name}")
        norms = np.linalg.norm(self.up, axis=-1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise StructuralError("up direction is not unit length")
        rot = rot6d_to_matrix(self.r6)
        gram = rot @ np.swapaxes(rot, -1, -2)
        if np.max(np.abs(gram - np.eye(3))) > 1e-5:
            raise StructuralError("6D rotation does not reconstruct to orthonormal")


def window_dataset(clips, window_len: int, stride: int):
    """Slice clips into fixed-length overlapping windows.

    Each clip of T frames yields floor((T - window_len) / stride) + 1
    windows (none when T < window_len). Windows are views into the
    original frame storage and keep the clip's style label.
    """
    if window_len < 1 or stride < 1:
        raise StructuralError(
            f"window_len and stride must be >= 1, got {window_len}, {stride}"
        )
    out = []
    for clip in clips:
        t = clip.frame_count
        count = (t - window_len) // stride + 1 if t >= window_len else 0
        for k in range(count):
            out.append(clip.window(k * stride, window_len))
    return out
