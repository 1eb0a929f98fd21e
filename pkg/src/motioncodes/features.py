"""Flat per-frame feature vectors and dataset normalization.

Frame layout (F = 15*J + 6 floats):
``[ p (J*3) | r6 (J*6) | v (J*3) | w (J*3) | h (3) | up (3) ]``
in the clip's frames of reference. The reconstruction loss runs on normalized
features weighted by `feature_weights`, which emphasizes the root-velocity and
up-direction groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .skeleton import MotionClip, Skeleton


def expected_feature_dim(joint_count: int) -> int:
    return 15 * joint_count + 6


@dataclass(frozen=True)
class FeatureLayout:
    joint_count: int

    @property
    def dim(self) -> int:
        return expected_feature_dim(self.joint_count)

    @property
    def p(self) -> slice:
        return slice(0, 3 * self.joint_count)

    @property
    def r6(self) -> slice:
        j = self.joint_count
        return slice(3 * j, 9 * j)

    @property
    def v(self) -> slice:
        j = self.joint_count
        return slice(9 * j, 12 * j)

    @property
    def w(self) -> slice:
        j = self.joint_count
        return slice(12 * j, 15 * j)

    @property
    def h(self) -> slice:
        j = self.joint_count
        return slice(15 * j, 15 * j + 3)

    @property
    def up(self) -> slice:
        j = self.joint_count
        return slice(15 * j + 3, 15 * j + 6)


def assemble_features(clip: MotionClip) -> np.ndarray:
    """Stack clip state into [T, F] in layout order."""
    t = clip.frame_count
    j = clip.skeleton.joint_count
    return np.concatenate(
        [
            clip.p.reshape(t, 3 * j),
            clip.r6.reshape(t, 6 * j),
            clip.v.reshape(t, 3 * j),
            clip.w.reshape(t, 3 * j),
            clip.h,
            clip.up,
        ],
        axis=1,
    )


def disassemble_features(features: np.ndarray, skeleton: Skeleton, fps: float,
                         style_label: str | None = None,
                         normalize_up: bool = True) -> MotionClip:
    """Inverse of assemble_features.

    Decoder outputs land here, so `up` is renormalized by default (unit norm is
    a clip invariant the regressor cannot hit exactly); a degenerate up falls
    back to world up.
    """
    features = np.asarray(features, dtype=float)
    j = skeleton.joint_count
    layout = FeatureLayout(j)
    if features.ndim != 2 or features.shape[1] != layout.dim:
        raise StructuralError(
            f"features shape {features.shape} incompatible with J={j} (want [T, {layout.dim}])"
        )
    t = features.shape[0]
    up = features[:, layout.up].copy()
    if normalize_up:
        norms = np.linalg.norm(up, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-8
        up = np.where(bad[:, None], np.array([0.0, 1.0, 0.0]), up / np.maximum(norms, 1e-8))
    return MotionClip(
        skeleton=skeleton,
        fps=fps,
        p=features[:, layout.p].reshape(t, j, 3).copy(),
        r6=features[:, layout.r6].reshape(t, j, 6).copy(),
        v=features[:, layout.v].reshape(t, j, 3).copy(),
        w=features[:, layout.w].reshape(t, j, 3).copy(),
        h=features[:, layout.h].copy(),
        up=up,
        style_label=style_label,
    )


def feature_weights(layout: FeatureLayout, emphasis: float = 2.0) -> np.ndarray:
    """Per-feature loss weights: 1 everywhere, ``emphasis`` on the root's
    linear and angular velocity and on the up direction.

    The root rows steer the integrated world trajectory (yaw errors drift
    quadratically), so they carry extra reconstruction pressure.
    """
    w = np.ones(layout.dim)
    v0 = layout.v.start
    w[v0:v0 + 3] = emphasis
    w0 = layout.w.start
    w[w0:w0 + 3] = emphasis
    w[layout.up] = emphasis
    return w


@dataclass
class Normalizer:
    """Per-feature affine standardization fitted on the training set."""

    mean: np.ndarray  # [F]
    std: np.ndarray  # [F], floored away from zero

    @classmethod
    def fit(cls, features: np.ndarray, floor: float = 1e-8) -> "Normalizer":
        flat = np.asarray(features, dtype=float).reshape(-1, features.shape[-1])
        if flat.shape[0] < 2:
            raise StructuralError("need at least 2 frames to fit a normalizer")
        return cls(mean=flat.mean(axis=0), std=np.maximum(flat.std(axis=0), floor))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean
