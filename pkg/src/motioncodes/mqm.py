"""Text clip container (.mqm).

Line 1 is a JSON header object: version (always 1), fps, joint_count,
parent_index, rest_offset, and an optional style_label. Every following
non-empty line is one frame: the layout-ordered feature values as
comma-separated decimal floats (see features.FeatureLayout). UTF-8,
line-delimited; non-finite values are invalid.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import ParseError
from .features import assemble_features, disassemble_features, expected_feature_dim
from .skeleton import MotionClip, Skeleton

FORMAT_VERSION = 1
_REQUIRED = ("version", "fps", "joint_count", "parent_index", "rest_offset")


def save_clip(clip: MotionClip, path) -> None:
    """Validate and write a clip. Values are written at 10 significant digits,
    well inside the format's 1e-6 round-trip tolerance."""
    clip.validate()
    header = {
        "version": FORMAT_VERSION,
        "fps": clip.fps,
        "joint_count": clip.skeleton.joint_count,
        "parent_index": list(clip.skeleton.parents),
        "rest_offset": [[float(v) for v in row] for row in clip.skeleton.rest_offsets],
    }
    if clip.style_label is not None:
        header["style_label"] = clip.style_label
    feats = assemble_features(clip)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in feats:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


def load_clip(path) -> MotionClip:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty clip file", path=path, line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed header: {exc}", path=path, line=1) from exc
    if not isinstance(header, dict):
        raise ParseError("header is not an object", path=path, line=1)
    missing = [k for k in _REQUIRED if k not in header]
    if missing:
        raise ParseError(f"header missing keys {missing}", path=path, line=1)
    if header["version"] != FORMAT_VERSION:
        raise ParseError(f"unsupported version {header['version']}", path=path, line=1)
    joint_count = header["joint_count"]
    if len(header["parent_index"]) != joint_count or len(header["rest_offset"]) != joint_count:
        raise ParseError(
            f"joint_count {joint_count} does not match parent/offset lists",
            path=path, line=1,
        )
    skeleton = Skeleton(
        parents=[int(v) for v in header["parent_index"]],
        rest_offsets=np.array(header["rest_offset"], dtype=float),
    )
    fps = float(header["fps"])
    dim = expected_feature_dim(joint_count)

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        frame_index = len(rows)
        if len(fields) != dim:
            raise ParseError(
                f"frame {frame_index} has {len(fields)} values, expected {dim}",
                path=path, line=lineno,
            )
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(
                f"frame {frame_index} has a non-numeric value: {exc}",
                path=path, line=lineno,
            ) from exc
        if not all(math.isfinite(v) for v in values):
            raise ParseError(
                f"frame {frame_index} contains a non-finite value",
                path=path, line=lineno,
            )
        rows.append(values)
    if not rows:
        raise ParseError("clip has no frames", path=path, line=2)

    clip = disassemble_features(
        np.array(rows, dtype=float), skeleton, fps,
        style_label=header.get("style_label"), normalize_up=False,
    )
    clip.validate()
    return clip
