"""Latent-space editing on a trained codec.

Every operation follows the same shape: encode one or two clips, recombine
the per-layer quantized codes (content layers are the first ``s`` books,
style layers the rest), decode once. Nothing here mutates the model or its
inputs, so all operations are safe for concurrent callers; randomness enters
only through an explicit seed or generator.

Latents are always accumulated layer by layer in ascending order, matching
the reconstruction path bit for bit. That makes the advertised identities
(swap with self, interpolation at the endpoints, blending with an empty
clip) exact equalities rather than tolerances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .codec import MotionCodec
from .errors import ConfigurationError, StructuralError
from .features import assemble_features, disassemble_features
from .skeleton import MotionClip

__all__ = [
    "StyleCodeBlock",
    "TransitionSegment",
    "TransitionScript",
    "code_swap_transfer",
    "content_extract",
    "style_interpolation",
    "style_inversion",
    "style_transition",
    "motion_blend",
    "random_style_augmentation",
    "content_interpolation",
    "extract_style_block",
]


@dataclass
class StyleCodeBlock:
    """Quantized style codes lifted out of a clip: layers s..N-1 over K slots."""

    z_style: np.ndarray  # [N - s, K, d]
    layer_start: int
    source: str | None = None

    def __post_init__(self):
        self.z_style = np.asarray(self.z_style)
        if self.z_style.ndim != 3 or self.z_style.shape[1] < 1:
            raise StructuralError(
                f"style block needs [layers, K >= 1, d], got {self.z_style.shape}"
            )
        if self.layer_start < 1:
            raise StructuralError("style layers start at book 1 or later")

    @property
    def slot_count(self) -> int:
        return self.z_style.shape[1]


@dataclass
class TransitionSegment:
    style: MotionClip
    start: int
    stop: int


@dataclass
class TransitionScript:
    """Ordered style segments whose slot spans partition [0, K)."""

    segments: list

    def validate(self, slot_count: int) -> None:
        if not self.segments:
            raise StructuralError("transition script has no segments")
        cursor = 0
        for i, seg in enumerate(self.segments):
            if seg.start != cursor:
                raise StructuralError(
                    f"segment {i} starts at {seg.start}, expected {cursor} "
                    "(spans must be contiguous and non-overlapping)"
                )
            if seg.stop <= seg.start:
                raise StructuralError(f"segment {i} span [{seg.start}, {seg.stop}) is empty")
            cursor = seg.stop
        if cursor != slot_count:
            raise StructuralError(
                f"script covers [0, {cursor}) but the content clip has {slot_count} slots"
            )


def _style_start(model: MotionCodec, s) -> int:
    n = model.config.num_books
    s = model.config.content_books if s is None else int(s)
    if not 1 <= s < n:
        raise ConfigurationError(f"content book count s must be in 1..{n - 1}, got {s}")
    return s


def _clip_trace(model: MotionCodec, clip: MotionClip, role: str):
    if clip is None or clip.frame_count == 0:
        raise StructuralError(f"{role} clip is empty")
    if clip.skeleton.joint_count != model.skeleton.joint_count:
        raise StructuralError(
            f"{role} clip has {clip.skeleton.joint_count} joints, "
            f"model expects {model.skeleton.joint_count}"
        )
    return model.quantize_features(assemble_features(clip)[None])


def _decode_clip(model: MotionCodec, latent: np.ndarray, fps: float,
                 style_label: str | None) -> MotionClip:
    features = model.decode_latent(latent)
    return disassemble_features(features[0], model.skeleton, fps, style_label=style_label)


def _accumulate(layers) -> np.ndarray:
    """Sum coeff * z over layers in the given (ascending) order.

    Mirrors the accumulation order of full reconstruction, so a composition
    whose coefficients are all 1 on the same trace is bit-identical to it.
    A coefficient of exactly 1.0 skips the multiply entirely.
    """
    out = None
    for coeff, z in layers:
        term = z if coeff == 1.0 else coeff * z
        if out is None:
            out = np.zeros_like(term) + term
        else:
            out = out + term
    return out


def _assert_content_untouched(trace, s: int, before: np.ndarray) -> None:
    # style-side edits must leave the content codes bitwise intact
    if not np.array_equal(trace.z[:s], before):
        raise StructuralError("content codes were modified by a style operation")


def _tile_slots(z: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Pick slot columns cyclically: shorter styles repeat, longer truncate."""
    return z[:, positions % z.shape[1]]


def extract_style_block(model: MotionCodec, clip: MotionClip, s=None) -> StyleCodeBlock:
    """Lift the quantized style codes (books s..N-1) out of a clip."""
    s = _style_start(model, s)
    trace = _clip_trace(model, clip, "style")
    return StyleCodeBlock(
        z_style=trace.z[s:, 0], layer_start=s, source=clip.style_label,
    )


def code_swap_transfer(model: MotionCodec, content: MotionClip, style: MotionClip,
                       s=None) -> MotionClip:
    """Decode content codes of one clip with style codes of another.

    Style slots are aligned to the content length by cyclic tiling when the
    style clip is shorter and truncation when longer. The output inherits
    the content clip's length and the style clip's label.
    """
    s = _style_start(model, s)
    trace_c = _clip_trace(model, content, "content")
    trace_s = _clip_trace(model, style, "style")
    content_before = trace_c.z[:s].copy()
    k = trace_c.r.shape[-2]
    positions = np.arange(k)
    layers = [(1.0, trace_c.z[i]) for i in range(s)]
    layers += [(1.0, _tile_slots(trace_s.z[i], positions)) for i in range(s, trace_s.n_layers)]
    latent = _accumulate(layers)
    _assert_content_untouched(trace_c, s, content_before)
    return _decode_clip(model, latent, content.fps, style.style_label)


def _scaled_style_latent(model, clip, alpha, s):
    s = _style_start(model, s)
    trace = _clip_trace(model, clip, "input")
    content_before = trace.z[:s].copy()
    layers = [(1.0 if i < s else float(alpha), trace.z[i]) for i in range(trace.n_layers)]
    latent = _accumulate(layers)
    _assert_content_untouched(trace, s, content_before)
    return latent


def content_extract(model: MotionCodec, clip: MotionClip, s=None) -> MotionClip:
    """Decode using only the content books; the style contribution is zeroed."""
    latent = _scaled_style_latent(model, clip, 0.0, s)
    return _decode_clip(model, latent, clip.fps, None)


def style_interpolation(model: MotionCodec, clip: MotionClip, alpha: float,
                        s=None) -> MotionClip:
    """Scale the style codes by alpha before decoding.

    alpha=0 reduces to content extraction and alpha=1 to reconstruction,
    both as exact equalities. Values outside [0, 1] extrapolate; they are
    accepted with a warning.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        warnings.warn(
            f"alpha={alpha} is outside [0, 1]; extrapolating the style direction",
            stacklevel=2,
        )
    latent = _scaled_style_latent(model, clip, alpha, s)
    return _decode_clip(model, latent, clip.fps, clip.style_label)


def style_inversion(model: MotionCodec, clip: MotionClip, s=None) -> MotionClip:
    """Subtract the style codes instead of adding them (scale by -1)."""
    latent = _scaled_style_latent(model, clip, -1.0, s)
    return _decode_clip(model, latent, clip.fps, clip.style_label)


def style_transition(model: MotionCodec, content: MotionClip,
                     script: TransitionScript, s=None) -> MotionClip:
    """Per-slot style codes chosen by the script's segments, one decode.

    Segment boundaries are hard cuts in code space; the decoder's receptive
    field is what smooths the seam in the output.
    """
    s = _style_start(model, s)
    trace_c = _clip_trace(model, content, "content")
    content_before = trace_c.z[:s].copy()
    k = trace_c.r.shape[-2]
    script.validate(k)

    style_traces = [_clip_trace(model, seg.style, f"segment {i} style")
                    for i, seg in enumerate(script.segments)]
    n_style = trace_c.n_layers - s
    d = trace_c.r.shape[-1]
    style_z = np.zeros((n_style, 1, k, d), dtype=trace_c.z.dtype)
    for seg, trace_s in zip(script.segments, style_traces):
        span = np.arange(seg.start, seg.stop)
        for j in range(n_style):
            style_z[j][:, span] = _tile_slots(trace_s.z[s + j], span)

    layers = [(1.0, trace_c.z[i]) for i in range(s)]
    layers += [(1.0, style_z[j]) for j in range(n_style)]
    latent = _accumulate(layers)
    _assert_content_untouched(trace_c, s, content_before)

    labels = {seg.style.style_label for seg in script.segments}
    label = labels.pop() if len(labels) == 1 else None
    return _decode_clip(model, latent, content.fps, label)


def motion_blend(model: MotionCodec, clip_a: MotionClip | None,
                 clip_b: MotionClip | None) -> MotionClip:
    """Concatenate the full latent code sequences of two clips and decode once.

    The output spans T_A + T_B frames. An empty (or None) clip contributes
    nothing, so blending with one reduces to plain reconstruction.
    """

    def is_empty(c):
        return c is None or c.frame_count == 0

    if is_empty(clip_a) and is_empty(clip_b):
        raise StructuralError("cannot blend two empty clips")
    parts = [c for c in (clip_a, clip_b) if not is_empty(c)]
    if len(parts) == 2 and parts[0].fps != parts[1].fps:
        raise StructuralError(
            f"cannot blend clips at different frame rates ({parts[0].fps} vs {parts[1].fps})"
        )
    latents = []
    for clip in parts:
        trace = _clip_trace(model, clip, "blend input")
        latents.append(_accumulate([(1.0, trace.z[i]) for i in range(trace.n_layers)]))
    latent = latents[0] if len(latents) == 1 else np.concatenate(latents, axis=1)
    labels = {c.style_label for c in parts}
    label = labels.pop() if len(labels) == 1 else None
    return _decode_clip(model, latent, parts[0].fps, label)


def random_style_augmentation(model: MotionCodec, content: MotionClip, rng,
                              segment_len: int, s=None, want_indices: bool = False):
    """Keep the content codes, randomize the style codes segment by segment.

    Each span of ``segment_len`` slots gets one uniformly drawn code per
    style book, held constant across the span. Deterministic for a given
    seed. With ``want_indices`` the drawn index table [style layers,
    segments] is returned alongside the clip.
    """
    if segment_len < 1:
        raise ConfigurationError(f"segment_len must be >= 1, got {segment_len}")
    rng = np.random.default_rng(rng)
    s = _style_start(model, s)
    trace = _clip_trace(model, content, "content")
    content_before = trace.z[:s].copy()
    k = trace.r.shape[-2]
    n = trace.n_layers
    x = model.config.codes_per_book
    starts = np.arange(0, k, segment_len)
    segment_of_slot = np.arange(k) // segment_len

    draws = rng.integers(0, x, size=(n - s, starts.size))
    layers = [(1.0, trace.z[i]) for i in range(s)]
    for j in range(n - s):
        codes = model.stack.books[s + j].codes[draws[j]]  # [segments, d]
        layers.append((1.0, codes[segment_of_slot][None]))
    latent = _accumulate(layers)
    _assert_content_untouched(trace, s, content_before)
    clip = _decode_clip(model, latent, content.fps, None)
    return (clip, draws) if want_indices else clip


def content_interpolation(model: MotionCodec, clip_a: MotionClip, clip_b: MotionClip,
                          beta: float, s=None, style_from: str = "a") -> MotionClip:
    """Blend the content codes of two equal-length clips; keep one style.

    The content latent is (1 - beta) * A + beta * B per book. Style codes
    come from clip A by default (``style_from="b"`` switches them).
    """
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"beta must be in [0, 1], got {beta}")
    if style_from not in ("a", "b"):
        raise ConfigurationError(f'style_from must be "a" or "b", got {style_from!r}')
    s = _style_start(model, s)
    trace_a = _clip_trace(model, clip_a, "first")
    trace_b = _clip_trace(model, clip_b, "second")
    if trace_a.r.shape[-2] != trace_b.r.shape[-2]:
        raise StructuralError(
            f"content interpolation needs equal slot counts, got "
            f"{trace_a.r.shape[-2]} and {trace_b.r.shape[-2]}"
        )
    style_trace = trace_a if style_from == "a" else trace_b
    style_clip = clip_a if style_from == "a" else clip_b
    content_before = style_trace.z[:s].copy()

    layers = []
    for i in range(s):
        layers.append((1.0 - beta, trace_a.z[i]))
        layers.append((beta, trace_b.z[i]))
    layers += [(1.0, style_trace.z[i]) for i in range(s, style_trace.n_layers)]
    latent = _accumulate(layers)
    _assert_content_untouched(style_trace, s, content_before)
    fps = clip_a.fps
    return _decode_clip(model, latent, fps, style_clip.style_label)
