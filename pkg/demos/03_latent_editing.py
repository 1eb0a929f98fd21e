"""Latent edits beyond plain transfer: scaling, inverting, randomizing style.

All of these operate on the quantized codes of a single clip, so no second
clip is needed.
"""

import numpy as np

from _common import trained_model
from motioncodes.ops import (
    content_extract,
    random_style_augmentation,
    style_interpolation,
    style_inversion,
)
from motioncodes.synthetic import generate_synthetic

model = trained_model()
clip = generate_synthetic(1, 3, 240, seed=321)  # turning walk, bouncy

# Dial the style in and out. alpha=0 strips it, alpha=1 reproduces the
# clip, values in between attenuate.
print("style interpolation sweep (joint position delta vs alpha=1):")
full = style_interpolation(model, clip, 1.0)
for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
    out = style_interpolation(model, clip, alpha)
    delta = float(np.mean(np.linalg.norm(out.p - full.p, axis=-1)))
    print(f"  alpha={alpha:4.2f}: {delta:.4f} m")

plain = content_extract(model, clip)
inverted = style_inversion(model, clip)
swing = float(np.mean(np.abs(inverted.p - plain.p)))
print(f"\ninversion pushes {swing:.4f} m past the extracted content on average")

# Random style: redraw the style-layer codes segment by segment.
redressed, draws = random_style_augmentation(
    model, clip, rng=7, segment_len=8, want_indices=True
)
print(f"augmentation drew codes of shape {draws.shape} (layers x segments)")
print(f"augmented clip differs from input by "
      f"{float(np.mean(np.linalg.norm(redressed.p - clip.p, axis=-1))):.4f} m")
