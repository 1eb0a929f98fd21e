"""Shared setup for the demo scripts: a small trained codec on synthetic data.

The first demo that runs trains a compact model (a few minutes on CPU) and
saves it next to this file; later demos reuse the checkpoint. Delete
demos/_out to retrain from scratch.
"""

import pathlib

import numpy as np

from motioncodes.codec import (
    MotionCodec,
    load_checkpoint,
    profile_config,
    save_checkpoint,
    train,
)
from motioncodes.features import assemble_features
from motioncodes.skeleton import window_dataset
from motioncodes.synthetic import default_skeleton, generate_synthetic

OUT = pathlib.Path(__file__).resolve().parent / "_out"
CONTENTS = range(4)
STYLES = range(4)
CLIPS_PER_PAIR = 6
FRAMES = 240


def dataset():
    clips = []
    for content in CONTENTS:
        for style in STYLES:
            for i in range(CLIPS_PER_PAIR):
                clips.append(generate_synthetic(content, style, FRAMES, seed=50 + i))
    return clips


def trained_model(steps=1200):
    OUT.mkdir(exist_ok=True)
    path = OUT / "codec.npz"
    if path.exists():
        return load_checkpoint(path)
    clips = dataset()
    windows = window_dataset(clips, 64, 16)
    feats = np.stack([assemble_features(w) for w in windows])
    labels = np.array([w.style_label for w in windows])
    model = MotionCodec.create(profile_config("synthetic", seed=11), default_skeleton())
    print(f"training demo codec: {steps} steps on {len(windows)} windows ...")
    reports = train(model, feats, labels, steps=steps)
    print(f"  done, final total loss {reports[-1]['losses']['total']:.4f}")
    save_checkpoint(model, path)
    return model
