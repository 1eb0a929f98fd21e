from contextlib import contextmanager

import numpy as np

from motioncodes.codec import (
    CodecConfig,
    MotionCodec,
    _init_books_from_first_batch,
    loss_suite,
)
from motioncodes.skeleton import Skeleton

TERMS = ("rec", "fk", "vel", "acc", "commit", "con", "mi")


def num_grad(f, x, eps=1e-6):
    """Central finite differences of scalar f at array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x)
        flat[i] = keep - eps
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def assert_close_grad(analytic, numeric, rel=1e-4, abs_tol=1e-7):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.abs(numeric), np.abs(analytic))
    err = np.abs(analytic - numeric)
    bad = err > abs_tol + rel * denom
    if np.any(bad):
        worst = np.unravel_index(np.argmax(err - rel * denom), err.shape)
        raise AssertionError(
            f"gradient mismatch at {worst}: analytic={analytic[worst]!r} "
            f"numeric={numeric[worst]!r} (max abs err {err.max():.3e})"
        )


def mini_model(seed=9, **overrides):
    """Tiny float64 model for gradient verification: d=8, X=4, N=2, J=3."""
    skel = Skeleton(
        parents=[0, 0, 1],
        rest_offsets=[[0.0, 0.0, 0.0], [0.1, 0.25, 0.0], [0.0, 0.3, 0.1]],
    )
    base = dict(
        latent_dim=8, conv_channels=6, num_books=2, codes_per_book=4,
        window=8, batch_size=3, w_con=0.05, w_mi=0.12, seed=seed,
        fps=1.0,  # keeps accel magnitudes O(1) so finite differences stay clean
    )
    base.update(overrides)
    cfg = CodecConfig(**base)
    return MotionCodec.create(cfg, skel, dtype=np.float64)


def mini_batch(model, b=3, seed=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(b, model.config.window, model.layout.dim))
    model.fit_normalizer(x)
    _init_books_from_first_batch(model, model.encode_features(x))
    labels = np.array([0, 0, 1][:b])
    return x, labels


@contextmanager
def only_terms(model, **weights):
    saved = {f"w_{t}": getattr(model.config, f"w_{t}") for t in TERMS}
    try:
        for key in saved:
            setattr(model.config, key, 0.0)
        for name, value in weights.items():
            setattr(model.config, f"w_{name}", value)
        yield
    finally:
        for key, value in saved.items():
            setattr(model.config, key, value)


def pinned(numeric):
    """Code 0 is the immutable zero code: its gradient is zero by contract."""
    out = np.asarray(numeric).copy()
    out[0] = 0.0
    return out


def decoder_path_loss(model, x, latent):
    out = model.decode_latent(latent)
    ls = loss_suite(model, x, out)
    cfg = model.config
    return (
        cfg.w_rec * ls["rec"] + cfg.w_fk * ls["fk"]
        + cfg.w_vel * ls["vel"] + cfg.w_acc * ls["acc"]
    )


@contextmanager
def swapped_value(param, new):
    saved = param.value
    param.value = new
    try:
        yield
    finally:
        param.value = saved
