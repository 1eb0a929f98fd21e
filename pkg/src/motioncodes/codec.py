"""Convolutional motion autoencoder around a residual quantizer.

The model normalizes feature windows, encodes them with strided 1D
convolutions to a latent sequence, quantizes the latent through a stack
of residual codebooks, and decodes the summed codes back to features.
Training combines reconstruction, kinematic-consistency, smoothness,
commitment, contrastive, and mutual-information terms, all with
hand-written backward passes.
"""

from __future__ import annotations

import json
import zipfile
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from .disentangle import multipos_contrastive, mutual_info_loss, pool_style_embedding
from .errors import (
    CheckpointError,
    ConfigurationError,
    NumericError,
    StructuralError,
    UndefinedResultError,
)
from .features import FeatureLayout, Normalizer, feature_weights
from .kinematics import (
    finite_diff,
    finite_diff_backward,
    fk_positions_6d,
    fk_positions_6d_backward,
)
from .layers import Adam, Conv1d, ConvTranspose1d, clip_global_norm, relu, relu_backward
from .rvq import (
    RvqStack,
    commitment_grad_r0,
    commitment_loss,
    ema_update,
    init_book_from_batch,
    residual_encode,
    reset_dead_codes,
    route_grad_to_codes,
    sample_active_layers,
)
from .skeleton import Skeleton

CHECKPOINT_VERSION = 1

LOSS_NAMES = ("rec", "fk", "vel", "acc", "commit", "con", "mi")


@dataclass
class CodecConfig:
    """Model and training settings. Defaults follow the large-corpus profile."""

    latent_dim: int = 256
    conv_channels: int = 512
    num_books: int = 8
    codes_per_book: int = 512
    downsample_factor: int = 4
    content_books: int = 1
    learning_rate: float = 1e-4
    grad_clip: float = 1.0
    gamma: float = 0.99
    tau_con: float = 0.1
    tau_mi: float = 1.0
    w_rec: float = 1.0
    w_fk: float = 0.01
    w_vel: float = 0.1
    w_acc: float = 0.05
    w_commit: float = 0.05
    w_con: float = 0.005
    w_mi: float = 0.02
    emphasis_weight: float = 2.0  # feature weight on root velocity and up groups
    window: int = 64
    batch_size: int = 32
    fps: float = 30.0
    reset_interval: int = 64
    contrastive_layers: str = "first"
    seed: int = 0

    def validate(self):
        for name in ("w_rec", "w_fk", "w_vel", "w_acc", "w_commit", "w_con", "w_mi"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.latent_dim < 1 or self.conv_channels < 1:
            raise ConfigurationError("latent_dim and conv_channels must be >= 1")
        if self.num_books < 1 or self.codes_per_book < 2:
            raise ConfigurationError("need >= 1 codebooks of >= 2 codes")
        if not 1 <= self.content_books < self.num_books:
            raise ConfigurationError(
                f"content_books must lie in [1, {self.num_books}), got {self.content_books}"
            )
        stages = self.downsample_factor.bit_length() - 1
        if self.downsample_factor < 2 or 2 ** stages != self.downsample_factor:
            raise ConfigurationError(
                f"downsample_factor must be a power of two >= 2, got {self.downsample_factor}"
            )
        if self.window % self.downsample_factor != 0:
            raise ConfigurationError(
                f"window {self.window} not divisible by factor {self.downsample_factor}"
            )
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ConfigurationError("learning_rate and grad_clip must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.tau_con <= 0 or self.tau_mi <= 0:
            raise ConfigurationError("temperatures must be positive")
        if self.contrastive_layers not in ("first", "all"):
            raise ConfigurationError(
                f"contrastive_layers must be 'first' or 'all', got {self.contrastive_layers!r}"
            )
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2")
        if self.fps <= 0:
            raise ConfigurationError("fps must be positive")
        if self.reset_interval < 1:
            raise ConfigurationError("reset_interval must be >= 1")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


# named profiles mirroring the dual-valued published table plus a
# desk-scale setup for the synthetic corpus
PROFILES = {
    "100style": {},
    "aberman": {"num_books": 4, "codes_per_book": 256, "w_con": 0.05, "w_mi": 0.12},
    "synthetic": {
        "num_books": 4,
        "codes_per_book": 64,
        "latent_dim": 32,
        "conv_channels": 64,
        "batch_size": 32,
        "window": 64,
        "w_con": 0.05,
        # the leakage penalty needs recalibrating at this latent scale:
        # nearest-code distances sit around 0.3, so the unit temperature
        # blurs assignments flat and reports almost no leakage to fight
        "w_mi": 0.5,
        "tau_mi": 0.05,
        "learning_rate": 3e-4,
    },
}


def profile_config(name, **overrides):
    if name not in PROFILES:
        raise ConfigurationError(f"unknown profile {name!r}, have {sorted(PROFILES)}")
    known = {f.name for f in fields(CodecConfig)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigurationError(f"unknown config override {unknown[0]!r}")
    cfg = CodecConfig(**{**PROFILES[name], **overrides})
    cfg.validate()
    return cfg


class _ResBlock:
    def __init__(self, channels, rng, dtype):
        self.conv_a = Conv1d(channels, channels, 3, 1, 1, rng=rng, dtype=dtype)
        self.conv_b = Conv1d(channels, channels, 1, rng=rng, dtype=dtype)

    def params(self):
        return self.conv_a.params() + self.conv_b.params()

    def forward(self, x, want_cache=False):
        h, ca = self.conv_a.forward(x, want_cache=True)
        h, cr = relu(h, want_cache=True)
        h, cb = self.conv_b.forward(h, want_cache=True)
        y = x + h
        if want_cache:
            return y, (ca, cr, cb)
        return y

    def backward(self, cache, gy):
        ca, cr, cb = cache
        g = self.conv_b.backward(cb, gy)
        g = relu_backward(cr, g)
        g = self.conv_a.backward(ca, g)
        return gy + g


class _Coder:
    """Shared trunk logic for the encoder and decoder stacks."""

    def __init__(self, steps):
        self.steps = steps  # list of ("layer", obj) or ("relu", None)

    def params(self):
        out = []
        for kind, obj in self.steps:
            if kind != "relu":
                out.extend(obj.params())
        return out

    def forward(self, x, want_cache=False):
        caches = []
        for kind, obj in self.steps:
            if kind == "relu":
                x, c = relu(x, want_cache=True)
            else:
                x, c = obj.forward(x, want_cache=True)
            caches.append(c)
        if want_cache:
            return x, caches
        return x

    def backward(self, caches, gy):
        for (kind, obj), c in zip(reversed(self.steps), reversed(caches)):
            if kind == "relu":
                gy = relu_backward(c, gy)
            else:
                gy = obj.backward(c, gy)
        return gy


def _build_encoder(feature_dim, cfg, rng, dtype):
    stages = cfg.downsample_factor.bit_length() - 1
    steps = []
    ch_in = feature_dim
    for _ in range(stages):
        steps.append(("conv", Conv1d(ch_in, cfg.conv_channels, 4, 2, 1, rng=rng, dtype=dtype)))
        steps.append(("relu", None))
        ch_in = cfg.conv_channels
    steps.append(("res", _ResBlock(cfg.conv_channels, rng, dtype)))
    steps.append(("res", _ResBlock(cfg.conv_channels, rng, dtype)))
    steps.append(("proj", Conv1d(cfg.conv_channels, cfg.latent_dim, 1, rng=rng, dtype=dtype)))
    return _Coder(steps)


def _build_decoder(feature_dim, cfg, rng, dtype):
    stages = cfg.downsample_factor.bit_length() - 1
    steps = [("proj", Conv1d(cfg.latent_dim, cfg.conv_channels, 1, rng=rng, dtype=dtype))]
    steps.append(("res", _ResBlock(cfg.conv_channels, rng, dtype)))
    steps.append(("res", _ResBlock(cfg.conv_channels, rng, dtype)))
    for i in range(stages):
        last = i == stages - 1
        ch_out = feature_dim if last else cfg.conv_channels
        tconv = ConvTranspose1d(cfg.conv_channels, ch_out, 4, 2, 1, rng=rng, dtype=dtype)
        if last:
            # temper the initial output scale: a fresh decoder that roars at
            # ~50x the data scale makes the first optimizer phase crush the
            # latent pathway and settle on mean playback
            tconv.weight.value *= 0.05
        steps.append(("tconv", tconv))
        if not last:
            steps.append(("relu", None))
    return _Coder(steps)


@dataclass
class MotionCodec:
    config: CodecConfig
    skeleton: Skeleton
    layout: FeatureLayout
    normalizer: Normalizer
    normalizer_fitted: bool
    encoder: _Coder
    decoder: _Coder
    stack: RvqStack
    optimizer: Adam
    rng: np.random.Generator
    dtype: np.dtype
    step_count: int = 0

    @classmethod
    def create(cls, config: CodecConfig, skeleton: Skeleton, dtype=np.float32):
        config.validate()
        layout = FeatureLayout(skeleton.joint_count)
        dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.seed)
        encoder = _build_encoder(layout.dim, config, rng, dtype)
        decoder = _build_decoder(layout.dim, config, rng, dtype)
        stack = RvqStack.create(
            config.num_books,
            config.codes_per_book,
            config.latent_dim,
            gamma=config.gamma,
            content_books=config.content_books,
            dtype=dtype,
        )
        norm = Normalizer(mean=np.zeros(layout.dim), std=np.ones(layout.dim))
        return cls(
            config=config,
            skeleton=skeleton,
            layout=layout,
            normalizer=norm,
            normalizer_fitted=False,
            encoder=encoder,
            decoder=decoder,
            stack=stack,
            optimizer=Adam(lr=config.learning_rate),
            rng=rng,
            dtype=dtype,
        )

    def net_params(self):
        return self.encoder.params() + self.decoder.params()

    def fit_normalizer(self, features):
        self.normalizer = Normalizer.fit(np.asarray(features).reshape(-1, self.layout.dim))
        self.normalizer_fitted = True

    def _check_features(self, x):
        x = np.asarray(x)
        if x.ndim != 3 or x.shape[2] != self.layout.dim:
            raise StructuralError(
                f"expected features [B, T, {self.layout.dim}], got {x.shape}"
            )
        if x.shape[1] % self.config.downsample_factor != 0:
            raise StructuralError(
                f"length {x.shape[1]} not divisible by factor {self.config.downsample_factor}"
            )
        return x

    def encode_features(self, features, want_cache=False):
        """Raw feature windows [B, T, F] to the latent sequence [B, K, d]."""
        x = self._check_features(features)
        x_norm = self.normalizer.normalize(x).astype(self.dtype)
        h = x_norm.transpose(0, 2, 1)
        if want_cache:
            r0, cache = self.encoder.forward(h, want_cache=True)
            return r0.transpose(0, 2, 1), cache, x_norm
        return self.encoder.forward(h).transpose(0, 2, 1)

    def quantize_features(self, features, n_layers=None):
        n = self.config.num_books if n_layers is None else n_layers
        r0 = self.encode_features(features)
        return residual_encode(self.stack, r0, n)

    def decode_latent(self, latent, want_cache=False):
        """Latent sequence [B, K, d] to denormalized features [B, T, F]."""
        latent = np.asarray(latent, dtype=self.dtype)
        if latent.ndim != 3 or latent.shape[2] != self.config.latent_dim:
            raise StructuralError(
                f"expected latent [B, K, {self.config.latent_dim}], got {latent.shape}"
            )
        h = latent.transpose(0, 2, 1)
        if want_cache:
            y, cache = self.decoder.forward(h, want_cache=True)
            return self.normalizer.denormalize(y.transpose(0, 2, 1)), cache
        y = self.decoder.forward(h)
        return self.normalizer.denormalize(y.transpose(0, 2, 1))

    def reconstruct_features(self, features, n_books=None):
        trace = self.quantize_features(features, n_books)
        latent = trace.code_sum(range(trace.n_layers))
        return self.decode_latent(latent)


def _fk_family_losses(model, x_raw, x_hat_den, want_grad=False):
    """fk / vel / acc terms on denormalized features; optional gradient
    with respect to the denormalized reconstruction."""
    layout, skel, fps = model.layout, model.skeleton, model.config.fps
    b, t, _ = x_raw.shape
    j = layout.joint_count
    p_true = x_raw[..., layout.p].reshape(b, t, j, 3)
    r6_hat = x_hat_den[..., layout.r6].reshape(b, t, j, 6)
    root_hat = x_hat_den[..., layout.p][..., 0:3]
    pfk, fk_cache = fk_positions_6d(r6_hat, root_hat, skel, want_cache=True)

    diff_fk = pfk - p_true
    loss_fk = float(np.mean(diff_fk ** 2))
    vel_hat = finite_diff(pfk, fps, axis=1)
    vel_true = finite_diff(p_true, fps, axis=1)
    diff_vel = vel_hat - vel_true
    loss_vel = float(np.mean(diff_vel ** 2))
    acc_hat = finite_diff(vel_hat, fps, axis=1)
    loss_acc = float(np.mean(acc_hat ** 2))  # smoothness of the output alone
    losses = {"fk": loss_fk, "vel": loss_vel, "acc": loss_acc}
    if not want_grad:
        return losses, None

    cfg = model.config
    g_pfk = cfg.w_fk * 2.0 * diff_fk / diff_fk.size
    g_vel = cfg.w_vel * 2.0 * diff_vel / diff_vel.size
    g_vel = g_vel + finite_diff_backward(cfg.w_acc * 2.0 * acc_hat / acc_hat.size, fps, axis=1)
    g_pfk = g_pfk + finite_diff_backward(g_vel, fps, axis=1)
    g_r6, g_root = fk_positions_6d_backward(fk_cache, skel, g_pfk)
    grad_den = np.zeros_like(x_hat_den)
    grad_den[..., layout.r6] = g_r6.reshape(b, t, 6 * j)
    grad_den[..., layout.p.start:layout.p.start + 3] = g_root
    return losses, grad_den


def loss_suite(model, features, reconstruction):
    """Named reconstruction losses between raw features and a raw
    reconstruction: rec (weighted, normalized space), fk, vel, acc."""
    x = model._check_features(features)
    x_hat = np.asarray(reconstruction)
    if x_hat.shape != x.shape:
        raise StructuralError(f"reconstruction shape {x_hat.shape} != {x.shape}")
    weights = feature_weights(model.layout, model.config.emphasis_weight)
    d_norm = (model.normalizer.normalize(x_hat) - model.normalizer.normalize(x)) * weights
    rec = float(np.mean(d_norm ** 2))
    fk_losses, _ = _fk_family_losses(model, x, x_hat.astype(np.float64))
    return {"rec": rec, **fk_losses}


def _init_books_from_first_batch(model, r0):
    """One-time codebook seeding from the first batch's residual chain."""
    r = r0.reshape(-1, model.config.latent_dim).astype(model.dtype)
    for book in model.stack.books:
        if not book.initialized:
            init_book_from_batch(book, r, model.rng)
        dist = (
            np.sum(r * r, axis=1, keepdims=True)
            - 2.0 * (r @ book.codes.T)
            + np.sum(book.codes * book.codes, axis=1)[None, :]
        )
        r = r - book.codes[np.argmin(dist, axis=1)]


def compute_step_gradients(model, features, labels, n_layers):
    """Forward and backward of the full training objective at a fixed
    number of active layers.

    Accumulates into the network parameter gradients (after zeroing
    them) and returns ``(losses, book_grads, aux)`` where ``aux``
    carries the trace and the raw routing gradients. Mutates nothing
    else; useful directly for gradient verification and ablations.
    """
    cfg = model.config
    x = model._check_features(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.shape != (x.shape[0],):
        raise StructuralError("one style label per window required")
    s = cfg.content_books
    n = n_layers

    for p in model.net_params():
        p.zero_grad()

    r0, enc_cache, x_norm = model.encode_features(x, want_cache=True)
    trace = residual_encode(model.stack, r0, n)
    latent = trace.code_sum(range(n))
    x_hat_norm_cn = model.decoder.forward(latent.transpose(0, 2, 1), want_cache=True)
    x_hat_norm, dec_cache = x_hat_norm_cn[0].transpose(0, 2, 1), x_hat_norm_cn[1]

    # reconstruction in normalized space, kinematic family on meters
    weights = feature_weights(model.layout, cfg.emphasis_weight)
    d_rec = (x_hat_norm.astype(np.float64) - x_norm.astype(np.float64)) * weights
    loss_rec = float(np.mean(d_rec ** 2))
    x_hat_den = model.normalizer.denormalize(x_hat_norm.astype(np.float64))
    fk_losses, grad_den = _fk_family_losses(model, x, x_hat_den, want_grad=True)
    loss_commit = commitment_loss(trace)

    loss_con = 0.0
    grad_emb = None
    con_layers = []
    if cfg.w_con > 0 and n > s:
        con_layers = [s] if cfg.contrastive_layers == "first" else list(range(s, n))
    if con_layers:
        per_layer = []
        try:
            for layer in con_layers:
                emb = pool_style_embedding(trace, layer)
                value, g = multipos_contrastive(emb, labels, cfg.tau_con)
                per_layer.append((layer, g))
                loss_con += value / len(con_layers)
            grad_emb = per_layer
        except UndefinedResultError:
            loss_con, grad_emb, con_layers = 0.0, None, []

    loss_mi = 0.0
    mi_grads = None
    if cfg.w_mi > 0 and np.unique(labels).size >= 2:
        mi_grads = []
        k = r0.shape[1]
        flat_labels = np.repeat(labels, k)
        for i in range(min(s, n)):
            ri = trace.r[i].reshape(-1, cfg.latent_dim)
            value, g_r, g_c = mutual_info_loss(ri, flat_labels, model.stack.books[i].codes, cfg.tau_mi)
            loss_mi += value / s
            mi_grads.append((i, g_r.reshape(r0.shape) / s, g_c / s))

    losses = {
        "rec": loss_rec,
        "fk": fk_losses["fk"],
        "vel": fk_losses["vel"],
        "acc": fk_losses["acc"],
        "commit": loss_commit,
        "con": loss_con,
        "mi": loss_mi,
    }
    for name, value in losses.items():
        if not np.isfinite(value):
            raise NumericError(f"non-finite {name} loss at step {model.step_count}")
    total = sum(getattr(cfg, f"w_{name}") * value for name, value in losses.items())
    losses["total"] = float(total)

    # backward: decoder path
    grad_hat_norm = cfg.w_rec * 2.0 * d_rec * weights / d_rec.size
    grad_hat_norm = grad_hat_norm + grad_den * model.normalizer.std
    g_latent = model.decoder.backward(dec_cache, grad_hat_norm.transpose(0, 2, 1).astype(model.dtype))
    g_latent = g_latent.transpose(0, 2, 1)

    book_grads = [np.zeros_like(b.codes) for b in model.stack.books]
    # straight-through: the summed code passes the decoder gradient to the
    # encoder once; through the residual chain only the last active
    # codebook keeps a +1 route, earlier ones cancel
    grad_r0 = g_latent.astype(np.float64).copy()
    route_grad_to_codes(book_grads[n - 1], trace.idx[n - 1], g_latent.astype(np.float64))

    grad_r0 += cfg.w_commit * commitment_grad_r0(trace)

    if grad_emb is not None:
        k = r0.shape[1]
        for layer, g in grad_emb:
            g_slot = (cfg.w_con / len(con_layers)) * np.repeat(g[:, None, :], k, axis=1) / k
            # residual enters codebook `layer`; upstream gradient dies at
            # the preceding quantize node, leaving a -1 route into it
            route_grad_to_codes(book_grads[layer - 1], trace.idx[layer - 1], -g_slot)

    if mi_grads:
        for i, g_r, g_c in mi_grads:
            book_grads[i] += cfg.w_mi * g_c
            if i == 0:
                grad_r0 += cfg.w_mi * g_r
            else:
                route_grad_to_codes(book_grads[i - 1], trace.idx[i - 1], -cfg.w_mi * g_r)

    model.encoder.backward(enc_cache, grad_r0.transpose(0, 2, 1).astype(model.dtype))

    for g in book_grads:
        g[0] = 0.0  # the zero code stays pinned

    aux = {
        "trace": trace,
        "n_layers": n,
        "grad_latent": g_latent,
        "grad_r0": grad_r0,
    }
    return losses, book_grads, aux


def train_step(model, features, labels, hooks=None):
    """One optimization step; returns a report of every loss term.

    Order of mutations: gradient step first, then the EMA codebook
    update, then the dead-code reset check.
    """
    cfg = model.config
    n = sample_active_layers(cfg.num_books, model.rng)
    if not all(b.initialized for b in model.stack.books):
        probe = model.encode_features(np.asarray(features, dtype=np.float64))
        _init_books_from_first_batch(model, probe)

    losses, book_grads, aux = compute_step_gradients(model, features, labels, n)
    trace = aux["trace"]

    params = model.net_params()
    grad_norm = clip_global_norm([p.grad for p in params] + book_grads, cfg.grad_clip)

    model.optimizer.step(params)
    for book, g in zip(model.stack.books, book_grads):
        moved = np.any(g != 0.0, axis=1)
        if moved.any():
            book.codes[moved] -= (cfg.learning_rate * g[moved]).astype(book.codes.dtype)
            # keep the tracked mean consistent so the next EMA application
            # does not erase the gradient step
            book.ema_mean[moved] = book.codes[moved] * book.ema_count[moved, None]
    if hooks:
        hooks("grad")

    ema_update(model.stack, trace)
    if hooks:
        hooks("ema")

    resets = {}
    for i in range(n):
        book = model.stack.books[i]
        if book.window_batches >= cfg.reset_interval:
            count = reset_dead_codes(book, trace.r[i].reshape(-1, cfg.latent_dim), model.rng)
            if count:
                resets[i] = count
    if hooks:
        hooks("reset")

    model.step_count += 1
    usage = [
        float(np.count_nonzero(np.bincount(trace.idx[i].reshape(-1), minlength=cfg.codes_per_book)))
        / cfg.codes_per_book
        for i in range(n)
    ]
    return {
        "step": model.step_count,
        "n_layers": n,
        "losses": losses,
        "grad_norm": grad_norm,
        "batch_code_usage": usage,
        "resets": resets,
    }


class StratifiedSampler:
    """Batches that give every sampled label at least a matching pair."""

    def __init__(self, labels, batch_size, rng):
        labels = np.asarray(labels)
        self.groups = []
        for value in np.unique(labels):
            self.groups.append(np.nonzero(labels == value)[0])
        if not self.groups:
            raise StructuralError("no windows to sample from")
        self.batch_size = batch_size
        self.rng = rng

    def next_batch(self):
        picked = []
        order = self.rng.permutation(len(self.groups))
        i = 0
        while len(picked) < self.batch_size:
            group = self.groups[order[i % len(self.groups)]]
            take = min(2, self.batch_size - len(picked))
            replace_draw = len(group) < take
            picked.extend(self.rng.choice(group, size=take, replace=replace_draw))
            i += 1
        return np.array(picked[: self.batch_size])


def train(model, features, labels, steps, hooks=None, on_report=None):
    """Drive train_step over stratified batches; returns all reports."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    if features.ndim != 3 or features.shape[0] != labels.shape[0]:
        raise StructuralError("features [M, T, F] with one label per window required")
    if not model.normalizer_fitted:
        model.fit_normalizer(features)
    sampler = StratifiedSampler(labels, model.config.batch_size, model.rng)
    reports = []
    for _ in range(steps):
        batch = sampler.next_batch()
        report = train_step(model, features[batch], labels[batch], hooks=hooks)
        reports.append(report)
        if on_report:
            on_report(report)
    return reports


def fine_tune(model, features, labels, steps, hooks=None, on_report=None):
    """Continue training on new data with a fresh optimizer state.

    The fitted normalizer is kept so features stay on the original scale.
    """
    model.optimizer = Adam(lr=model.config.learning_rate)
    return train(model, features, labels, steps, hooks=hooks, on_report=on_report)


def save_checkpoint(model, path):
    """Write the complete training state to a single npz container."""
    arrays = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "config_json": np.bytes_(model.config.to_json().encode()),
        "skeleton_json": np.bytes_(
            json.dumps(
                {
                    "parents": [int(v) for v in model.skeleton.parents],
                    "rest_offsets": np.asarray(model.skeleton.rest_offsets).tolist(),
                    "names": list(model.skeleton.names),
                },
                sort_keys=True,
            ).encode()
        ),
        "rng_json": np.bytes_(json.dumps(model.rng.bit_generator.state).encode()),
        "dtype": np.bytes_(model.dtype.str.encode()),
        "step_count": np.int64(model.step_count),
        "norm_mean": model.normalizer.mean,
        "norm_std": model.normalizer.std,
        "norm_fitted": np.bool_(model.normalizer_fitted),
        "adam_steps": np.int64(model.optimizer.step_count),
    }
    for i, p in enumerate(model.net_params()):
        arrays[f"param_{i}"] = p.value
    for i, m in enumerate(model.optimizer.m):
        arrays[f"adam_m_{i}"] = m
    for i, v in enumerate(model.optimizer.v):
        arrays[f"adam_v_{i}"] = v
    for i, book in enumerate(model.stack.books):
        arrays[f"book{i}_codes"] = book.codes
        arrays[f"book{i}_count"] = book.ema_count
        arrays[f"book{i}_mean"] = book.ema_mean
        arrays[f"book{i}_usage"] = book.usage
        arrays[f"book{i}_window"] = np.int64(book.window_batches)
        arrays[f"book{i}_init"] = np.bool_(book.initialized)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, expect_config=None):
    """Rebuild a model from a checkpoint file.

    ``expect_config`` guards against silently loading a checkpoint with
    incompatible shapes into a pipeline built for different settings.
    """
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    try:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )
        config = CodecConfig.from_json(bytes(data["config_json"]).decode())
        if expect_config is not None:
            for name in ("num_books", "codes_per_book", "latent_dim", "conv_channels",
                         "downsample_factor"):
                have, want = getattr(config, name), getattr(expect_config, name)
                if have != want:
                    raise CheckpointError(
                        f"checkpoint {name}={have} does not match expected {want}"
                    )
        skel_data = json.loads(bytes(data["skeleton_json"]).decode())
        skeleton = Skeleton(
            parents=[int(v) for v in skel_data["parents"]],
            rest_offsets=np.array(skel_data["rest_offsets"], dtype=np.float64),
            names=list(skel_data["names"]),
        )
        model = MotionCodec.create(config, skeleton, dtype=np.dtype(bytes(data["dtype"]).decode()))
        model.normalizer = Normalizer(mean=data["norm_mean"], std=data["norm_std"])
        model.normalizer_fitted = bool(data["norm_fitted"])
        model.step_count = int(data["step_count"])
        model.rng.bit_generator.state = json.loads(bytes(data["rng_json"]).decode())
        params = model.net_params()
        for i, p in enumerate(params):
            stored = data[f"param_{i}"]
            if stored.shape != p.value.shape:
                raise CheckpointError(
                    f"param_{i} shape {stored.shape} does not match model {p.value.shape}"
                )
            p.value[...] = stored
        model.optimizer.step_count = int(data["adam_steps"])
        if "adam_m_0" in data:
            model.optimizer.m = [data[f"adam_m_{i}"].copy() for i in range(len(params))]
            model.optimizer.v = [data[f"adam_v_{i}"].copy() for i in range(len(params))]
        for i, book in enumerate(model.stack.books):
            codes = data[f"book{i}_codes"]
            if codes.shape != book.codes.shape:
                raise CheckpointError(
                    f"codebook {i} shape {codes.shape} does not match model {book.codes.shape}"
                )
            book.codes[...] = codes
            book.ema_count[...] = data[f"book{i}_count"]
            book.ema_mean[...] = data[f"book{i}_mean"]
            book.usage[...] = data[f"book{i}_usage"]
            book.window_batches = int(data[f"book{i}_window"])
            book.initialized = bool(data[f"book{i}_init"])
    except CheckpointError:
        raise
    except KeyError as exc:
        raise CheckpointError(f"checkpoint {path} is missing field {exc}") from None
    except (ValueError, OSError, zipfile.BadZipFile, zlib.error) as exc:
        raise CheckpointError(f"checkpoint {path} is corrupt: {exc}") from None
    finally:
        data.close()
    return model
