"""Style classifier and the metric suite for judging transfers.

Metrics follow their textbook definitions directly so they can be checked
against literal per-element oracles: style accuracy is a top-k hit rate,
content deviation compares integrated world root trajectories meter for
meter, and the reconstruction error is a mean global joint-position
distance after forward kinematics.
"""

from __future__ import annotations

import csv
import json
import warnings
import zipfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from .codec import _Coder
from .disentangle import pool_style_embedding
from .errors import (
    CheckpointError,
    ConfigurationError,
    StructuralError,
    UndefinedResultError,
)
from .features import Normalizer, assemble_features, disassemble_features
from .kinematics import fk_positions_6d, root_trajectory
from .layers import Adam, Conv1d, ConvTranspose1d, Linear, clip_global_norm

CLASSIFIER_VERSION = 1

__all__ = [
    "ClassifierConfig",
    "StyleClassifier",
    "EvalReport",
    "train_classifier",
    "style_accuracy",
    "content_deviation",
    "cross_classification",
    "reconstruction_l2p",
    "export_embeddings",
    "per_style_report",
    "PerStyleReport",
    "linear_probe_accuracy",
    "save_classifier",
    "load_classifier",
]


@dataclass
class ClassifierConfig:
    channels: tuple = (64, 128, 256, 256)
    deconv_channels: tuple = (128, 64, 64)
    kernel: int = 4
    learning_rate: float = 1e-3
    batch_size: int = 32
    steps: int = 300
    grad_clip: float = 1.0
    heldout_fraction: float = 0.2
    seed: int = 0

    def validate(self):
        if len(self.channels) != 4 or len(self.deconv_channels) != 3:
            raise ConfigurationError("classifier uses 4 conv and 3 deconv layers")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ConfigurationError(
                f"heldout_fraction must be in [0, 1), got {self.heldout_fraction}"
            )
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigurationError("steps must be >= 0 and batch_size >= 1")


def _build_trunk(feature_dim, cfg, rng, dtype):
    steps = []
    ch_in = feature_dim
    for ch in cfg.channels:
        steps.append(("conv", Conv1d(ch_in, ch, cfg.kernel, 2, 1, rng=rng, dtype=dtype)))
        steps.append(("relu", None))
        ch_in = ch
    for ch in cfg.deconv_channels:
        steps.append(("tconv", ConvTranspose1d(ch_in, ch, cfg.kernel, 2, 1, rng=rng, dtype=dtype)))
        steps.append(("relu", None))
        ch_in = ch
    return _Coder(steps), ch_in


@dataclass
class StyleClassifier:
    """Sequence classifier over feature windows; outputs label probabilities."""

    labels: list
    config: ClassifierConfig
    feature_dim: int
    normalizer: Normalizer
    trunk: _Coder
    head: Linear
    heldout_accuracy: float | None = None
    dtype: np.dtype = np.dtype(np.float32)

    @classmethod
    def create(cls, labels, feature_dim, config=None, dtype=np.float32):
        config = config or ClassifierConfig()
        config.validate()
        labels = sorted(set(labels))
        if len(labels) < 2:
            raise ConfigurationError("classifier needs at least 2 labels")
        rng = np.random.default_rng(config.seed)
        dtype = np.dtype(dtype)
        trunk, ch_out = _build_trunk(feature_dim, config, rng, dtype)
        head = Linear(ch_out, len(labels), rng=rng, dtype=dtype)
        return cls(
            labels=labels, config=config, feature_dim=feature_dim,
            normalizer=Normalizer(
                mean=np.zeros(feature_dim), std=np.ones(feature_dim)
            ),
            trunk=trunk, head=head, dtype=dtype,
        )

    def params(self):
        return self.trunk.params() + self.head.params()

    def _logits(self, features, want_cache=False):
        features = np.asarray(features)
        if features.ndim != 3 or features.shape[2] != self.feature_dim:
            raise StructuralError(
                f"expected features [B, T, {self.feature_dim}], got {features.shape}"
            )
        if features.shape[1] < 2 ** len(self.config.channels):
            raise StructuralError(
                f"window of {features.shape[1]} frames is too short for "
                f"{len(self.config.channels)} stride-2 layers"
            )
        x = self.normalizer.normalize(features).astype(self.dtype)
        h = x.transpose(0, 2, 1)
        if want_cache:
            h, trunk_cache = self.trunk.forward(h, want_cache=True)
            pooled = h.mean(axis=2)
            logits, head_cache = self.head.forward(pooled, want_cache=True)
            return logits, (trunk_cache, head_cache, h.shape)
        pooled = self.trunk.forward(h).mean(axis=2)
        return self.head.forward(pooled)

    def _backward(self, cache, grad_logits):
        trunk_cache, head_cache, h_shape = cache
        g_pooled = self.head.backward(head_cache, grad_logits)
        g_h = np.broadcast_to(
            g_pooled[:, :, None] / h_shape[2], h_shape
        ).astype(self.dtype)
        self.trunk.backward(trunk_cache, g_h)

    def predict_proba(self, features):
        """Probability rows over the label alphabet, one per window."""
        logits = self._logits(np.asarray(features, dtype=float))
        shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict_clip_proba(self, clips):
        """Per-clip probabilities; clips may differ in length."""
        if not clips:
            raise UndefinedResultError("no clips to classify")
        rows = [self.predict_proba(assemble_features(c)[None])[0] for c in clips]
        return np.stack(rows)


def train_classifier(features, labels, config=None, dtype=np.float32):
    """Fit a style classifier on labeled windows.

    Deterministic for a given config seed. The held-out accuracy of the
    final weights is stored on the returned classifier.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if features.ndim != 3 or features.shape[0] != labels.shape[0]:
        raise StructuralError("features [M, T, F] with one label per window required")
    alphabet = sorted(set(labels.tolist()))
    if len(alphabet) < 2:
        raise ConfigurationError("classifier training needs at least 2 distinct labels")

    clf = StyleClassifier.create(alphabet, features.shape[2], config, dtype)
    cfg = clf.config
    rng = np.random.default_rng([cfg.seed, 1])
    index_of = {label: i for i, label in enumerate(clf.labels)}
    y = np.array([index_of[label] for label in labels.tolist()])

    # stratified held-out split so every label appears in both parts
    train_idx, held_idx = [], []
    for value in range(len(clf.labels)):
        members = rng.permutation(np.nonzero(y == value)[0])
        cut = int(round(len(members) * cfg.heldout_fraction))
        if len(members) > 1 and cut == 0 and cfg.heldout_fraction > 0:
            cut = 1
        held_idx.extend(members[:cut])
        train_idx.extend(members[cut:])
    train_idx = np.array(sorted(train_idx))
    held_idx = np.array(sorted(held_idx))
    if train_idx.size == 0:
        raise ConfigurationError("held-out split left no training windows")

    clf.normalizer = Normalizer.fit(features[train_idx])
    params = clf.params()
    optimizer = Adam(lr=cfg.learning_rate)
    for _ in range(cfg.steps):
        batch = rng.integers(0, train_idx.size, size=cfg.batch_size)
        idx = train_idx[batch]
        for p in params:
            p.zero_grad()
        logits, cache = clf._logits(features[idx], want_cache=True)
        shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        probs = np.exp(log_probs)
        grad = (probs - np.eye(len(clf.labels))[y[idx]]) / idx.size
        clf._backward(cache, grad.astype(clf.dtype))
        clip_global_norm([p.grad for p in params], cfg.grad_clip)
        optimizer.step(params)

    if held_idx.size:
        proba = clf.predict_proba(features[held_idx])
        hits = np.argmax(proba, axis=1) == y[held_idx]
        clf.heldout_accuracy = float(np.mean(hits) * 100.0)
    return clf


def _predictions(classifier, clips):
    proba = classifier.predict_clip_proba(clips)
    return proba, np.argmax(proba, axis=1)


def style_accuracy(classifier, generated_clips, target_labels, k=1):
    """Top-1 and top-k hit rates (percent) against the requested styles."""
    if len(generated_clips) != len(target_labels):
        raise StructuralError(
            f"{len(generated_clips)} clips vs {len(target_labels)} target labels"
        )
    if not generated_clips:
        raise UndefinedResultError("style accuracy over zero clips is undefined")
    if not 1 <= k <= len(classifier.labels):
        raise ConfigurationError(
            f"k must be in 1..{len(classifier.labels)}, got {k}"
        )
    index_of = {label: i for i, label in enumerate(classifier.labels)}
    try:
        want = np.array([index_of[label] for label in target_labels])
    except KeyError as exc:
        raise ConfigurationError(f"target label {exc} not in classifier alphabet") from None
    proba, top1 = _predictions(classifier, generated_clips)
    order = np.argsort(-proba, axis=1)
    in_topk = (order[:, :k] == want[:, None]).any(axis=1)
    return (
        float(np.mean(top1 == want) * 100.0),
        float(np.mean(in_topk) * 100.0),
    )


def content_deviation(generated, content):
    """Mean distance in meters between the world root trajectories."""
    a = root_trajectory(generated)
    b = root_trajectory(content)
    if a.shape[0] != b.shape[0]:
        warnings.warn(
            f"clip lengths differ ({a.shape[0]} vs {b.shape[0]} frames); "
            "truncating to the shorter",
            stacklevel=2,
        )
        t = min(a.shape[0], b.shape[0])
        a, b = a[:t], b[:t]
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def cross_classification(classifier, generated_clips, content_labels):
    """Percent of clips still classified as their CONTENT clip's style."""
    if len(generated_clips) != len(content_labels):
        raise StructuralError(
            f"{len(generated_clips)} clips vs {len(content_labels)} content labels"
        )
    if not generated_clips:
        raise UndefinedResultError("cross-classification over zero clips is undefined")
    _, top1 = _predictions(classifier, generated_clips)
    predicted = [classifier.labels[i] for i in top1]
    hits = [p == want for p, want in zip(predicted, content_labels)]
    return float(np.mean(hits) * 100.0)


def reconstruction_l2p(model, clips, n_books=None):
    """Mean global joint-position error (meters) of n-book reconstructions.

    Positions are recovered by forward kinematics from the reconstructed
    rotations and root, then compared to the clip's stored positions.
    """
    if not clips:
        raise UndefinedResultError("reconstruction error over zero clips is undefined")
    errors = []
    for clip in clips:
        rec_feats = model.reconstruct_features(assemble_features(clip)[None], n_books)
        rec = disassemble_features(rec_feats[0], model.skeleton, clip.fps)
        pos = fk_positions_6d(rec.r6, rec.p[:, 0], model.skeleton)
        errors.append(float(np.mean(np.linalg.norm(pos - clip.p, axis=-1))))
    return float(np.mean(errors))


def export_embeddings(model, clips, path):
    """Write pooled residuals per (clip, layer) as comma-separated text.

    Header: layer,label,dim_0..dim_{d-1}. One row per clip and residual
    level 0..N, so clips x (N+1) rows follow the header. The file is meant
    for external projection tools.
    """
    if not clips:
        raise UndefinedResultError("nothing to export")
    d = model.config.latent_dim
    header = ["layer", "label"] + [f"dim_{i}" for i in range(d)]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for clip in clips:
            trace = model.quantize_features(assemble_features(clip)[None])
            for layer in range(trace.n_layers + 1):
                pooled = pool_style_embedding(trace, layer)[0]
                writer.writerow(
                    [layer, clip.style_label or ""] + [repr(float(v)) for v in pooled]
                )


@dataclass
class PerStyleReport:
    rows: list  # (label, mean_deviation, sample_count, above_subset_mean)
    subset_mean: float
    flagged_count: int


def per_style_report(deviations_by_label):
    """Per-label mean deviations, sorted worst first, with the subset mean.

    Labels whose mean exceeds the subset mean are flagged and counted.
    """
    if not deviations_by_label:
        raise StructuralError("no labels to report")
    means = {}
    pooled = []
    for label, values in deviations_by_label.items():
        values = list(values)
        if not values:
            raise StructuralError(f"label {label!r} has no samples")
        means[label] = float(np.mean(values))
        pooled.extend(values)
    subset_mean = float(np.mean(pooled))
    rows = []
    for label in sorted(means, key=lambda name: (-means[name], name)):
        rows.append(
            (label, means[label], len(deviations_by_label[label]), means[label] > subset_mean)
        )
    return PerStyleReport(
        rows=rows, subset_mean=subset_mean,
        flagged_count=sum(1 for row in rows if row[3]),
    )


def linear_probe_accuracy(features, labels, seed=0, steps=400, lr=0.5,
                          heldout_fraction=0.25):
    """Held-out accuracy (percent) of a multinomial linear probe.

    A deliberately weak read-out: if even this recovers the labels from the
    given features, the information is present in easily accessible form.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise StructuralError("probe needs features [M, D] with one label each")
    alphabet = sorted(set(labels.tolist()))
    if len(alphabet) < 2:
        raise ConfigurationError("probe needs at least 2 distinct labels")
    index_of = {label: i for i, label in enumerate(alphabet)}
    y = np.array([index_of[label] for label in labels.tolist()])
    rng = np.random.default_rng(seed)

    train_idx, held_idx = [], []
    for value in range(len(alphabet)):
        members = rng.permutation(np.nonzero(y == value)[0])
        cut = max(1, int(round(len(members) * heldout_fraction))) if len(members) > 1 else 0
        held_idx.extend(members[:cut])
        train_idx.extend(members[cut:])
    train_idx = np.array(sorted(train_idx))
    held_idx = np.array(sorted(held_idx))
    if train_idx.size == 0 or held_idx.size == 0:
        raise ConfigurationError("not enough samples for a held-out probe")

    mean = features[train_idx].mean(axis=0)
    scale = features[train_idx].std(axis=0) + 1e-8
    x = (features - mean) / scale
    w = np.zeros((len(alphabet), features.shape[1]))
    b = np.zeros(len(alphabet))
    onehot = np.eye(len(alphabet))[y[train_idx]]
    xt = x[train_idx]
    for _ in range(steps):
        logits = xt @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        g = (probs - onehot) / xt.shape[0]
        w -= lr * (g.T @ xt)
        b -= lr * g.sum(axis=0)
    held_pred = np.argmax(x[held_idx] @ w.T + b, axis=1)
    return float(np.mean(held_pred == y[held_idx]) * 100.0)


@dataclass
class EvalReport:
    """Metric bundle for one evaluation run; percentages in [0, 100]."""

    style_acc_top1: float
    style_acc_topk: float
    topk: int
    content_dev_mean: float
    content_dev_std: float
    cross_cls: float
    rec_err_l2p: float
    per_style: list = field(default_factory=list)  # (label, mean_deviation)

    def validate(self):
        for name in ("style_acc_top1", "style_acc_topk", "cross_cls"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise StructuralError(f"{name}={value} outside [0, 100]")
        if self.content_dev_std < 0.0:
            raise StructuralError("deviation std cannot be negative")

    def to_json(self):
        self.validate()
        payload = {
            "style_acc_top1": self.style_acc_top1,
            "style_acc_topk": self.style_acc_topk,
            "topk": self.topk,
            "content_dev_mean": self.content_dev_mean,
            "content_dev_std": self.content_dev_std,
            "cross_cls": self.cross_cls,
            "rec_err_l2p": self.rec_err_l2p,
            "per_style": [list(row) for row in self.per_style],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        report = cls(
            style_acc_top1=data["style_acc_top1"],
            style_acc_topk=data["style_acc_topk"],
            topk=data["topk"],
            content_dev_mean=data["content_dev_mean"],
            content_dev_std=data["content_dev_std"],
            cross_cls=data["cross_cls"],
            rec_err_l2p=data["rec_err_l2p"],
            per_style=[tuple(row) for row in data.get("per_style", [])],
        )
        report.validate()
        return report


def save_classifier(classifier, path):
    """Persist classifier weights, labels, and normalization to one file."""
    arrays = {
        "format_version": np.int64(CLASSIFIER_VERSION),
        "labels_json": np.bytes_(json.dumps(classifier.labels).encode()),
        "config_json": np.bytes_(
            json.dumps(
                {
                    "channels": list(classifier.config.channels),
                    "deconv_channels": list(classifier.config.deconv_channels),
                    "kernel": classifier.config.kernel,
                    "learning_rate": classifier.config.learning_rate,
                    "batch_size": classifier.config.batch_size,
                    "steps": classifier.config.steps,
                    "grad_clip": classifier.config.grad_clip,
                    "heldout_fraction": classifier.config.heldout_fraction,
                    "seed": classifier.config.seed,
                }
            ).encode()
        ),
        "feature_dim": np.int64(classifier.feature_dim),
        "dtype": np.bytes_(str(classifier.dtype).encode()),
        "heldout_accuracy": np.float64(
            -1.0 if classifier.heldout_accuracy is None else classifier.heldout_accuracy
        ),
        "norm_mean": classifier.normalizer.mean,
        "norm_std": classifier.normalizer.std,
    }
    for i, p in enumerate(classifier.params()):
        arrays[f"param_{i}"] = p.value
    np.savez(path, **arrays)


def load_classifier(path):
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read classifier {path}: {exc}") from None
    try:
        version = int(data["format_version"])
        if version != CLASSIFIER_VERSION:
            raise CheckpointError(
                f"classifier version {version} unsupported (expected {CLASSIFIER_VERSION})"
            )
        raw = json.loads(bytes(data["config_json"]).decode())
        config = ClassifierConfig(
            channels=tuple(raw["channels"]),
            deconv_channels=tuple(raw["deconv_channels"]),
            kernel=raw["kernel"],
            learning_rate=raw["learning_rate"],
            batch_size=raw["batch_size"],
            steps=raw["steps"],
            grad_clip=raw["grad_clip"],
            heldout_fraction=raw["heldout_fraction"],
            seed=raw["seed"],
        )
        clf = StyleClassifier.create(
            json.loads(bytes(data["labels_json"]).decode()),
            int(data["feature_dim"]),
            config,
            dtype=np.dtype(bytes(data["dtype"]).decode()),
        )
        clf.normalizer = Normalizer(mean=data["norm_mean"], std=data["norm_std"])
        held = float(data["heldout_accuracy"])
        clf.heldout_accuracy = None if held < 0 else held
        for i, p in enumerate(clf.params()):
            stored = data[f"param_{i}"]
            if stored.shape != p.value.shape:
                raise CheckpointError(
                    f"param_{i} shape {stored.shape} does not match {p.value.shape}"
                )
            p.value[...] = stored
    except CheckpointError:
        raise
    except KeyError as exc:
        raise CheckpointError(f"classifier file {path} is missing field {exc}") from None
    except (ValueError, OSError, zipfile.BadZipFile, zlib.error) as exc:
        raise CheckpointError(f"classifier file {path} is corrupt: {exc}") from None
    finally:
        data.close()
    return clf
