"""Residual vector quantization: ordered codebooks over latent slot vectors.

Layer i quantizes the residual left by layers 0..i-1 against its own book;
the decoded latent is the sum of selected codes. Code 0 of every book is a
pinned zero vector (never trained, never reset), which makes the final
remainder norm non-increasing in depth and an all-zero correction always
representable. Books learn by exponential moving averages of their assigned
residuals; gradient-based updates (contrastive/MI routes) are applied by the
training step and re-synced into the EMA state there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError, StructuralError

_CHUNK = 64  # queries per distance block, bounds peak memory


@dataclass
class Codebook:
    codes: np.ndarray  # [X, d]; row 0 pinned to zero
    ema_count: np.ndarray  # [X], N in the moving-average update
    ema_mean: np.ndarray  # [X, d], mu in the moving-average update
    usage: np.ndarray  # [X] int64 hits since the reset window opened
    window_batches: int = 0  # training batches seen since the window opened
    initialized: bool = False  # data-dependent init happened?

    @classmethod
    def create(cls, size: int, dim: int, dtype=np.float64) -> "Codebook":
        if size < 2:
            raise ConfigurationError(f"codebook needs at least 2 codes, got {size}")
        return cls(
            codes=np.zeros((size, dim), dtype=dtype),
            ema_count=np.ones(size, dtype=dtype),
            ema_mean=np.zeros((size, dim), dtype=dtype),
            usage=np.zeros(size, dtype=np.int64),
        )

    @property
    def size(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]


@dataclass
class RvqStack:
    books: list[Codebook]
    gamma: float = 0.99  # EMA decay
    content_books: int = 1  # s: books below this index carry content

    def __post_init__(self):
        if not self.books:
            raise ConfigurationError("stack needs at least one codebook")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 1 <= self.content_books <= len(self.books):
            raise ConfigurationError(
                f"content_books must be in 1..{len(self.books)}, got {self.content_books}"
            )
        dims = {b.dim for b in self.books}
        if len(dims) != 1:
            raise StructuralError(f"codebook dims differ: {sorted(dims)}")

    @classmethod
    def create(cls, num_layers: int, size: int, dim: int, gamma: float = 0.99,
               content_books: int = 1, dtype=np.float64) -> "RvqStack":
        if num_layers < 1:
            raise ConfigurationError(f"need at least one layer, got {num_layers}")
        return cls(
            books=[Codebook.create(size, dim, dtype) for _ in range(num_layers)],
            gamma=gamma,
            content_books=content_books,
        )

    @property
    def num_layers(self) -> int:
        return len(self.books)

    @property
    def dim(self) -> int:
        return self.books[0].dim


@dataclass
class QuantizationTrace:
    """Per-layer record of one encode: residuals r[0..n], codes z[0..n-1],
    indices idx[0..n-1]. Leading axes of r0 are preserved."""

    r: np.ndarray  # [n+1, ..., K, d]
    z: np.ndarray  # [n,   ..., K, d]
    idx: np.ndarray  # [n, ..., K] int64
    n_layers: int
    stack_layers: int  # N of the producing stack

    def code_sum(self, layers) -> np.ndarray:
        """Sum of z over `layers` in ascending index order."""
        layers = sorted(set(int(i) for i in layers))
        out = np.zeros_like(self.r[0])
        for i in layers:
            if not 0 <= i < self.n_layers:
                raise ConfigurationError(
                    f"layer {i} outside trace with {self.n_layers} layers"
                )
            out = out + self.z[i]
        return out


def nearest_code(book: Codebook, queries: np.ndarray) -> np.ndarray:
    """Index of the closest code per query row [M, d]; ties break to the
    lowest index. Distances are exact per-pair squared distances (chunked),
    the same arithmetic as an exhaustive scan."""
    queries = np.asarray(queries)
    if queries.ndim != 2 or queries.shape[1] != book.dim:
        raise StructuralError(f"queries shape {queries.shape} vs dim {book.dim}")
    out = np.empty(queries.shape[0], dtype=np.int64)
    for lo in range(0, queries.shape[0], _CHUNK):
        block = queries[lo:lo + _CHUNK]  # [m, d]
        diff = block[:, None, :] - book.codes[None, :, :]
        d2 = np.sum(diff * diff, axis=2)
        out[lo:lo + _CHUNK] = np.argmin(d2, axis=1)
    return out


def quantize_one(book: Codebook, r: np.ndarray):
    """(index, code) for a single vector."""
    idx = int(nearest_code(book, np.asarray(r)[None, :])[0])
    return idx, book.codes[idx].copy()


def residual_encode(stack: RvqStack, r0: np.ndarray, n_layers: int) -> QuantizationTrace:
    """Quantize r0 (..., K, d) through the first n_layers books."""
    if not 1 <= n_layers <= stack.num_layers:
        raise ConfigurationError(
            f"n_layers must be in 1..{stack.num_layers}, got {n_layers}"
        )
    r0 = np.asarray(r0)
    if r0.shape[-1] != stack.dim:
        raise StructuralError(f"latent dim {r0.shape[-1]} vs stack dim {stack.dim}")
    if not np.all(np.isfinite(r0)):
        raise NumericError("non-finite latent input to residual_encode")
    lead = r0.shape[:-1]
    r = np.empty((n_layers + 1,) + r0.shape, dtype=r0.dtype)
    z = np.empty((n_layers,) + r0.shape, dtype=r0.dtype)
    idx = np.empty((n_layers,) + lead, dtype=np.int64)
    r[0] = r0
    for i in range(n_layers):
        flat = r[i].reshape(-1, stack.dim)
        sel = nearest_code(stack.books[i], flat)
        idx[i] = sel.reshape(lead)
        z[i] = stack.books[i].codes[sel].reshape(r0.shape)
        r[i + 1] = r[i] - z[i]
    return QuantizationTrace(r=r, z=z, idx=idx, n_layers=n_layers,
                             stack_layers=stack.num_layers)


def sample_active_layers(num_layers: int, rng: np.random.Generator) -> int:
    """Uniform draw from {1, ..., num_layers}."""
    if num_layers < 1:
        raise ConfigurationError(f"num_layers must be >= 1, got {num_layers}")
    return int(rng.integers(1, num_layers + 1))


def commitment_loss(trace: QuantizationTrace) -> float:
    """Mean over active layers and slots of the squared distance between the
    layer input and its selected code (gradient side handled by the trainer)."""
    diff = trace.r[1:trace.n_layers + 1]  # r[i] - z[i] telescopes to r[i+1]
    per_slot = np.sum(diff * diff, axis=-1)
    return float(np.mean(per_slot))


def commitment_grad_r0(trace: QuantizationTrace) -> np.ndarray:
    """Encoder-side gradient of commitment_loss under frozen assignments:
    every active layer's term reaches r0 through the frozen-code chain."""
    count = trace.n_layers * int(np.prod(trace.r.shape[1:-1]))
    return 2.0 * np.sum(trace.r[1:trace.n_layers + 1], axis=0) / count


def init_book_from_batch(book: Codebook, residuals: np.ndarray,
                         rng: np.random.Generator) -> None:
    """Data-dependent init: code 0 stays zero, the rest are residual samples."""
    residuals = np.asarray(residuals).reshape(-1, book.dim)
    if residuals.shape[0] < 1:
        raise StructuralError("cannot initialize a codebook from zero residuals")
    pick = rng.integers(0, residuals.shape[0], size=book.size - 1)
    book.codes[0] = 0.0
    book.codes[1:] = residuals[pick]
    book.ema_count[:] = 1.0
    book.ema_mean[:] = book.codes
    book.usage[:] = 0
    book.window_batches = 0
    book.initialized = True


def ema_update(stack: RvqStack, trace: QuantizationTrace) -> None:
    """Moving-average update of every layer active in the trace.

    For codes hit this batch: N <- g*N + (1-g)*count, mu <- g*mu + (1-g)*sum,
    c <- mu/N. Unhit codes keep their code vector bit-exactly (their N and mu
    decay together, which leaves mu/N unchanged). Code 0 is pinned. Usage and
    window counters advance here; inference paths never call this."""
    g = stack.gamma
    for i in range(trace.n_layers):
        book = stack.books[i]
        flat_idx = trace.idx[i].reshape(-1)
        flat_r = trace.r[i].reshape(-1, book.dim)
        counts = np.bincount(flat_idx, minlength=book.size).astype(book.codes.dtype)
        sums = np.zeros_like(book.ema_mean)
        np.add.at(sums, flat_idx, flat_r)
        hit = counts > 0
        hit[0] = False  # pinned zero code keeps frozen statistics
        decay_only = ~hit
        decay_only[0] = False
        book.ema_count[decay_only] *= g
        book.ema_mean[decay_only] *= g
        book.ema_count[hit] = g * book.ema_count[hit] + (1.0 - g) * counts[hit]
        book.ema_mean[hit] = g * book.ema_mean[hit] + (1.0 - g) * sums[hit]
        book.codes[hit] = book.ema_mean[hit] / book.ema_count[hit][:, None]
        book.usage += counts.astype(np.int64)
        book.window_batches += 1


def reset_dead_codes(book: Codebook, batch_residuals: np.ndarray,
                     rng: np.random.Generator, threshold: int = 1) -> int:
    """Reseed codes with usage below `threshold` from uniformly drawn batch
    residuals, then reopen the usage window. Returns the number reseeded."""
    residuals = np.asarray(batch_residuals).reshape(-1, book.dim)
    if residuals.shape[0] < 1:
        raise StructuralError("cannot reset codes from zero residuals")
    dead = book.usage < threshold
    dead[0] = False  # pinned
    idx = np.nonzero(dead)[0]
    for code in idx:
        sample = residuals[int(rng.integers(0, residuals.shape[0]))]
        book.codes[code] = sample
        book.ema_count[code] = 1.0
        book.ema_mean[code] = sample
    book.usage[:] = 0
    book.window_batches = 0
    return int(idx.size)


def soft_assignment(book: Codebook, queries: np.ndarray, tau: float) -> np.ndarray:
    """Softmax over negative squared distances / tau, per query row [M, d]."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    queries = np.asarray(queries)
    diff = queries[:, None, :] - book.codes[None, :, :]
    logits = -np.sum(diff * diff, axis=2) / tau
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def route_grad_to_codes(grad_codes: np.ndarray, idx: np.ndarray,
                        upstream: np.ndarray) -> None:
    """Accumulate per-slot upstream gradients onto their selected codes
    (the selection route of the quantizer's backward)."""
    flat_idx = np.asarray(idx).reshape(-1)
    flat_g = np.asarray(upstream).reshape(-1, grad_codes.shape[1])
    np.add.at(grad_codes, flat_idx, flat_g)
