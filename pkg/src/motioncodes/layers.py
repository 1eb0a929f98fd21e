"""Minimal neural building blocks with explicit forward and backward.

Everything operates on [batch, channels, time] arrays. Layers hold their
parameters as ``Param`` objects; a backward call accumulates into
``param.grad`` and returns the gradient with respect to the input, so a
model is differentiated by calling backwards in reverse order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StructuralError


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def _he_init(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _replicate_pad(x, pad):
    if pad == 0:
        return x
    left = np.repeat(x[:, :, :1], pad, axis=2)
    right = np.repeat(x[:, :, -1:], pad, axis=2)
    return np.concatenate([left, x, right], axis=2)


def _replicate_pad_backward(gp, pad):
    if pad == 0:
        return gp
    gx = gp[:, :, pad:-pad].copy()
    gx[:, :, 0] += gp[:, :, :pad].sum(axis=2)
    gx[:, :, -1] += gp[:, :, -pad:].sum(axis=2)
    return gx


class Conv1d:
    """Strided 1-d convolution with replicate padding."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0, *, rng, dtype=np.float32):
        if kernel < 1 or stride < 1 or pad < 0:
            raise ConfigurationError("kernel and stride must be >= 1, pad >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.weight = Param(_he_init(rng, (out_channels, in_channels, kernel), in_channels * kernel, dtype))
        self.bias = Param(np.zeros(out_channels, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def out_length(self, t):
        return (t + 2 * self.pad - self.kernel) // self.stride + 1

    def forward(self, x, want_cache=False):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise StructuralError(
                f"expected [B, {self.in_channels}, T], got {x.shape}"
            )
        padded = _replicate_pad(x, self.pad)
        t_out = self.out_length(x.shape[2])
        if t_out < 1:
            raise StructuralError(f"input length {x.shape[2]} too short for this layer")
        starts = np.arange(t_out) * self.stride
        # cols: [B, C_in, k, T_out]
        cols = padded[:, :, starts[None, :] + np.arange(self.kernel)[:, None]]
        y = np.tensordot(self.weight.value, cols, axes=([1, 2], [1, 2]))
        y = y.transpose(1, 0, 2) + self.bias.value[None, :, None]
        if want_cache:
            return y, (x.shape, cols)
        return y

    def backward(self, cache, gy):
        x_shape, cols = cache
        self.weight.grad += np.tensordot(gy, cols, axes=([0, 2], [0, 3]))
        self.bias.grad += gy.sum(axis=(0, 2))
        # gcols: [B, C_in, k, T_out]
        gcols = np.tensordot(gy, self.weight.value, axes=([1], [0])).transpose(0, 2, 3, 1)
        gp = np.zeros((x_shape[0], self.in_channels, x_shape[2] + 2 * self.pad), dtype=gy.dtype)
        starts = np.arange(gcols.shape[3]) * self.stride
        for j in range(self.kernel):
            np.add.at(gp, (slice(None), slice(None), starts + j), gcols[:, :, j, :])
        return _replicate_pad_backward(gp, self.pad)


class ConvTranspose1d:
    """Strided transposed convolution, cropping ``crop`` frames per side."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, crop=0, *, rng, dtype=np.float32):
        if kernel < 1 or stride < 1 or crop < 0:
            raise ConfigurationError("kernel and stride must be >= 1, crop >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.crop = crop
        self.weight = Param(_he_init(rng, (in_channels, out_channels, kernel), in_channels, dtype))
        self.bias = Param(np.zeros(out_channels, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def out_length(self, t):
        return (t - 1) * self.stride + self.kernel - 2 * self.crop

    def forward(self, x, want_cache=False):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise StructuralError(
                f"expected [B, {self.in_channels}, T], got {x.shape}"
            )
        b, _, t = x.shape
        full = (t - 1) * self.stride + self.kernel
        y = np.zeros((b, self.out_channels, full), dtype=x.dtype)
        # cols: [B, T, C_out, k]
        cols = np.tensordot(x, self.weight.value, axes=([1], [0]))
        starts = np.arange(t) * self.stride
        for j in range(self.kernel):
            np.add.at(y, (slice(None), slice(None), starts + j), cols[:, :, :, j].transpose(0, 2, 1))
        if self.crop:
            y = y[:, :, self.crop:full - self.crop]
        y = y + self.bias.value[None, :, None]
        if y.shape[2] < 1:
            raise StructuralError(f"input length {t} too short for this layer")
        if want_cache:
            return y, (x, full)
        return y

    def backward(self, cache, gy):
        x, full = cache
        self.bias.grad += gy.sum(axis=(0, 2))
        if self.crop:
            g_full = np.zeros((gy.shape[0], self.out_channels, full), dtype=gy.dtype)
            g_full[:, :, self.crop:full - self.crop] = gy
        else:
            g_full = gy
        t = x.shape[2]
        starts = np.arange(t) * self.stride
        # windows of the padded output gradient: [B, C_out, k, T]
        win = g_full[:, :, starts[None, :] + np.arange(self.kernel)[:, None]]
        self.weight.grad += np.tensordot(x, win, axes=([0, 2], [0, 3]))
        return np.tensordot(win, self.weight.value, axes=([1, 2], [1, 2])).transpose(0, 2, 1)


class Linear:
    def __init__(self, in_features, out_features, *, rng, dtype=np.float32):
        self.weight = Param(_he_init(rng, (out_features, in_features), in_features, dtype))
        self.bias = Param(np.zeros(out_features, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, want_cache=False):
        y = x @ self.weight.value.T + self.bias.value
        if want_cache:
            return y, x
        return y

    def backward(self, cache, gy):
        x = cache
        flat_x = x.reshape(-1, x.shape[-1])
        flat_g = gy.reshape(-1, gy.shape[-1])
        self.weight.grad += flat_g.T @ flat_x
        self.bias.grad += flat_g.sum(axis=0)
        return gy @ self.weight.value


def relu(x, want_cache=False):
    y = np.maximum(x, 0.0)
    if want_cache:
        return y, x > 0.0
    return y


def relu_backward(cache, gy):
    return gy * cache


@dataclass
class Adam:
    """Adam over a fixed parameter list; state indexed by position."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params):
        if not self.m:
            self.m = [np.zeros_like(p.value) for p in params]
            self.v = [np.zeros_like(p.value) for p in params]
        if len(self.m) != len(params):
            raise StructuralError("optimizer state does not match parameter list")
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.value -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def clip_global_norm(arrays, max_norm):
    """Scale all gradient arrays in place so their joint norm is bounded.

    Returns the pre-clip global norm.
    """
    if max_norm <= 0.0:
        raise ConfigurationError(f"max_norm must be positive, got {max_norm}")
    total = 0.0
    for a in arrays:
        total += float(np.sum(a.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for a in arrays:
            a *= scale
    return norm
