"""Differentiable building blocks on channel-last ``(N, H, W, C)`` arrays.

Every layer records what it needs during ``forward`` and consumes it in
``backward(dy)``, which returns the input gradient and *accumulates*
parameter gradients into the shared :class:`~uwdiff.nn.params.Params` store.
One forward must precede each backward.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from .params import Params

__all__ = [
    "Layer",
    "Conv2d",
    "Pointwise",
    "Dense",
    "LayerNorm",
    "ChannelAttention",
    "SiLU",
    "AvgPool2",
    "Upsample2",
    "sinusoidal_embedding",
    "sigmoid",
]


sigmoid = expit


def _init_normal(rng, shape, fan_in, dtype):
    if rng is None:
        return np.zeros(shape, dtype=dtype)
    return (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(dtype)


class Layer:
    _cache = None

    def _take(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache

    def __call__(self, x):
        return self.forward(x)


class Conv2d(Layer):
    """``k x k`` convolution, stride 1, zero "same" padding.

    Weight layout ``(k, k, cin, cout)``.
    """

    def __init__(self, params: Params, name: str, cin: int, cout: int, k: int = 3, bias: bool = True, rng=None, zero_init: bool = False):
        if k % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.params, self.k, self.cin, self.cout = params, k, cin, cout
        self.w = f"{name}.w"
        self.b = f"{name}.b" if bias else None
        params.add(self.w, _init_normal(None if zero_init else rng, (k, k, cin, cout), k * k * cin, params.dtype))
        if bias:
            params.add(self.b, np.zeros(cout))

    def forward(self, x):
        n, h, w, c = x.shape
        if c != self.cin:
            raise ValueError(f"conv expects {self.cin} channels, got {c}")
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (self.k, self.k), axis=(1, 2))
        # (n, h, w, c, kh, kw) -> rows ordered (kh, kw, c) to match the weight layout
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, self.k * self.k * c)
        wmat = self.params[self.w].reshape(-1, self.cout)
        y = cols @ wmat
        if self.b is not None:
            y += self.params[self.b]
        self._cache = (cols, x.shape)
        return y.reshape(n, h, w, self.cout)

    def backward(self, dy):
        cols, (n, h, w, c) = self._take()
        k, p = self.k, self.k // 2
        dy2 = dy.reshape(-1, self.cout)
        self.params.grads[self.w] += (cols.T @ dy2).reshape(self.params[self.w].shape)
        if self.b is not None:
            self.params.grads[self.b] += dy2.sum(axis=0)
        dcols = (dy2 @ self.params[self.w].reshape(-1, self.cout).T).reshape(n, h, w, k, k, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dcols.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p : p + h, p : p + w, :]


class Pointwise(Layer):
    """Affine map over the last axis (a 1x1 convolution on feature maps)."""

    def __init__(self, params: Params, name: str, cin: int, cout: int, bias: bool = True, rng=None):
        self.params, self.cin, self.cout = params, cin, cout
        self.w = f"{name}.w"
        self.b = f"{name}.b" if bias else None
        params.add(self.w, _init_normal(rng, (cin, cout), cin, params.dtype))
        if bias:
            params.add(self.b, np.zeros(cout))

    def forward(self, x):
        y = x @ self.params[self.w]
        if self.b is not None:
            y += self.params[self.b]
        self._cache = x
        return y

    def backward(self, dy):
        x = self._take()
        x2 = x.reshape(-1, self.cin)
        dy2 = dy.reshape(-1, self.cout)
        self.params.grads[self.w] += x2.T @ dy2
        if self.b is not None:
            self.params.grads[self.b] += dy2.sum(axis=0)
        return dy @ self.params[self.w].T


Dense = Pointwise


class LayerNorm(Layer):
    """Normalise over channels at every position, then per-channel affine."""

    def __init__(self, params: Params, name: str, channels: int, eps: float = 1e-7):
        self.params, self.eps = params, eps
        self.g = f"{name}.g"
        self.b = f"{name}.b"
        params.add(self.g, np.ones(channels))
        params.add(self.b, np.zeros(channels))

    def normalize(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        return xc * inv, inv

    def forward(self, x):
        xhat, inv = self.normalize(x)
        self._cache = (xhat, inv)
        return xhat * self.params[self.g] + self.params[self.b]

    def backward(self, dy):
        xhat, inv = self._take()
        axes = tuple(range(dy.ndim - 1))
        self.params.grads[self.g] += (dy * xhat).sum(axis=axes)
        self.params.grads[self.b] += dy.sum(axis=axes)
        dxhat = dy * self.params[self.g]
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - m1 - xhat * m2)


class ChannelAttention(Layer):
    """Channel gate from globally pooled features.

    ``s = sigmoid(conv1d_over_channels(mean_hw(F)))``; the output is
    ``F + s`` (``gate="add"``) or ``F * s`` (``gate="mul"``), with ``s``
    broadcast over spatial positions. The 1-D kernel has odd size ``k`` and
    zero padding so the pooled vector keeps length ``C``.
    """

    def __init__(self, params: Params, name: str, k: int = 3, gate: str = "add", rng=None):
        if k % 2 != 1:
            raise ValueError("attention kernel size must be odd")
        if gate not in ("add", "mul"):
            raise ValueError(f"unknown gate {gate!r}")
        self.params, self.k, self.gate = params, k, gate
        self.w = f"{name}.w"
        self.b = f"{name}.b"
        params.add(self.w, _init_normal(rng, (k,), k, params.dtype))
        params.add(self.b, np.zeros(1))

    def gate_logits(self, pooled):
        """Same-padded 1-D cross-correlation along the channel axis."""
        p = self.k // 2
        gp = np.pad(pooled, ((0, 0), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(gp, self.k, axis=1)
        return win @ self.params[self.w] + self.params[self.b][0], win

    def forward(self, x):
        pooled = x.mean(axis=(1, 2))
        logits, win = self.gate_logits(pooled)
        s = sigmoid(logits)
        self._cache = (x if self.gate == "mul" else None, x.shape, win, s)
        s4 = s[:, None, None, :]
        return x + s4 if self.gate == "add" else x * s4

    def backward(self, dy):
        x, shape, win, s = self._take()
        n, h, w, c = shape
        p = self.k // 2
        s4 = s[:, None, None, :]
        if self.gate == "add":
            ds = dy.sum(axis=(1, 2))
            dx = dy.copy()
        else:
            ds = (dy * x).sum(axis=(1, 2))
            dx = dy * s4
        dlog = ds * s * (1.0 - s)
        self.params.grads[self.w] += np.einsum("nc,nck->k", dlog, win)
        self.params.grads[self.b] += dlog.sum()
        # scatter back through the padded correlation
        dgp = np.zeros((n, c + 2 * p), dtype=dlog.dtype)
        wk = self.params[self.w]
        for j in range(self.k):
            dgp[:, j : j + c] += dlog * wk[j]
        dpooled = dgp[:, p : p + c]
        dx += (dpooled / (h * w))[:, None, None, :]
        return dx


class SiLU(Layer):
    def forward(self, x):
        s = sigmoid(x)
        self._cache = (x, s)
        return x * s

    def backward(self, dy):
        x, s = self._take()
        return dy * (s * (1.0 + x * (1.0 - s)))


class AvgPool2(Layer):
    def forward(self, x):
        n, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"cannot 2x-pool a {h}x{w} map")
        self._cache = x.shape
        return x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def backward(self, dy):
        self._take()
        return np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) * 0.25


class Upsample2(Layer):
    """Nearest-neighbour 2x upsampling."""

    def forward(self, x):
        self._cache = x.shape
        return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)

    def backward(self, dy):
        n, h, w, c = self._take()
        return dy.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))


def sinusoidal_embedding(t, dim: int = 64, max_period: float = 10000.0) -> np.ndarray:
    """``(N, dim)`` sin/cos features of integer time steps."""
    if dim % 2:
        raise ValueError("embedding dimension must be even")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
