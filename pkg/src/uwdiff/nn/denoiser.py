"""Conditional noise-prediction network.

Layout (``C`` = base width)::

    concat(x_t, c) -> 3x3 conv (6 -> C) + dense(sinusoid(t)) broadcast
    enc1 [C]  ---------------------------------------------+ skip
    pool, 1x1 (C -> 2C)                                    |
    enc2 [2C] -----------------------------+ skip          |
    pool, 1x1 (2C -> 4C)                   |               |
    enc3 [4C], enc4 [4C], dec1 [4C]        |               |
    up, 1x1 (4C -> 2C), + skip <-----------+               |
    dec2 [2C]                                              |
    up, 1x1 (2C -> C), + skip <----------------------------+
    dec3 [C], dec4 [C]
    3x3 conv head (C -> 3, no bias, zero-initialised)

Each ``enc*/dec*`` is a transformer block: pre-norm channel attention and a
pre-norm pointwise feed-forward, both residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .layers import (
    AvgPool2,
    ChannelAttention,
    Conv2d,
    Dense,
    LayerNorm,
    Pointwise,
    SiLU,
    Upsample2,
    sinusoidal_embedding,
)
from .params import Params

__all__ = ["DenoiserConfig", "TransformerBlock", "Stem", "Denoiser"]


@dataclass(frozen=True)
class DenoiserConfig:
    width: int = 16
    time_dim: int = 64
    attn_kernel: int = 3
    gate: str = "add"
    ff_mult: int = 2
    image_channels: int = 3


class TransformerBlock:
    """``h = F + Att(LN(F))``; ``out = h + FF(LN(h))``."""

    def __init__(self, params: Params, name: str, channels: int, cfg: DenoiserConfig, rng=None):
        hidden = cfg.ff_mult * channels
        self.ln1 = LayerNorm(params, f"{name}.ln1", channels)
        self.att = ChannelAttention(params, f"{name}.att", k=cfg.attn_kernel, gate=cfg.gate, rng=rng)
        self.ln2 = LayerNorm(params, f"{name}.ln2", channels)
        self.ff1 = Pointwise(params, f"{name}.ff1", channels, hidden, rng=rng)
        self.act = SiLU()
        self.ff2 = Pointwise(params, f"{name}.ff2", hidden, channels, rng=rng)
        self.channels = channels

    def forward(self, x):
        if x.shape[-1] != self.channels:
            raise ValueError(f"block expects {self.channels} channels, got {x.shape[-1]}")
        h = x + self.att(self.ln1(x))
        return h + self.ff2(self.act(self.ff1(self.ln2(h))))

    __call__ = forward

    def backward(self, dy):
        dh = dy + self.ln2.backward(self.ff1.backward(self.act.backward(self.ff2.backward(dy))))
        return dh + self.ln1.backward(self.att.backward(dh))


class Stem:
    """Condition/latent concatenation plus the time-step feature."""

    def __init__(self, params: Params, cfg: DenoiserConfig, rng=None):
        self.cfg = cfg
        self.conv = Conv2d(params, "stem.conv", 2 * cfg.image_channels, cfg.width, rng=rng)
        self.time = Dense(params, "stem.time", cfg.time_dim, cfg.width, rng=rng)

    def forward(self, x_t, c, t):
        if x_t.shape != c.shape:
            raise ValueError(f"x_t {x_t.shape} and condition {c.shape} differ in shape")
        n = x_t.shape[0]
        t = np.broadcast_to(np.asarray(t), (n,))
        emb = sinusoidal_embedding(t, self.cfg.time_dim).astype(self.time.params.dtype)
        feat = self.conv(np.concatenate([x_t, c], axis=-1))
        return feat + self.time(emb)[:, None, None, :]

    def backward(self, dy):
        self.time.backward(dy.sum(axis=(1, 2)))
        self.conv.backward(dy)


class Denoiser:
    """Noise predictor ``eps_hat = net(x_t, c, t)`` with manual backprop.

    Call with single images ``(H, W, 3)`` or batches ``(N, H, W, 3)``; ``t``
    may be a scalar or one step per batch item. ``H`` and ``W`` must be
    multiples of 4.
    """

    def __init__(self, cfg: DenoiserConfig = DenoiserConfig(), *, seed: Optional[int] = 0, dtype=np.float32, params: Optional[Params] = None):
        self.cfg = cfg
        rng = None if seed is None else np.random.default_rng(seed)
        p = Params(dtype) if params is None else Params(params.dtype)
        C = cfg.width
        self.stem = Stem(p, cfg, rng)
        self.enc1 = TransformerBlock(p, "enc1", C, cfg, rng)
        self.down1 = Pointwise(p, "down1", C, 2 * C, rng=rng)
        self.enc2 = TransformerBlock(p, "enc2", 2 * C, cfg, rng)
        self.down2 = Pointwise(p, "down2", 2 * C, 4 * C, rng=rng)
        self.enc3 = TransformerBlock(p, "enc3", 4 * C, cfg, rng)
        self.enc4 = TransformerBlock(p, "enc4", 4 * C, cfg, rng)
        self.dec1 = TransformerBlock(p, "dec1", 4 * C, cfg, rng)
        self.up1 = Pointwise(p, "up1", 4 * C, 2 * C, rng=rng)
        self.dec2 = TransformerBlock(p, "dec2", 2 * C, cfg, rng)
        self.up2 = Pointwise(p, "up2", 2 * C, C, rng=rng)
        self.dec3 = TransformerBlock(p, "dec3", C, cfg, rng)
        self.dec4 = TransformerBlock(p, "dec4", C, cfg, rng)
        self.head = Conv2d(p, "head", C, cfg.image_channels, bias=False, zero_init=True)
        self.pool1, self.pool2 = AvgPool2(), AvgPool2()
        self.upsample1, self.upsample2 = Upsample2(), Upsample2()
        self.params = p
        if params is not None:
            p.load_state(params.values)
        self._squeeze = None

    @property
    def blocks(self):
        return [self.enc1, self.enc2, self.enc3, self.enc4, self.dec1, self.dec2, self.dec3, self.dec4]

    def forward(self, x_t, c, t):
        x_t = np.asarray(x_t, dtype=self.params.dtype)
        c = np.asarray(c, dtype=self.params.dtype)
        squeeze = x_t.ndim == 3
        if squeeze:
            x_t, c = x_t[None], c[None]
        if x_t.ndim != 4 or x_t.shape[-1] != self.cfg.image_channels:
            raise ValueError(f"expected (N, H, W, {self.cfg.image_channels}) input, got {x_t.shape}")
        h, w = x_t.shape[1:3]
        if h % 4 or w % 4:
            raise ValueError(f"image size {h}x{w} is not a multiple of 4")

        f = self.stem.forward(x_t, c, t)
        s0 = self.enc1(f)
        s1 = self.enc2(self.down1(self.pool1(s0)))
        z = self.dec1(self.enc4(self.enc3(self.down2(self.pool2(s1)))))
        z = self.dec2(self.up1(self.upsample1(z)) + s1)
        z = self.dec4(self.dec3(self.up2(self.upsample2(z)) + s0))
        out = self.head(z)
        self._squeeze = squeeze
        return out[0] if squeeze else out

    __call__ = forward

    def backward(self, d_out) -> Dict[str, np.ndarray]:
        """Backpropagate ``dLoss/d eps_hat``; accumulates into ``params.grads``."""
        if self._squeeze is None:
            raise RuntimeError("Denoiser.backward called before forward")
        d = np.asarray(d_out, dtype=self.params.dtype)
        if self._squeeze:
            d = d[None]
        self._squeeze = None
        d = self.dec3.backward(self.dec4.backward(self.head.backward(d)))
        ds0 = d
        d = self.dec2.backward(self.upsample2.backward(self.up2.backward(d)))
        ds1 = d
        d = self.enc3.backward(self.enc4.backward(self.dec1.backward(self.upsample1.backward(self.up1.backward(d)))))
        d = ds1 + self.pool2.backward(self.down2.backward(d))
        d = self.enc2.backward(d)
        d = ds0 + self.pool1.backward(self.down1.backward(d))
        self.stem.backward(self.enc1.backward(d))
        return self.params.grads
