"""Training loop (L1 noise regression + Adam) and sampling-based evaluation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .diffusion import Denoiser as DenoiserFn
from .diffusion import q_sample, reverse_process
from .metrics import psnr, ssim, to_uint8
from .nn import Denoiser, save_denoiser
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "Adam", "train_step", "train", "evaluate", "EvalResult", "CountingDenoiser"]


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    steps: int = 20000
    T: int = 2000
    beta_min: float = 1e-6
    beta_max: float = 1e-2
    checkpoint_interval: int = 1000
    seed: int = 0
    image_size: int = 64
    width: int = 16
    lr_drop_step: int = 0  # after this step lr is scaled by lr_drop_factor; 0 keeps it constant
    lr_drop_factor: float = 0.1

    def __post_init__(self):
        for name in ("batch_size", "steps", "T", "checkpoint_interval", "image_size", "width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.lr_drop_step < 0 or not 0.0 <= self.lr_drop_factor <= 1.0:
            raise ValueError("need lr_drop_step >= 0 and lr_drop_factor in [0, 1]")

    def lr_at(self, step: int) -> float:
        """Learning rate used for the update that produces ``step``."""
        if self.lr_drop_step and step > self.lr_drop_step:
            return self.lr * self.lr_drop_factor
        return self.lr


class Adam:
    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k, w in self.params.items():
            g = self.params.grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            w -= (self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)).astype(w.dtype)


def train_step(model: Denoiser, opt: Adam, clean, degraded, rng: np.random.Generator, sched: NoiseSchedule) -> float:
    """One optimisation step on a batch; returns the batch L1 loss."""
    clean = np.asarray(clean)
    if clean.shape[0] == 0:
        raise ValueError("empty batch")
    n = clean.shape[0]
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal(clean.shape)
    x_t = q_sample(clean, t, eps, sched)
    eps_hat = model.forward(x_t, degraded, t)
    diff = eps_hat - eps.astype(eps_hat.dtype)
    loss = float(np.mean(np.abs(diff)))
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite training loss {loss} (t={t.tolist()})")
    model.params.zero_grad()
    model.backward(np.sign(diff) / diff.size)
    opt.step()
    return loss


def train(
    model: Denoiser,
    clean: np.ndarray,
    degraded: np.ndarray,
    cfg: TrainConfig,
    sched: NoiseSchedule,
    out_dir=None,
    *,
    start_step: int = 0,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> Sequence[float]:
    """Run ``cfg.steps`` updates from ``start_step``; optionally write checkpoints and a CSV log.

    Batches are drawn with replacement from the training stack using a
    generator seeded by ``(cfg.seed, start_step)`` so resumed runs stay
    deterministic.
    """
    rng = np.random.default_rng([cfg.seed, start_step])
    opt = Adam(model.params, lr=cfg.lr)
    losses = []
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "train_log.csv"
        new = not log_path.exists()
        fh = open(log_path, "a", newline="")
        writer = csv.writer(fh)
        if new:
            writer.writerow(["step", "loss", "wall_seconds"])
    t0 = time.perf_counter()
    try:
        for i in range(start_step + 1, start_step + cfg.steps + 1):
            opt.lr = cfg.lr_at(i)
            idx = rng.integers(0, clean.shape[0], size=cfg.batch_size)
            loss = train_step(model, opt, clean[idx], degraded[idx], rng, sched)
            losses.append(loss)
            if writer is not None:
                writer.writerow([i, f"{loss:.8g}", f"{time.perf_counter() - t0:.3f}"])
            if on_step is not None:
                on_step(i, loss)
            last = i == start_step + cfg.steps
            if out is not None and (i % cfg.checkpoint_interval == 0 or last):
                save_denoiser(model, out / f"step_{i:06d}.ckpt")
                fh.flush()
            if i % 500 == 0:
                log.info("step %d loss %.4f (%.1fs)", i, loss, time.perf_counter() - t0)
    finally:
        if fh is not None:
            fh.close()
    return losses


@dataclass(frozen=True)
class EvalResult:
    psnr: float
    ssim: float
    seconds_per_image: float
    per_image_psnr: tuple
    per_image_ssim: tuple


class CountingDenoiser:
    """Wraps a denoiser and counts its evaluations."""

    def __init__(self, model: DenoiserFn):
        self.model = model
        self.calls = 0

    def __call__(self, x_t, c, t):
        self.calls += 1
        return self.model(x_t, c, t)


def evaluate(
    model: DenoiserFn,
    clean: np.ndarray,
    degraded: np.ndarray,
    seq: Sequence[int],
    eta: float,
    seed: int,
    sched: NoiseSchedule,
    *,
    chunk: int = 16,
) -> EvalResult:
    """Enhance every ``degraded`` image and score it against ``clean``.

    Images are processed in chunks of ``chunk``; chunk ``j`` uses seed
    ``(seed, j)``. Returns mean PSNR, mean SSIM and seconds per image.
    """
    clean = np.asarray(clean)
    degraded = np.asarray(degraded)
    n = clean.shape[0]
    if n == 0:
        raise ValueError("empty evaluation set")
    ps, ss = [], []
    elapsed = 0.0
    for j, start in enumerate(range(0, n, chunk)):
        cond = degraded[start : start + chunk]
        t0 = time.perf_counter()
        out = reverse_process(model, cond, seq, eta, [seed, j], sched)
        elapsed += time.perf_counter() - t0
        for k in range(out.shape[0]):
            a = to_uint8(out[k])
            b = to_uint8(clean[start + k])
            ps.append(psnr(a, b))
            ss.append(ssim(a, b))
    return EvalResult(float(np.mean(ps)), float(np.mean(ss)), elapsed / n, tuple(ps), tuple(ss))
