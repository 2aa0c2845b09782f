"""Forward noising, the noise-prediction loss and the two reverse samplers.

A denoiser is any callable ``model(x_t, c, t) -> eps_hat`` returning an array
shaped like ``x_t``. Arrays may have any shape; images are ``(H, W, 3)`` and
batches ``(N, H, W, 3)``. All randomness is passed in explicitly, either as
noise arrays or as an integer seed.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .schedule import NoiseSchedule, posterior_variance, validate_sequence

Denoiser = Callable[[np.ndarray, np.ndarray, int], np.ndarray]

__all__ = [
    "Denoiser",
    "q_sample",
    "predict_x0",
    "training_loss",
    "ddpm_step",
    "ddim_step",
    "reverse_process",
    "ddpm_sample",
]

# slack for 1 - alpha_lo - sigma^2 going a hair negative from rounding at eta = 1
_NEG_TOL = 1e-12


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what}: shape mismatch {np.shape(a)} vs {np.shape(b)}")


def q_sample(x0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Jump straight to step ``t``: ``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    _same_shape(x0, eps, "q_sample")
    t_arr = np.asarray(t)
    if t_arr.ndim == 0:
        t = sched.check_step(int(t_arr))
        ab = sched.alpha_bar[t]
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    # per-sample steps along the leading axis
    if t_arr.shape[0] != x0.shape[0] or t_arr.ndim != 1:
        raise ValueError("vector t must have one entry per leading-axis sample")
    if np.any(t_arr < 0) or np.any(t_arr > sched.T):
        raise ValueError(f"time steps outside [0, {sched.T}]")
    ab = sched.alpha_bar[t_arr].reshape((-1,) + (1,) * (x0.ndim - 1))
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(np.result_type(x0, eps), copy=False)


def predict_x0(x_t, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Invert :func:`q_sample` given a noise estimate."""
    ab = sched.alpha_bar[sched.check_step(t)]
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def training_loss(model: Denoiser, x0, c, t, eps, sched: NoiseSchedule) -> float:
    """Mean absolute error between the true noise and the model's estimate."""
    t_arr = np.asarray(t)
    if np.any(t_arr < 1):
        raise ValueError("training steps start at t = 1")
    x_t = q_sample(x0, t, eps, sched)
    eps_hat = np.asarray(model(x_t, c, t))
    _same_shape(eps_hat, eps, "training_loss")
    return float(np.mean(np.abs(eps - eps_hat)))


def ddpm_step(model: Denoiser, x_t, c, t: int, z, sched: NoiseSchedule) -> np.ndarray:
    """One ancestral step ``x_t -> x_{t-1}``.

    ``z`` is ignored at ``t == 1`` so the last update is deterministic.
    """
    t = sched.check_step(t, lo=1)
    x_t = np.asarray(x_t)
    eps_hat = np.asarray(model(x_t, c, t))
    _same_shape(eps_hat, x_t, "ddpm_step")
    beta = sched.beta[t]
    ab = sched.alpha_bar[t]
    mean = (x_t - (beta / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(1.0 - beta)
    if t == 1 or z is None:
        return mean
    _same_shape(z, x_t, "ddpm_step noise")
    return mean + np.sqrt(posterior_variance(sched, t, t - 1)) * np.asarray(z)


def ddim_step(
    model: Denoiser,
    x_t,
    c,
    t_hi: int,
    t_lo: int,
    eta: float,
    z,
    sched: NoiseSchedule,
) -> Tuple[np.ndarray, np.ndarray]:
    """Skip step ``t_hi -> t_lo``; returns ``(x_next, x0_hat)``.

    ``eta = 0`` gives the deterministic update; ``eta = 1`` with adjacent steps
    reproduces :func:`ddpm_step`.
    """
    t_hi = sched.check_step(t_hi, lo=1)
    t_lo = sched.check_step(t_lo)
    if t_lo >= t_hi:
        raise ValueError(f"need t_lo < t_hi, got t_lo={t_lo}, t_hi={t_hi}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    x_t = np.asarray(x_t)
    eps_hat = np.asarray(model(x_t, c, t_hi))
    _same_shape(eps_hat, x_t, "ddim_step")

    a_hi = sched.alpha_bar[t_hi]
    a_lo = sched.alpha_bar[t_lo]
    x0_hat = (x_t - np.sqrt(1.0 - a_hi) * eps_hat) / np.sqrt(a_hi)
    var = eta * posterior_variance(sched, t_hi, t_lo)
    dir_var = 1.0 - a_lo - var
    if dir_var < -_NEG_TOL:
        raise ValueError(f"1 - alpha_bar[{t_lo}] - sigma^2 = {dir_var} < 0")
    x_next = np.sqrt(a_lo) * x0_hat + np.sqrt(max(dir_var, 0.0)) * eps_hat
    if var > 0.0 and t_lo > 0 and z is not None:
        _same_shape(z, x_t, "ddim_step noise")
        x_next = x_next + np.sqrt(var) * np.asarray(z)
    return x_next, x0_hat


def reverse_process(
    model: Denoiser,
    c,
    seq: Sequence[int],
    eta: float,
    rng_seed: int,
    sched: NoiseSchedule,
    *,
    clip: bool = True,
    trajectory: Optional[List[np.ndarray]] = None,
) -> np.ndarray:
    """Generate ``x_0`` from pure noise along ``seq`` (descending, ``T .. 0``).

    The start latent ``x_T`` and every injected noise draw come from
    ``numpy.random.default_rng(rng_seed)``. The result is clamped to
    ``[-1, 1]`` once at the end unless ``clip=False``. If ``trajectory`` is a
    list, the ``x0_hat`` estimate of every step is appended to it.
    """
    if not validate_sequence(seq, sched.T):
        raise ValueError(f"illegal sampling sequence for T={sched.T}: {list(seq)}")
    c = np.asarray(c)
    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal(c.shape)
    stochastic = eta > 0.0
    x0_hat = x
    for t_hi, t_lo in zip(seq[:-1], seq[1:]):
        z = rng.standard_normal(c.shape) if stochastic and t_lo > 0 else None
        x, x0_hat = ddim_step(model, x, c, int(t_hi), int(t_lo), eta, z, sched)
        if trajectory is not None:
            trajectory.append(x0_hat)
    # the last step lands on t = 0 where alpha_bar = 1, so x == x0_hat
    out = x0_hat
    return np.clip(out, -1.0, 1.0) if clip else out


def ddpm_sample(model: Denoiser, c, rng_seed: int, sched: NoiseSchedule, *, clip: bool = False) -> np.ndarray:
    """Full-length ancestral sampling ``T -> 0``, one model call per step."""
    c = np.asarray(c)
    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal(c.shape)
    for t in range(sched.T, 0, -1):
        z = rng.standard_normal(c.shape) if t > 1 else None
        x = ddpm_step(model, x, c, t, z, sched)
    return np.clip(x, -1.0, 1.0) if clip else x
