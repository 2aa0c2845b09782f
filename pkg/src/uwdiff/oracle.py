"""Exact noise predictor for a Gaussian data distribution.

If every component of ``x_0`` is drawn independently from
``N(mu0, sigma0^2)``, the posterior mean ``E[x_0 | x_t]`` is linear in
``x_t`` and the optimal noise estimate follows in closed form. This gives a
training-free denoiser for validating the samplers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .schedule import NoiseSchedule

__all__ = ["GaussianPrior", "posterior_mean", "optimal_eps", "OracleDenoiser"]


@dataclass(frozen=True)
class GaussianPrior:
    """Independent Gaussian prior on every pixel.

    ``mu0=None`` means "use the condition image as the mean".
    """

    sigma0: float
    mu0: Optional[np.ndarray | float] = None

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")

    def mean(self, c) -> np.ndarray:
        return np.asarray(c if self.mu0 is None else self.mu0, dtype=np.float64)


def posterior_mean(x_t, alpha_bar: float, mu0, sigma0: float) -> np.ndarray:
    """``E[x_0 | x_t]`` when ``x_t = sqrt(ab) x_0 + sqrt(1 - ab) eps``."""
    s2 = sigma0 * sigma0
    ra = np.sqrt(alpha_bar)
    gain = ra * s2 / (alpha_bar * s2 + 1.0 - alpha_bar)
    return mu0 + gain * (np.asarray(x_t) - ra * mu0)


def optimal_eps(x_t, c, t: int, prior: GaussianPrior, sched: NoiseSchedule) -> np.ndarray:
    t = sched.check_step(t, lo=1)
    ab = sched.alpha_bar[t]
    x0_mean = posterior_mean(x_t, ab, prior.mean(c), prior.sigma0)
    return (np.asarray(x_t) - np.sqrt(ab) * x0_mean) / np.sqrt(1.0 - ab)


class OracleDenoiser:
    """Callable wrapper so the oracle plugs into the samplers."""

    def __init__(self, prior: GaussianPrior, sched: NoiseSchedule):
        self.prior = prior
        self.sched = sched

    def __call__(self, x_t, c, t):
        return optimal_eps(x_t, c, int(t), self.prior, self.sched)
