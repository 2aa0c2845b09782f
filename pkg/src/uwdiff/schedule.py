"""Noise schedules and time-step sampling sequences.

A :class:`NoiseSchedule` holds the per-step variances ``beta[1..T]`` and the
cumulative signal fractions ``alpha_bar[0..T]`` with ``alpha_bar[0] == 1``.
Both arrays are indexed by the diffusion step directly, so ``beta[0]`` is a
placeholder (NaN) and ``beta[t]`` is the variance of step ``t``.

Sampling sequences are plain descending integer lists such as
``[2000, 1800, ..., 200, 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

__all__ = [
    "NoiseSchedule",
    "linear_beta_schedule",
    "posterior_variance",
    "uniform_sequence",
    "piecewise_sequence",
    "default_piecewise",
    "validate_sequence",
    "format_sequence",
    "parse_sequence",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance table of a discrete diffusion process.

    Attributes
    ----------
    T : int
        Number of diffusion steps.
    beta : ndarray, shape (T + 1,)
        ``beta[t]`` for ``t = 1..T``; ``beta[0]`` is NaN.
    alpha_bar : ndarray, shape (T + 1,)
        ``alpha_bar[t] = prod_{i<=t} (1 - beta[i])``, ``alpha_bar[0] = 1``.
    """

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    @classmethod
    def from_betas(cls, betas: Sequence[float]) -> "NoiseSchedule":
        """Build a schedule from ``beta_1..beta_T``."""
        b = np.asarray(betas, dtype=np.float64)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if not np.all((b > 0) & (b < 1)):
            raise ValueError("every beta must lie in the open interval (0, 1)")
        beta = np.concatenate([[np.nan], b])
        alpha_bar = np.empty(b.size + 1)
        alpha_bar[0] = 1.0
        # sequential product keeps alpha_bar[t] == alpha_bar[t-1] * (1 - beta[t]) bit-exact
        acc = 1.0
        for t in range(1, b.size + 1):
            acc = acc * (1.0 - beta[t])
            alpha_bar[t] = acc
        beta.setflags(write=False)
        alpha_bar.setflags(write=False)
        return cls(T=int(b.size), beta=beta, alpha_bar=alpha_bar)

    def check_step(self, t: int, lo: int = 0) -> int:
        t = int(t)
        if not lo <= t <= self.T:
            raise ValueError(f"time step {t} outside [{lo}, {self.T}]")
        return t


def linear_beta_schedule(T: int, beta_min: float = 1e-6, beta_max: float = 1e-2) -> NoiseSchedule:
    """Linearly spaced betas hitting both endpoints exactly.

    >>> s = linear_beta_schedule(3, 0.1, 0.3)
    >>> [round(a, 6) for a in s.alpha_bar]
    [1.0, 0.9, 0.72, 0.504]
    """
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    T = int(T)
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    if T == 1:
        betas = np.array([beta_min], dtype=np.float64)
    else:
        t = np.arange(T, dtype=np.float64)
        betas = beta_min + t * ((beta_max - beta_min) / (T - 1))
        betas[-1] = beta_max
    return NoiseSchedule.from_betas(betas)


def posterior_variance(sched: NoiseSchedule, t_hi: int, t_lo: int) -> float:
    """Variance of ``q(x_lo | x_hi, x_0)`` for an arbitrary pair ``t_lo < t_hi``.

    For adjacent steps this is the usual ``beta_tilde``.
    """
    t_hi = sched.check_step(t_hi)
    t_lo = sched.check_step(t_lo)
    if t_lo >= t_hi:
        raise ValueError(f"need t_lo < t_hi, got t_lo={t_lo}, t_hi={t_hi}")
    a_hi = sched.alpha_bar[t_hi]
    a_lo = sched.alpha_bar[t_lo]
    return float((1.0 - a_lo) / (1.0 - a_hi) * (1.0 - a_hi / a_lo))


def uniform_sequence(T: int, S: int) -> List[int]:
    """``[T, T - d, ..., d, 0]`` with stride ``d = T / S``."""
    if S < 1 or T < 1:
        raise ValueError("T and S must be positive")
    if T % S:
        raise ValueError(f"S={S} does not divide T={T}")
    d = T // S
    return list(range(T, -1, -d))


def piecewise_sequence(a: int, m: int, b: int, d1: int, d2: int) -> List[int]:
    """Two-stride sequence: stride ``d1`` on ``[a, m]`` and ``d2`` on ``[m, b]``.

    Returned descending, with the split point ``m`` appearing once.
    """
    if not a < m < b:
        raise ValueError(f"need a < m < b, got a={a}, m={m}, b={b}")
    if d1 < 1 or d2 < 1:
        raise ValueError("strides must be >= 1")
    if (m - a) % d1 or (b - m) % d2:
        raise ValueError(f"spans ({m - a}, {b - m}) not divisible by strides ({d1}, {d2})")
    low = range(a, m, d1)
    high = range(m, b + 1, d2)
    return sorted(set(low) | set(high), reverse=True)


def default_piecewise(T: int, S: int = 10, dense: int = 6, split: float = 0.25) -> List[int]:
    """Piecewise sequence with ``dense`` of ``S`` intervals below ``m`` and the rest above.

    ``m`` is the admissible split point (both spans divisible) closest to
    ``split * T``; ties go to the smaller ``m``.
    """
    sparse = S - dense
    if not 0 < dense < S:
        raise ValueError("dense must be strictly between 0 and S")
    target = split * T
    best = None
    for m in range(dense, T, dense):
        if (T - m) % sparse == 0 and (best is None or abs(m - target) < abs(best - target)):
            best = m
    if best is None:
        raise ValueError(f"no split of T={T} into {dense}+{sparse} equal intervals")
    return piecewise_sequence(0, best, T, best // dense, (T - best) // sparse)


def validate_sequence(steps: Iterable, T: int) -> bool:
    """True iff ``steps`` starts at ``T``, ends at 0 and strictly decreases."""
    try:
        s = list(steps)
    except TypeError:
        return False
    if len(s) < 2:
        return False
    for v in s:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)):
            return False
    if s[0] != T or s[-1] != 0:
        return False
    return all(x > y for x, y in zip(s, s[1:]))


def format_sequence(steps: Iterable[int], sep: str = ",") -> str:
    return sep.join(str(int(v)) for v in steps)


def parse_sequence(text: str, sep: str = ",") -> List[int]:
    """Parse ``"2000,1800,...,0"``. Raises ``ValueError`` on junk."""
    parts = [p.strip() for p in text.strip().split(sep)]
    if not parts or any(p == "" for p in parts):
        raise ValueError(f"malformed sequence: {text!r}")
    return [int(p) for p in parts]
