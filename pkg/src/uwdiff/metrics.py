"""PSNR and SSIM on 8-bit RGB images."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["to_uint8", "psnr", "ssim", "luma", "gaussian_window"]

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_uint8(x) -> np.ndarray:
    """Map a ``[-1, 1]`` image to ``[0, 255]`` integers (rounded, clamped)."""
    return np.clip(np.round((np.asarray(x, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _check_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit images; ``inf`` if identical."""
    a, b = _check_pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(255.0**2 / mse))


def luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {img.shape}")
    return img @ LUMA_WEIGHTS


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable weighted sums over every fully-contained window
    n = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, n, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, n, axis=1) @ g


def ssim(a, b, *, win_size: int = 11, sigma: float = 1.5, K1: float = 0.01, K2: float = 0.03, L: float = 255.0) -> float:
    """Single-scale SSIM on the luma channel, Gaussian 11x11 windows.

    The score is the mean of the SSIM map over all windows that fit entirely
    inside the image.
    """
    a, b = _check_pair(a, b)
    if a.shape[0] < win_size or a.shape[1] < win_size:
        raise ValueError(f"image {a.shape[:2]} smaller than the {win_size}x{win_size} window")
    x = luma(a)
    y = luma(b)
    g = gaussian_window(win_size, sigma)
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    C1 = (K1 * L) ** 2
    C2 = (K2 * L) ** 2
    num = (2 * (mx * my) + C1) * (2 * sxy + C2)
    den = (mx * mx + my * my + C1) * (sxx + syy + C2)
    return float(np.mean(num / den))
