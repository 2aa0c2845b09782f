"""Synthetic paired corpus: procedural clean images and underwater-style degradations.

Images live in ``[-1, 1]`` as float arrays of shape ``(H, W, 3)``. On disk
they are 8-bit RGB PNG files::

    corpus/
      manifest.txt
      train/input/0000.png   train/gt/0000.png
      val/...                test/...
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .metrics import to_uint8

__all__ = [
    "DegradationParams",
    "UNDERWATER",
    "make_clean",
    "degrade",
    "load_image",
    "save_image",
    "SPLITS",
    "make_corpus",
    "load_split",
    "directory_checksum",
]

SPLITS = {"train": 512, "val": 32, "test": 16}
_SPLIT_IDS = {"train": 0, "val": 1, "test": 2}


@dataclass(frozen=True)
class DegradationParams:
    """Colour cast, blur, haze and sensor noise.

    ``haze_color`` is given in the same ``[-1, 1]`` units as the images.
    """

    gains: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    blur_sigma: float = 0.0
    haze_color: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    haze_weight: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        # zero gain is accepted: it models a fully absorbed channel
        if len(self.gains) != 3 or any(g < 0.0 or g > 1.0 for g in self.gains):
            raise ValueError(f"gains must be three values in [0, 1], got {self.gains}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("blur and noise sigmas must be non-negative")
        if len(self.haze_color) != 3 or any(abs(h) > 1.0 for h in self.haze_color):
            raise ValueError(f"haze_color must be three values in [-1, 1], got {self.haze_color}")
        if not 0.0 <= self.haze_weight < 1.0:
            raise ValueError(f"haze_weight must lie in [0, 1), got {self.haze_weight}")


UNDERWATER = DegradationParams(
    gains=(0.45, 0.85, 0.75),
    blur_sigma=1.2,
    haze_color=(-0.1, 0.25, 0.15),
    haze_weight=0.25,
    noise_sigma=0.01,
)


def _smooth_background(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= max(h - 1, 1)
    xx /= max(w - 1, 1)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    c0 = rng.uniform(-1, 1, 3)
    c1 = rng.uniform(-1, 1, 3)
    img = c0 + ramp[..., None] * (c1 - c0)
    # low-frequency ripple so backgrounds are not purely planar
    fy, fx = rng.uniform(0.5, 2.0, 2)
    ripple = np.sin(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 2 * np.pi))
    return img + 0.15 * ripple[..., None] * rng.uniform(-1, 1, 3)


def make_clean(seed: int, H: int = 64, W: int = 64) -> np.ndarray:
    """Deterministic procedural scene: colour gradient plus 3-8 solid shapes."""
    if H % 4 or W % 4 or H <= 0 or W <= 0:
        raise ValueError(f"image size must be positive multiples of 4, got {H}x{W}")
    rng = np.random.default_rng(seed)
    img = _smooth_background(rng, H, W)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    for _ in range(rng.integers(3, 9)):
        color = rng.uniform(-1, 1, 3)
        cy, cx = rng.uniform(0, H), rng.uniform(0, W)
        kind = rng.integers(3)
        if kind == 0:
            ry, rx = rng.uniform(0.06, 0.25, 2) * (H, W)
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        elif kind == 1:
            hy, hx = rng.uniform(0.05, 0.25, 2) * (H, W)
            mask = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        else:
            pts = np.stack([cy, cx]) + rng.uniform(-0.3, 0.3, (3, 2)) * (H, W)
            mask = _triangle_mask(yy, xx, pts)
        img[mask] = color
    # stretch so every channel spans the full range
    lo = img.min(axis=(0, 1))
    hi = img.max(axis=(0, 1))
    img = 2.0 * (img - lo) / np.maximum(hi - lo, 1e-12) - 1.0
    return np.clip(img, -1.0, 1.0)


def _triangle_mask(yy, xx, pts):
    def side(p, q):
        return (xx - q[1]) * (p[0] - q[0]) - (yy - q[0]) * (p[1] - q[1])

    d1 = side(pts[0], pts[1])
    d2 = side(pts[1], pts[2])
    d3 = side(pts[2], pts[0])
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def degrade(clean, p: DegradationParams = UNDERWATER, seed: int = 0) -> np.ndarray:
    """Gain, blur, haze, noise, clamp (in that order)."""
    img = np.asarray(clean, dtype=np.float64)
    # gains act on intensities in [0, 1] so a zero gain drives a channel to -1
    img = 2.0 * ((img + 1.0) * 0.5 * np.asarray(p.gains)) - 1.0
    if p.blur_sigma > 0:
        img = np.stack(
            [gaussian_filter(img[..., ch], p.blur_sigma, mode="reflect", truncate=3.0) for ch in range(img.shape[-1])],
            axis=-1,
        )
    if p.haze_weight > 0:
        img = (1.0 - p.haze_weight) * img + p.haze_weight * np.asarray(p.haze_color)
    if p.noise_sigma > 0:
        img = img + p.noise_sigma * np.random.default_rng(seed).standard_normal(img.shape)
    return np.clip(img, -1.0, 1.0)


def save_image(img, path) -> None:
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected an H x W x 3 image, got {arr.shape}")
    Image.fromarray(to_uint8(arr)).save(path, format="PNG")


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB file into ``[-1, 1]``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode != "RGB":
                raise ValueError(f"{path}: unsupported pixel format {mode!r}, need 8-bit RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ValueError(f"{path}: unreadable image ({exc})") from None
    return arr.astype(np.float64) / 127.5 - 1.0


def _pair_seed(master_seed: int, split: str, idx: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, _SPLIT_IDS[split], idx])


def make_pair(master_seed: int, split: str, idx: int, size: int = 64, p: DegradationParams = UNDERWATER):
    scene, noise = _pair_seed(master_seed, split, idx).generate_state(2)
    clean = make_clean(int(scene), size, size)
    return clean, degrade(clean, p, int(noise))


def make_corpus(out_dir, master_seed: int = 0, size: int = 64, counts: Optional[Dict[str, int]] = None, p: DegradationParams = UNDERWATER) -> Path:
    """Write the paired corpus and a manifest. ``out_dir`` must be absent or empty."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise FileExistsError(f"{out} is not empty")
    counts = dict(SPLITS if counts is None else counts)
    for split, n in counts.items():
        if split not in _SPLIT_IDS:
            raise ValueError(f"unknown split {split!r}")
        (out / split / "input").mkdir(parents=True, exist_ok=True)
        (out / split / "gt").mkdir(parents=True, exist_ok=True)
        for i in range(n):
            clean, degraded = make_pair(master_seed, split, i, size, p)
            save_image(degraded, out / split / "input" / f"{i:04d}.png")
            save_image(clean, out / split / "gt" / f"{i:04d}.png")
    lines = [f"master_seed={master_seed}", f"image_size={size}"]
    lines += [f"count_{k}={v}" for k, v in counts.items()]
    for k, v in asdict(p).items():
        lines.append(f"degrade_{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}")
    lines.append(f"sha256={directory_checksum(out)}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return out


def load_split(corpus_dir, split: str) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(clean, degraded)`` stacks of shape ``(N, H, W, 3)``."""
    base = Path(corpus_dir) / split
    names = sorted(os.listdir(base / "gt")) if (base / "gt").is_dir() else []
    if not names:
        raise FileNotFoundError(f"no images under {base / 'gt'}")
    clean = np.stack([load_image(base / "gt" / n) for n in names])
    degraded = np.stack([load_image(base / "input" / n) for n in names])
    return clean, degraded


def directory_checksum(root) -> str:
    """SHA-256 over relative paths and contents of every file except the manifest."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file() and p.name != "manifest.txt"):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()
