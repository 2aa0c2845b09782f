"""Synthetic underwater pairs and the PSNR/SSIM metrics.

Writes a few clean/degraded pairs to /tmp/uw_pairs for inspection.

    python3 demos/data_and_metrics.py
"""

from pathlib import Path

import numpy as np

from uwdiff.data import make_pair, save_image
from uwdiff.metrics import psnr, ssim, to_uint8


def main():
    out = Path("/tmp/uw_pairs")
    out.mkdir(exist_ok=True)
    for i in range(4):
        clean, degraded = make_pair(0, "train", i)
        a, b = to_uint8(clean), to_uint8(degraded)
        save_image(clean, out / f"{i}_clean.png")
        save_image(degraded, out / f"{i}_degraded.png")
        shift = degraded.mean(axis=(0, 1)) - clean.mean(axis=(0, 1))
        print(f"pair {i}: PSNR {psnr(b, a):5.2f} dB  SSIM {ssim(b, a):.3f}  mean RGB shift {np.round(shift, 3)}")
    print(f"wrote {out}")

    flat = np.full((16, 16, 3), 100, np.uint8)
    print("psnr with MSE=1:", round(psnr(flat, flat + 1), 4))
    print("ssim of 100 vs 120 flats:", round(ssim(flat, np.full_like(flat, 120)), 6))


if __name__ == "__main__":
    main()
