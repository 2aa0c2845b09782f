"""Reference training run on the synthetic underwater corpus.

Trains the default 70k-parameter denoiser on the 512 training pairs at
64x64, then scores the 16 test pairs with 10 uniform DDIM steps. The final
checkpoint, the loss log and a JSON manifest land in ``artifacts/reference_run``;
the acceptance suite re-evaluates that checkpoint instead of retraining.

The learning rate is 1e-3 for the first 18,000 steps and 1e-4 afterwards.
Without the drop the final weights are noisy, and 10-step sampling loses
about 1 dB against 40-step sampling.

The run resumes from the newest ``step_*.ckpt`` in the output directory, so
it can be interrupted. Optimiser moments restart from zero on resume.

    python3 demos/reference_training.py --steps 20000
"""

import argparse
import hashlib
import json
import logging
import re
import time
from pathlib import Path

import numpy as np

from uwdiff.data import SPLITS, make_pair
from uwdiff.metrics import psnr, ssim, to_uint8
from uwdiff.nn import Denoiser, DenoiserConfig, load_denoiser
from uwdiff.schedule import linear_beta_schedule, uniform_sequence
from uwdiff.train import TrainConfig, evaluate, train

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "artifacts" / "reference_run"


def quantize(x):
    # identical to a PNG save/load round trip
    return to_uint8(x).astype(np.float64) / 127.5 - 1.0


def split_arrays(split, master_seed=0, size=64):
    pairs = [make_pair(master_seed, split, i, size) for i in range(SPLITS[split])]
    clean = np.stack([quantize(c) for c, _ in pairs])
    degraded = np.stack([quantize(d) for _, d in pairs])
    return clean, degraded


def baseline(clean, degraded):
    ps = [psnr(to_uint8(d), to_uint8(c)) for c, d in zip(clean, degraded)]
    ss = [ssim(to_uint8(d), to_uint8(c)) for c, d in zip(clean, degraded)]
    return float(np.mean(ps)), float(np.mean(ss))


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--lr-drop-step", type=int, default=18000)
    ap.add_argument("--lr-drop-factor", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = args.out
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    sched = linear_beta_schedule(2000)
    clean, degraded = split_arrays("train")

    done = 0
    model = Denoiser(DenoiserConfig(), seed=args.seed)
    found = sorted(ckpt_dir.glob("step_*.ckpt"))
    if found:
        done = int(re.search(r"step_(\d+)", found[-1].name).group(1))
        model = load_denoiser(found[-1])
        logging.info("resuming from %s", found[-1].name)

    t0 = time.perf_counter()
    if done < args.steps:
        cfg = TrainConfig(
            lr=args.lr,
            lr_drop_step=args.lr_drop_step,
            lr_drop_factor=args.lr_drop_factor,
            steps=args.steps - done,
            seed=args.seed,
            checkpoint_interval=1000,
        )
        train(model, clean, degraded, cfg, sched, ckpt_dir, start_step=done)
    wall = time.perf_counter() - t0

    final = ckpt_dir / f"step_{args.steps:06d}.ckpt"
    test_clean, test_deg = split_arrays("test")
    base_psnr, base_ssim = baseline(test_clean, test_deg)
    res = evaluate(load_denoiser(final), test_clean, test_deg, uniform_sequence(2000, 10), 0.0, 0, sched)
    manifest = {
        "steps": args.steps,
        "lr": args.lr,
        "lr_drop_step": args.lr_drop_step,
        "lr_drop_factor": args.lr_drop_factor,
        "batch_size": 8,
        "seed": args.seed,
        "corpus_master_seed": 0,
        "image_size": 64,
        "width": 16,
        "checkpoint": str(final.relative_to(out)),
        "checkpoint_sha256": sha256(final),
        "wall_seconds_last_session": round(wall, 1),
        "eval": {
            "split": "test",
            "sequence": "uniform S=10",
            "eta": 0.0,
            "seed": 0,
            "baseline_psnr": base_psnr,
            "baseline_ssim": base_ssim,
            "enhanced_psnr": res.psnr,
            "enhanced_ssim": res.ssim,
        },
        "required_psnr_gain_db": 2.0 * min(1.0, args.steps / 20000),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest["eval"], indent=2))


if __name__ == "__main__":
    main()
