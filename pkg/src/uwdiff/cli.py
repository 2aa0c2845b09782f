"""Command-line entry point: ``uwdiff <command> [options]``.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
Flags override values from ``--config``, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import data as data_mod
from .config import ConfigError, RunConfig, load_config
from .diffusion import reverse_process
from .ea import EAConfig, SearchLog, search
from .nn import CheckpointError, Denoiser, DenoiserConfig, load_denoiser
from .oracle import GaussianPrior, OracleDenoiser
from .schedule import (
    format_sequence,
    linear_beta_schedule,
    parse_sequence,
    piecewise_sequence,
    uniform_sequence,
    validate_sequence,
)
from .train import CountingDenoiser, TrainConfig, evaluate, train

log = logging.getLogger("uwdiff")


class UsageError(Exception):
    pass


def _schedule(cfg: RunConfig):
    return linear_beta_schedule(cfg.T, cfg.beta_min, cfg.beta_max)


def _floats(text: str, n: int, key: str):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{key}: expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{key}: expected {n} values, got {len(vals)}")
    return vals


def _degradation(cfg: RunConfig) -> data_mod.DegradationParams:
    try:
        return data_mod.DegradationParams(
            gains=_floats(cfg.degrade_gains, 3, "degrade_gains"),
            blur_sigma=cfg.degrade_blur_sigma,
            haze_color=_floats(cfg.degrade_haze_color, 3, "degrade_haze_color"),
            haze_weight=cfg.degrade_haze_weight,
            noise_sigma=cfg.degrade_noise_sigma,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sequence(args, cfg: RunConfig) -> List[int]:
    if getattr(args, "sequence", None):
        try:
            seq = parse_sequence(args.sequence)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif getattr(args, "sequence_file", None):
        seq = parse_sequence(Path(args.sequence_file).read_text())
    else:
        seq = uniform_sequence(cfg.T, cfg.sampling_steps)
    if not validate_sequence(seq, cfg.T):
        raise UsageError(f"illegal sampling sequence for T={cfg.T}: {format_sequence(seq)}")
    return seq


def _require_dir(path, what):
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _load_model(path, cfg: RunConfig) -> Denoiser:
    if path is None:
        raise UsageError("missing --checkpoint")
    if not Path(path).is_file():
        raise UsageError(f"checkpoint {path} not found")
    return load_denoiser(path, gate=cfg.gate)


# ---------------------------------------------------------------- commands


def cmd_make_data(args, cfg: RunConfig) -> int:
    if not args.out:
        raise UsageError("missing --out")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        raise UsageError(f"output directory {out} is not empty")
    counts = {"train": cfg.count_train, "val": cfg.count_val, "test": cfg.count_test}
    data_mod.make_corpus(out, cfg.seed, cfg.image_size, counts, _degradation(cfg))
    print(f"wrote {sum(counts.values())} pairs to {out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    corpus = _require_dir(args.corpus, "--corpus")
    if not args.out:
        raise UsageError("missing --out")
    clean, degraded = data_mod.load_split(corpus, "train")
    sched = _schedule(cfg)
    start = 0
    if args.resume:
        m = re.search(r"step_(\d+)\.ckpt$", str(args.resume))
        if not m:
            raise UsageError(f"cannot infer step from checkpoint name {args.resume}")
        start = int(m.group(1))
        model = _load_model(args.resume, cfg)
    else:
        model = Denoiser(DenoiserConfig(width=cfg.width, gate=cfg.gate), seed=cfg.seed)
    tcfg = TrainConfig(
        lr=cfg.lr,
        lr_drop_step=cfg.lr_drop_step,
        lr_drop_factor=cfg.lr_drop_factor,
        batch_size=cfg.batch_size,
        steps=cfg.steps,
        T=cfg.T,
        beta_min=cfg.beta_min,
        beta_max=cfg.beta_max,
        checkpoint_interval=cfg.checkpoint_interval,
        seed=cfg.seed,
        image_size=cfg.image_size,
        width=cfg.width,
    )
    losses = train(model, clean, degraded, tcfg, sched, args.out, start_step=start)
    print(f"trained steps {start + 1}..{start + len(losses)}; final loss {losses[-1]:.5f}")
    return 0


def cmd_enhance(args, cfg: RunConfig) -> int:
    seq = _sequence(args, cfg)
    if not args.input or not args.output:
        raise UsageError("enhance needs --input and --output")
    model = _load_model(args.checkpoint, cfg)
    try:
        cond = data_mod.load_image(args.input)
    except FileNotFoundError:
        raise UsageError(f"input image {args.input} not found") from None
    h, w = cond.shape[:2]
    if h % 4 or w % 4:
        raise UsageError(f"image size {h}x{w} is not a multiple of 4")
    counter = CountingDenoiser(model)
    t0 = time.perf_counter()
    out = reverse_process(counter, cond, seq, cfg.eta, cfg.seed, _schedule(cfg))
    elapsed = time.perf_counter() - t0
    data_mod.save_image(out, args.output)
    print(f"denoiser_calls={counter.calls} elapsed_seconds={elapsed:.4f}")
    return 0


def _eval_model_and_data(args, cfg: RunConfig, split: str):
    """Denoiser plus (clean, condition) stacks; oracle mode conditions on the clean image."""
    if getattr(args, "oracle", False):
        if args.corpus:
            clean, _ = data_mod.load_split(_require_dir(args.corpus, "--corpus"), split)
        else:
            n = {"train": cfg.count_train, "val": cfg.count_val, "test": cfg.count_test}[split]
            clean = np.stack([data_mod.make_pair(cfg.seed, split, i, cfg.image_size)[0] for i in range(n)])
        model = OracleDenoiser(GaussianPrior(sigma0=cfg.oracle_sigma0), _schedule(cfg))
        return model, clean, clean
    clean, degraded = data_mod.load_split(_require_dir(args.corpus, "--corpus"), split)
    return _load_model(args.checkpoint, cfg), clean, degraded


def cmd_evaluate(args, cfg: RunConfig) -> int:
    seq = _sequence(args, cfg)
    model, clean, cond = _eval_model_and_data(args, cfg, args.split)
    res = evaluate(model, clean, cond, seq, cfg.eta, cfg.seed, _schedule(cfg))
    if args.report:
        with open(args.report, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["image_id", "psnr_db", "ssim"])
            for i, (p, s) in enumerate(zip(res.per_image_psnr, res.per_image_ssim)):
                w.writerow([f"{i:04d}", "inf" if np.isinf(p) else f"{p:.6f}", f"{s:.6f}"])
    print(json.dumps({"psnr": res.psnr, "ssim": res.ssim, "seconds_per_image": res.seconds_per_image}))
    return 0


def cmd_search(args, cfg: RunConfig) -> int:
    if not args.out:
        raise UsageError("missing --out")
    model, clean, cond = _eval_model_and_data(args, cfg, "val")
    sched = _schedule(cfg)

    def fitness(genes):
        return evaluate(model, clean, cond, genes, cfg.eta, cfg.seed, sched).psnr

    ea_cfg = EAConfig(Lg=cfg.ea_Lg, pc=cfg.ea_pc, pm=cfg.ea_pm, epochs=cfg.ea_epochs, K=cfg.ea_K, seed=cfg.seed)
    slog = SearchLog()
    best = search(ea_cfg, cfg.T, fitness, on_score=slog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best_sequence.txt").write_text(format_sequence(best) + "\n")
    slog.to_csv(out / "search_log.csv")
    best_score = max(r[2] for r in slog.rows)
    print(f"best={format_sequence(best)} score={best_score:.4f} scored={len(slog.rows)}")
    return 0


def cmd_benchmark(args, cfg: RunConfig) -> int:
    sched = _schedule(cfg)
    model, clean, cond = _eval_model_and_data(args, cfg, args.split)
    rows = []
    try:
        s_values = [int(v) for v in (args.s_values or cfg.s_values).split(",")]
    except ValueError:
        raise UsageError(f"bad S list {args.s_values or cfg.s_values!r}") from None
    runs = []
    for S in s_values:
        try:
            runs.append((str(S), uniform_sequence(cfg.T, S)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.piecewise:
        try:
            runs.append(("piecewise", piecewise_sequence(0, cfg.piecewise_m, cfg.T, cfg.piecewise_d1, cfg.piecewise_d2)))
        except ValueError as exc:
            raise UsageError(f"piecewise settings: {exc}") from None
    if args.sequence_file:
        runs.append(("searched", _sequence(argparse.Namespace(sequence=None, sequence_file=args.sequence_file), cfg)))
    for label, seq in runs:
        res = evaluate(model, clean, cond, seq, cfg.eta, cfg.seed, sched)
        rows.append([label, len(seq) - 1, f"{res.seconds_per_image:.6f}", f"{res.psnr:.6f}", f"{res.ssim:.6f}"])
    target = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(target)
        w.writerow(["label", "S", "seconds_per_image", "psnr", "ssim"])
        w.writerows(rows)
    finally:
        if target is not sys.stdout:
            target.close()
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwdiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--seed", type=int)
        return sp

    sp = common(sub.add_parser("make-data", help="generate the synthetic paired corpus"))
    sp.add_argument("--out")
    sp.add_argument("--image-size", type=int, dest="image_size")
    sp.set_defaults(func=cmd_make_data)

    sp = common(sub.add_parser("train", help="train the denoiser"))
    sp.add_argument("--corpus")
    sp.add_argument("--out")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int, dest="batch_size")
    sp.add_argument("--checkpoint-interval", type=int, dest="checkpoint_interval")
    sp.add_argument("--resume", help="continue from a step_NNNNNN.ckpt file")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("enhance", help="enhance one image"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--input")
    sp.add_argument("--output")
    sp.add_argument("--sequence", help='descending steps, e.g. "2000,1000,0"')
    sp.add_argument("--eta", type=float)
    sp.set_defaults(func=cmd_enhance)

    sp = common(sub.add_parser("evaluate", help="PSNR/SSIM over a corpus split"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--corpus")
    sp.add_argument("--split", default="test", choices=sorted(data_mod.SPLITS))
    sp.add_argument("--sequence")
    sp.add_argument("--sequence-file", dest="sequence_file")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--oracle", action="store_true", help="use the analytic Gaussian denoiser")
    sp.add_argument("--report", help="per-image CSV report path")
    sp.set_defaults(func=cmd_evaluate)

    sp = common(sub.add_parser("search-schedule", help="evolutionary search for a sampling sequence"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--corpus")
    sp.add_argument("--out")
    sp.add_argument("--oracle", action="store_true", help="use the analytic Gaussian denoiser")
    sp.add_argument("--epochs", type=int, dest="ea_epochs")
    sp.add_argument("--eta", type=float)
    sp.set_defaults(func=cmd_search)

    sp = common(sub.add_parser("benchmark", help="runtime and quality per number of sampling steps"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--corpus")
    sp.add_argument("--split", default="test", choices=sorted(data_mod.SPLITS))
    sp.add_argument("--s-values", dest="s_values", help="comma-separated S list")
    sp.add_argument("--piecewise", action="store_true", help="add the two-stride sequence row")
    sp.add_argument("--sequence-file", dest="sequence_file", help="add a row for a searched sequence")
    sp.add_argument("--oracle", action="store_true")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--output", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_benchmark)
    return p


_OVERRIDABLE = ("seed", "image_size", "steps", "lr", "batch_size", "checkpoint_interval", "eta", "ea_epochs")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(**{k: getattr(args, k, None) for k in _OVERRIDABLE})
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CheckpointError, FloatingPointError, OSError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
