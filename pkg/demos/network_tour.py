"""The channel-attention transformer denoiser: shapes, size and one train step.

    python3 demos/network_tour.py
"""

import numpy as np

from uwdiff.nn import Denoiser, DenoiserConfig, load_denoiser, save_denoiser
from uwdiff.schedule import linear_beta_schedule
from uwdiff.train import Adam, train_step


def main():
    model = Denoiser(DenoiserConfig(), seed=0)
    print(f"parameters: {model.params.count():,}")
    for name, shape in list(model.params.shapes().items())[:6]:
        print(f"  {name:20s} {shape}")

    rng = np.random.default_rng(0)
    x_t = rng.standard_normal((2, 64, 64, 3)).astype(np.float32)
    c = rng.uniform(-1, 1, (2, 64, 64, 3)).astype(np.float32)
    eps = model(x_t, c, np.array([10, 1500]))
    print("eps_hat:", eps.shape, eps.dtype, f"|eps_hat| max {np.abs(eps).max():.3g} (zero-initialised head)")

    sched = linear_beta_schedule(2000)
    opt = Adam(model.params, lr=1e-3)
    clean = rng.uniform(-1, 1, (8, 64, 64, 3))
    degraded = 0.6 * clean + 0.1
    losses = [train_step(model, opt, clean, degraded, rng, sched) for _ in range(5)]
    print("first losses:", " ".join(f"{v:.3f}" for v in losses))

    save_denoiser(model, "/tmp/tour.ckpt")
    back = load_denoiser("/tmp/tour.ckpt")
    same = np.array_equal(back(x_t, c, 700), model(x_t, c, 700))
    print("checkpoint round trip reproduces outputs:", same)


if __name__ == "__main__":
    main()
