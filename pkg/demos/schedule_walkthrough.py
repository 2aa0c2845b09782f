"""Noise schedule, sampling sequences and the closed-form forward process.

    python3 demos/schedule_walkthrough.py
"""

import numpy as np

from uwdiff.diffusion import predict_x0, q_sample
from uwdiff.schedule import (
    default_piecewise,
    format_sequence,
    linear_beta_schedule,
    posterior_variance,
    uniform_sequence,
    validate_sequence,
)


def main():
    sched = linear_beta_schedule(2000)
    print(f"T={sched.T} beta[1]={sched.beta[1]:.1e} beta[T]={sched.beta[-1]:.1e}")
    for t in (0, 1, 500, 1000, 1500, 2000):
        print(f"  alpha_bar[{t:4d}] = {sched.alpha_bar[t]:.6f}")

    # signal-to-noise falls monotonically; most of it is gone by t ~ 1000
    snr = sched.alpha_bar[1:] / (1 - sched.alpha_bar[1:])
    print(f"SNR at t=1: {snr[0]:.3e}, t=1000: {snr[999]:.3f}, t=2000: {snr[-1]:.2e}")

    uni = uniform_sequence(2000, 10)
    pw = default_piecewise(2000)
    print("uniform S=10:  ", format_sequence(uni))
    print("piecewise:     ", format_sequence(pw))
    print("legal:", validate_sequence(uni, 2000), validate_sequence(pw, 2000), validate_sequence([2000, 5, 7, 0], 2000))

    # skip-step posterior variance grows with the jump length
    for t_hi, t_lo in ((1000, 999), (1000, 800), (1000, 0)):
        print(f"  var({t_hi} -> {t_lo}) = {posterior_variance(sched, t_hi, t_lo):.6f}")

    rng = np.random.default_rng(0)
    x0 = rng.uniform(-1, 1, (4, 4, 3))
    eps = rng.standard_normal(x0.shape)
    x_t = q_sample(x0, 1200, eps, sched)
    back = predict_x0(x_t, eps, 1200, sched)
    print(f"x0 recovered from x_t with the true noise: max err {np.abs(back - x0).max():.1e}")


if __name__ == "__main__":
    main()
