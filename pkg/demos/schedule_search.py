"""Evolutionary search for a 10-step sampling sequence.

Fitness is validation PSNR with the exact Gaussian denoiser, so each
evaluation takes milliseconds and the search finishes in seconds.

    python3 demos/schedule_search.py
"""

import numpy as np

from uwdiff.data import SPLITS, make_pair
from uwdiff.ea import EAConfig, SearchLog, search
from uwdiff.oracle import GaussianPrior, OracleDenoiser
from uwdiff.schedule import default_piecewise, format_sequence, linear_beta_schedule, uniform_sequence
from uwdiff.train import evaluate


def main():
    sched = linear_beta_schedule(2000)
    clean = np.stack([make_pair(0, "val", i)[0] for i in range(SPLITS["val"])])
    model = OracleDenoiser(GaussianPrior(0.05), sched)

    def fitness(seq):
        return evaluate(model, clean, clean, seq, 0.0, 0, sched).psnr

    log = SearchLog()
    best = search(EAConfig(epochs=50, seed=0), 2000, fitness, on_score=log)
    print(f"scored {len(log.rows)} distinct sequences")
    for label, seq in (("uniform", uniform_sequence(2000, 10)), ("piecewise", default_piecewise(2000)), ("searched", best)):
        print(f"{label:10s} {fitness(seq):7.3f} dB  {format_sequence(seq)}")


if __name__ == "__main__":
    main()
