"""Rank correlation of omega and windowed speed with complexity labels, across seeds.

    python3 scripts/compare_signals.py --seeds 20 --recipe static:32,sine@2:32,noise:32
"""

import argparse

import numpy as np

from dynmask.core import Config
from dynmask.experiments import DEFAULT_RECIPE, signal_correlations
from dynmask.io import rng_for
from dynmask.tokenizer import synth_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n-seq", type=int, default=8)
    ap.add_argument("--recipe", default=DEFAULT_RECIPE)
    args = ap.parse_args()

    cfg = Config()
    print("seed  omega   velocity")
    means = {"omega": [], "velocity": []}
    for seed in range(args.seeds):
        # same corpus seed derivation as the compare-signals command
        corpus = synth_corpus(args.recipe, args.n_seq, D_m=4, seed=int(rng_for(seed, "corpus").integers(2**31)),
                              W=cfg.W)
        rows = signal_correlations(corpus, cfg)
        per = {s: float(np.mean([r for name, _, r in rows if name == s])) for s in means}
        for s, v in per.items():
            means[s].append(v)
        print(f"{seed:4d}  {per['omega']:.4f}  {per['velocity']:.4f}")
    print(f"mean  {np.mean(means['omega']):.4f}  {np.mean(means['velocity']):.4f}")
    print(f"omega positive in {sum(v > 0 for v in means['omega'])}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
