"""Train the toy model with CFS and with uniform masking, report held-out accuracy.

    python3 scripts/cfs_vs_uniform.py --seeds 5
"""

import argparse

import numpy as np

from dynmask.core import Config
from dynmask.experiments import TRAIN_RECIPE, cfs_vs_uniform


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--recipe", default=TRAIN_RECIPE)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=0.1)
    args = ap.parse_args()

    cfg = Config(dim=16, layers=2, epochs=args.epochs, lr=args.lr)
    acc = {"cfs": [], "uniform": []}
    print("seed  strategy  top_quartile  overall  final_loss")
    for seed in range(args.seeds):
        for r in cfs_vs_uniform(seed, cfg, recipe=args.recipe):
            acc[r.strategy].append((r.top_quartile_acc, r.overall_acc))
            print(f"{seed:4d}  {r.strategy:8s}  {r.top_quartile_acc:12.4f}  {r.overall_acc:7.4f}  {r.curve[-1]:.4f}")
    for name, rows in acc.items():
        q, a = np.mean(rows, axis=0)
        print(f"mean  {name:8s}  {q:12.4f}  {a:7.4f}")


if __name__ == "__main__":
    main()
