#!/usr/bin/env python3
"""Sweep every sampling strategy on the desk benchmark.

Covers the baseline, periodic (5, 10), probabilistic (0.2, 0.5, 0.7), and
their delayed variants, reporting final accuracy and the realized training
FLOPs savings for each.
"""

import argparse

import numpy as np

from gradsamp import dataio, model, sampler
from gradsamp.rng import SeedBundle, derive

STRATEGIES = [
    ("baseline", sampler.Never()),
    ("Pe=5", sampler.Periodic(5)),
    ("Pe=10", sampler.Periodic(10)),
    ("Pr=0.2", sampler.Probabilistic(0.2)),
    ("Pr=0.5", sampler.Probabilistic(0.5)),
    ("Pr=0.7", sampler.Probabilistic(0.7)),
    ("DP=5", sampler.DelayedPeriodic(5)),
    ("DP=10", sampler.DelayedPeriodic(10)),
    ("DR=0.2", sampler.DelayedRandom(0.2)),
    ("DR=0.5", sampler.DelayedRandom(0.5)),
    ("DR=0.7", sampler.DelayedRandom(0.7)),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=100)
    args = parser.parse_args()

    print(f"{'strategy':>10}  {'val acc (mean +- sd)':>22}  {'savings':>8}  {'tflops':>10}")
    for name, strategy in STRATEGIES:
        accs, savings, totals = [], [], []
        for seed in range(args.seeds):
            ds = dataio.gen_blobs(3000, 10, 3, 0.8, seed=derive(seed, "data"))
            train, val = dataio.split_dataset(ds, 0.2, derive(seed, "split"))
            cfg = sampler.TrainRunConfig(
                epochs=args.epochs,
                strategy=strategy,
                hyper=model.SgdHyper(),
                batch_size=32,
                seeds=SeedBundle.from_master(seed),
            )
            report = sampler.train_with_gradsamp(model.mlp(10, [64], 3), train, val, cfg)
            accs.append(report.records[-1].val_acc)
            savings.append(report.ledger.savings_fraction())
            totals.append(report.ledger.cumulative)
        print(
            f"{name:>10}  {100 * np.mean(accs):>10.2f} +- {100 * np.std(accs):>5.2f}   "
            f"{np.mean(savings):>8.1%}  {np.mean(totals) / 1e12:>10.6f}"
        )


if __name__ == "__main__":
    main()
