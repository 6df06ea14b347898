"""Tabulate the prior on the number of occupied clusters for a given item count."""

import argparse

import numpy as np

from lapcom.distributions import BnbParams
from lapcom.sampler import sample_cluster_count_prior


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--items", type=int, default=20)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--bnb", type=float, nargs=3, default=(8.0, 18.0, 10.0))
    p.add_argument("--f", type=float, nargs=2, default=(6.0, 3.0))
    p.add_argument("--k-max", type=int)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    draws = sample_cluster_count_prior(args.items, args.draws, BnbParams(*args.bnb), *args.f,
                                       np.random.default_rng(args.seed), k_max=args.k_max)
    freq = np.bincount(draws) / draws.size
    for k in range(1, min(freq.size, 16)):
        print(f"{k:3d} {freq[k]:.4f}")
    print(f"mass on 2..4: {freq[2:5].sum():.4f}")


if __name__ == "__main__":
    main()
