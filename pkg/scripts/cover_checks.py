"""Check the cover expectation identity and the clustering-NSM tail bound on uniform-center instances."""

import argparse
import math

import numpy as np

from nsm.neighbors import knn_from_matrix
from nsm.stability import CoverSampler, clusterability_tail_bound, point_nsm_many, verify_theorem2
from nsm.synth import uniform_cover_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--blocks", type=int, default=25)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    gaps = []
    for seed in range(args.instances):
        D = uniform_cover_matrix(blocks=2, seed=seed)
        rep = verify_theorem2(knn_from_matrix(D, k=2), D.shape[0], 3, group_size=2)
        gaps.append((rep.gap, rep.expected_grouped_nsm - rep.mean_point_nsm))
    gaps = np.array(gaps)
    print(f"max |cover gap| {np.abs(gaps[:, 0]).max():.2e}; min grouped margin {gaps[:, 1].min():.4f}")

    D = uniform_cover_matrix(blocks=args.blocks, seed=args.seed)
    nn = knn_from_matrix(D, k=2)
    sampler = CoverSampler(nn, D.shape[0], 3)
    L = sampler.num_balls
    mean_p = float(point_nsm_many(nn, np.arange(D.shape[0]), 3).mean())
    rng = np.random.default_rng(args.seed)
    vals = np.array([sampler.cover_nsm(sampler.sample(rng)) for _ in range(args.samples)])
    print(f"L={L} mean point-NSM {mean_p:.4f} sampled clustering-NSM {vals.mean():.4f} +- {vals.std():.4f}")
    for eps in (0.1, 0.05, 0.01):
        t = clusterability_tail_bound(mean_p, L, eps)
        print(f"eps={eps}: threshold {t:.4f}, frequency {np.mean(vals <= t):.4f}, "
              f"limit {eps + 3 * math.sqrt(eps / args.samples):.4f}")


if __name__ == "__main__":
    main()
