"""Distance-based internal quality indices: Dunn and (weighted) Davies-Bouldin.

Both use true Euclidean distances on the raw points regardless of the
dataset metric.
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from nsm.core import Clustering, Dataset, cluster_sizes
from nsm.errors import BadParams, CoincidentCentroids, DegenerateDiameterZero, FewerThanTwoClusters

DUNN_MAX_POINTS = 200_000
DUNN_FLAVORS = ("classical", "centroid")
_BLOCK_ENTRIES = 1 << 22


def _exact_dist(x: np.ndarray, i: int, j: int) -> float:
    diff = x[i] - x[j]
    return float(np.sqrt(np.dot(diff, diff)))


def _sq_block(a: np.ndarray, a_sq: np.ndarray, b: np.ndarray, b_sq: np.ndarray) -> np.ndarray:
    out = a_sq[:, None] - 2.0 * (a @ b.T) + b_sq[None, :]
    np.maximum(out, 0.0, out=out)
    return out


def _max_diameter(x: np.ndarray, x_sq: np.ndarray, assignment: np.ndarray, L: int) -> float:
    best, pair = -1.0, None
    for c in range(L):
        idx = np.flatnonzero(assignment == c)
        if idx.size < 2:
            continue
        step = max(1, _BLOCK_ENTRIES // idx.size)
        for s in range(0, idx.size, step):
            rows = idx[s : s + step]
            d2 = _sq_block(x[rows], x_sq[rows], x[idx], x_sq[idx])
            flat = int(np.argmax(d2))
            val = d2.flat[flat]
            if val > best:
                best, pair = val, (rows[flat // idx.size], idx[flat % idx.size])
    if pair is None:
        return 0.0
    return _exact_dist(x, *pair)


def _min_single_linkage(x: np.ndarray, x_sq: np.ndarray, assignment: np.ndarray) -> float:
    m = x.shape[0]
    best, pair = np.inf, None
    step = max(1, _BLOCK_ENTRIES // m)
    for s in range(0, m, step):
        e = min(s + step, m)
        d2 = _sq_block(x[s:e], x_sq[s:e], x, x_sq)
        d2[assignment[s:e, None] == assignment[None, :]] = np.inf
        flat = int(np.argmin(d2))
        val = d2.flat[flat]
        if val < best:
            best, pair = val, (s + flat // m, flat % m)
    return _exact_dist(x, *pair)


def dunn_index(
    data: Dataset,
    c: Clustering,
    flavor: Literal["classical", "centroid"] = "classical",
    max_points: int = DUNN_MAX_POINTS,
    seed: int = 0,
) -> float:
    """Minimum inter-cluster distance over maximum cluster diameter.

    ``classical`` uses single linkage between clusters; ``centroid`` uses the
    distance between cluster means. Diameter is the largest intra-cluster pair
    distance in both. Above ``max_points`` a seeded uniform subsample is used.
    """
    if flavor not in DUNN_FLAVORS:
        raise BadParams(f"unknown Dunn flavor {flavor!r}")
    sizes = cluster_sizes(c)
    if np.count_nonzero(sizes) < 2:
        raise FewerThanTwoClusters("Dunn index needs at least two nonempty clusters")
    x = data.points.astype(np.float64)
    assignment = c.assignment
    if data.m > max_points:
        keep = np.sort(np.random.default_rng(seed).choice(data.m, size=max_points, replace=False))
        x, assignment = x[keep], assignment[keep]
        if np.unique(assignment).size < 2:
            raise FewerThanTwoClusters("subsample kept fewer than two clusters")
    x_sq = np.einsum("ij,ij->i", x, x)
    diameter = _max_diameter(x, x_sq, assignment, c.num_clusters)
    if diameter == 0:
        raise DegenerateDiameterZero("every cluster has zero diameter")
    if flavor == "classical":
        inter = _min_single_linkage(x, x_sq, assignment)
    else:
        means = _means(x, assignment, c.num_clusters)
        present = np.flatnonzero(np.bincount(assignment, minlength=c.num_clusters) > 0)
        mu = means[present]
        d = np.sqrt(_sq_block(mu, np.einsum("ij,ij->i", mu, mu), mu, np.einsum("ij,ij->i", mu, mu)))
        np.fill_diagonal(d, np.inf)
        inter = float(d.min())
    return inter / diameter


def _means(x: np.ndarray, assignment: np.ndarray, L: int) -> np.ndarray:
    counts = np.bincount(assignment, minlength=L)
    sums = np.zeros((L, x.shape[1]))
    np.add.at(sums, assignment, x)
    out = np.zeros_like(sums)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def db_index(
    data: Dataset,
    c: Clustering,
    weights: "Literal['uniform', 'by_size'] | np.ndarray" = "uniform",
) -> float:
    """Weighted Davies-Bouldin index; ``uniform`` weights give the classical index.

    sigma_i is the mean distance of cluster i's points to its mean mu_i and the
    per-cluster term is max over j != i of (sigma_i + sigma_j) / |mu_i - mu_j|.
    Smaller is better. Empty clusters are ignored.
    """
    sizes = cluster_sizes(c)
    present = np.flatnonzero(sizes > 0)
    if present.size < 2:
        raise FewerThanTwoClusters("DB index needs at least two nonempty clusters")
    x = data.points.astype(np.float64)
    means = _means(x, c.assignment, c.num_clusters)
    spread = np.sqrt(np.sum((x - means[c.assignment]) ** 2, axis=1))
    sigma = np.bincount(c.assignment, weights=spread, minlength=c.num_clusters)[present] / sizes[present]
    mu = means[present]
    diff = mu[:, None, :] - mu[None, :, :]
    sep = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    off = ~np.eye(present.size, dtype=bool)
    if np.any(sep[off] == 0):
        raise CoincidentCentroids("two clusters share the same mean")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (sigma[:, None] + sigma[None, :]) / sep
    ratio[~off] = -np.inf
    worst = ratio.max(axis=1)
    if isinstance(weights, str):
        if weights == "uniform":
            w = np.ones(present.size)
        elif weights == "by_size":
            w = sizes[present].astype(np.float64)
        else:
            raise BadParams(f"unknown weight scheme {weights!r}")
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (c.num_clusters,):
            raise BadParams(f"weights must have length {c.num_clusters}")
        w = w[present]
        if np.any(w <= 0):
            raise BadParams("weights must be positive")
    return float(np.dot(w, worst) / w.sum())
