"""Standard (Lloyd) and spherical KMeans."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from nsm.core import Clustering, Dataset, Metric, map_blocks
from nsm.errors import BadParams, TooManyClusters, ZeroVector

ITERATION_GRID = (5, 10, 20, 40)
VARIANTS = ("standard", "spherical")


@dataclass(frozen=True)
class KMeansConfig:
    variant: Literal["standard", "spherical"] = "standard"
    num_clusters: int = 8
    iterations: int = 10
    seed: int = 0
    init: Literal["kmeans_pp", "random_points"] = "kmeans_pp"
    initial_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise BadParams(f"unknown KMeans variant {self.variant!r}")
        if self.init not in ("kmeans_pp", "random_points"):
            raise BadParams(f"unknown init {self.init!r}")
        if self.num_clusters < 1:
            raise BadParams("num_clusters must be >= 1")
        if self.iterations < 1:
            raise BadParams("iterations must be >= 1")


def default_num_clusters(m: int, t: float = 1.0) -> int:
    return max(1, int(round(t * math.sqrt(m))))


def _sq_dists(x: np.ndarray, x_sq: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    out = x_sq[:, None] - 2.0 * (x @ centroids.T) + c_sq[None, :]
    np.maximum(out, 0.0, out=out)
    return out


class _Geometry:
    """Assignment cost for one variant; smaller cost is a better centroid."""

    def __init__(self, x: np.ndarray, spherical: bool, workers: int | None):
        self.x = x
        self.spherical = spherical
        self.workers = workers
        self.x_sq = np.einsum("ij,ij->i", x, x)

    def costs(self, centroids: np.ndarray, rows: slice | np.ndarray = slice(None)) -> np.ndarray:
        x = self.x[rows]
        if self.spherical:
            return -(x @ centroids.T)
        return _sq_dists(x, self.x_sq[rows], centroids)

    def assign(self, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        block = max(1, (1 << 22) // max(centroids.shape[0], 1))

        def run(s, e):
            c = self.costs(centroids, slice(s, e))
            j = np.argmin(c, axis=1)
            return j, c[np.arange(e - s), j]

        parts = map_blocks(run, self.x.shape[0], block, self.workers)
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def update(self, assignment: np.ndarray, L: int, previous: np.ndarray) -> np.ndarray:
        # bincount accumulates in ascending point order, independent of threading
        counts = np.bincount(assignment, minlength=L)
        sums = np.empty((L, self.x.shape[1]))
        for j in range(self.x.shape[1]):
            sums[:, j] = np.bincount(assignment, weights=self.x[:, j], minlength=L)
        cent = previous.copy()
        nz = counts > 0
        cent[nz] = sums[nz] / counts[nz, None]
        if self.spherical:
            cent[nz] = _normalize_rows(cent[nz])
        return cent

    def spread(self, point_cost: np.ndarray) -> np.ndarray:
        """Per-point distance to its own centroid, larger is farther."""
        if self.spherical:
            return 1.0 + point_cost
        return point_cost


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(a, axis=1)
    n[n == 0] = 1.0
    return a / n[:, None]


def _init_centroids(geo: _Geometry, cfg: KMeansConfig, rng: np.random.Generator) -> np.ndarray:
    x = geo.x
    m, L = x.shape[0], cfg.num_clusters
    if cfg.initial_ids is not None:
        ids = np.asarray(cfg.initial_ids, dtype=np.int64)
        if ids.shape != (L,):
            raise BadParams(f"initial_ids must list {L} point ids")
    elif cfg.init == "random_points":
        ids = rng.choice(m, size=L, replace=False)
    else:
        if geo.spherical:
            xn = _normalize_rows(x)

            def seed_dist(i: int) -> np.ndarray:
                return np.maximum(1.0 - xn @ xn[i], 0.0)
        else:

            def seed_dist(i: int) -> np.ndarray:
                diff = x - x[i]
                return np.einsum("ij,ij->i", diff, diff)

        ids = np.empty(L, dtype=np.int64)
        ids[0] = rng.integers(m)
        best = seed_dist(ids[0])
        for i in range(1, L):
            total = best.sum()
            if total <= 0:
                # every point coincides with a chosen seed
                rest = np.setdiff1d(np.arange(m), ids[:i])
                ids[i] = rest[rng.integers(rest.size)]
            else:
                ids[i] = rng.choice(m, p=best / total)
            np.minimum(best, seed_dist(ids[i]), out=best)
    cent = x[ids].copy()
    if geo.spherical:
        cent = _normalize_rows(cent)
    return cent


def _repair_empty(geo: _Geometry, assignment: np.ndarray, cent: np.ndarray, point_cost: np.ndarray) -> int:
    L = cent.shape[0]
    counts = np.bincount(assignment, minlength=L)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return 0
    spread = geo.spread(point_cost).copy()
    for c in empty:
        movable = counts[assignment] > 1
        if not movable.any():
            break
        cand = np.where(movable, spread, -np.inf)
        p = int(np.argmax(cand))  # first maximum is the lowest id
        counts[assignment[p]] -= 1
        assignment[p] = c
        counts[c] = 1
        spread[p] = -np.inf
    return int(empty.size)


def kmeans(data: Dataset, cfg: KMeansConfig, workers: int | None = None) -> Clustering:
    """Cluster ``data`` with standard or spherical KMeans.

    Standard: squared-L2 assignment, arithmetic-mean update.
    Spherical: assignment by raw dot product against unit-norm centroids,
    update is the normalized arithmetic mean. Points of a cosine dataset are
    unit-normalized first.

    Stops after ``cfg.iterations`` assignment/update rounds or earlier when an
    assignment repeats. Empty clusters are reseeded with the point farthest
    from its centroid. ``meta`` records the rounds run and the objective
    after every assignment step.
    """
    m, L = data.m, cfg.num_clusters
    if L > m:
        raise TooManyClusters(f"{L} clusters for {m} points")
    spherical = cfg.variant == "spherical"
    x = data.points.astype(np.float64)
    if spherical or data.metric is Metric.COSINE:
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms == 0):
            raise ZeroVector("spherical KMeans and cosine data need nonzero points")
        if data.metric is Metric.COSINE:
            x = x / norms[:, None]
    geo = _Geometry(x, spherical, workers)
    rng = np.random.default_rng(cfg.seed)
    cent = _init_centroids(geo, cfg, rng)

    assignment = None
    objective: list[float] = []
    repairs = 0
    rounds = 0
    converged = False
    for _ in range(cfg.iterations):
        new_assign, point_cost = geo.assign(cent)
        objective.append(float(np.sum(geo.spread(point_cost))))
        rounds += 1
        if assignment is not None and np.array_equal(new_assign, assignment):
            converged = True
            break
        assignment = new_assign
        repairs += _repair_empty(geo, assignment, cent, point_cost)
        cent = geo.update(assignment, L, cent)

    meta = {
        "variant": cfg.variant,
        "num_clusters": L,
        "iterations": cfg.iterations,
        "rounds": rounds,
        "converged": converged,
        "seed": cfg.seed,
        "init": cfg.init,
        "objective": objective,
        "empty_repairs": repairs,
        "metric": data.metric.value,
    }
    return Clustering(assignment, L, None, cent, meta)
