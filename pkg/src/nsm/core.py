"""Domain types shared by every module: metrics, datasets, clusterings, neighbor tables."""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from nsm.errors import DimMismatch, InvalidClustering, InvalidDataset, ZeroVector

THREADS_ENV = "NSM_THREADS"


class Metric(str, enum.Enum):
    """Comparison rule for a dataset. Smaller comparator values are nearer."""

    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    INNER_PRODUCT = "inner_product"

    @classmethod
    def parse(cls, value: "str | Metric") -> "Metric":
        if isinstance(value, Metric):
            return value
        aliases = {
            "l2": cls.EUCLIDEAN,
            "euclidean": cls.EUCLIDEAN,
            "cos": cls.COSINE,
            "cosine": cls.COSINE,
            "ip": cls.INNER_PRODUCT,
            "inner_product": cls.INNER_PRODUCT,
            "mips": cls.INNER_PRODUCT,
        }
        try:
            return aliases[value.lower()]
        except KeyError:
            raise ValueError(f"unknown metric {value!r}") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    metric: Metric = Metric.EUCLIDEAN

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.ndim != 2:
            raise InvalidDataset(f"points must be a 2-D matrix, got shape {pts.shape}")
        m, d = pts.shape
        if m < 2 or d < 1:
            raise InvalidDataset(f"need at least 2 points and 1 dimension, got {m}x{d}")
        with np.errstate(over="ignore", invalid="ignore"):
            pts32 = np.array(pts, dtype=np.float32)
        if not np.all(np.isfinite(pts32)):
            raise InvalidDataset("dataset contains NaN, Inf or float32-overflowing coordinates")
        object.__setattr__(self, "points", _frozen(pts32))
        object.__setattr__(self, "metric", Metric.parse(self.metric))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def scaled(self, factor: float) -> "Dataset":
        return Dataset(self.points.astype(np.float64) * factor, self.metric)


@dataclass(frozen=True)
class Clustering:
    """Total assignment of ``m`` points to ``num_clusters`` clusters.

    ``weights`` defaults to cluster sizes. Empty clusters get weight 0 and are
    skipped by the measures that average over clusters.
    """

    assignment: np.ndarray
    num_clusters: int
    weights: np.ndarray | None = None
    centroids: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1:
            raise InvalidClustering("assignment must be one-dimensional")
        if not np.issubdtype(a.dtype, np.integer):
            if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
                raise InvalidClustering("assignment must hold integer cluster ids")
        a = a.astype(np.int64)
        L = int(self.num_clusters)
        if L < 1:
            raise InvalidClustering("num_clusters must be >= 1")
        if a.size and (a.min() < 0 or a.max() >= L):
            raise InvalidClustering("cluster id out of range")
        object.__setattr__(self, "assignment", _frozen(a))
        object.__setattr__(self, "num_clusters", L)
        sizes = np.bincount(a, minlength=L)
        if self.weights is None:
            w = sizes.astype(np.float64)
        else:
            w = np.asarray(self.weights, dtype=np.float64).copy()
            if w.shape != (L,):
                raise InvalidClustering(f"weights must have length {L}")
            if np.any(w[sizes > 0] <= 0) or np.any(w < 0):
                raise InvalidClustering("weights of nonempty clusters must be positive")
            w[sizes == 0] = 0.0
        object.__setattr__(self, "weights", _frozen(w))
        if self.centroids is not None:
            c = np.asarray(self.centroids, dtype=np.float32)
            if c.ndim != 2 or c.shape[0] != L:
                raise InvalidClustering(f"centroids must be a {L} x d matrix")
            object.__setattr__(self, "centroids", _frozen(np.array(c)))

    @property
    def m(self) -> int:
        return self.assignment.shape[0]

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == i)

    def with_weights(self, weights: "np.ndarray | str") -> "Clustering":
        if isinstance(weights, str):
            if weights == "uniform":
                weights = (cluster_sizes(self) > 0).astype(np.float64)
            elif weights == "by_size":
                weights = None
            else:
                raise ValueError(f"unknown weight scheme {weights!r}")
        return Clustering(self.assignment, self.num_clusters, weights, self.centroids, dict(self.meta))

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]], m: int | None = None) -> "Clustering":
        m = m if m is not None else sum(len(g) for g in groups)
        a = np.full(m, -1, dtype=np.int64)
        for i, g in enumerate(groups):
            g = list(g)
            if np.any(a[g] >= 0) or len(set(g)) != len(g):
                raise InvalidClustering(f"group {i} repeats a point")
            a[g] = i
        if np.any(a < 0):
            raise InvalidClustering("groups do not cover every point")
        return cls(a, len(groups))


class NeighborSource(str, enum.Enum):
    EXACT = "exact"
    APPROXIMATE = "approximate"
    IMPORTED = "imported"


@dataclass(frozen=True)
class NeighborTable:
    """Ranked neighbor ids per row; column 0 is the nearest neighbor."""

    ids: np.ndarray
    distances: np.ndarray | None = None
    source: NeighborSource = NeighborSource.EXACT
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim == 1:
            ids = ids[:, None]
        if ids.ndim != 2 or ids.shape[1] < 1:
            raise ValueError("ids must be a rows x k matrix with k >= 1")
        object.__setattr__(self, "ids", _frozen(ids.astype(np.int64)))
        if self.distances is not None:
            dist = np.asarray(self.distances, dtype=np.float64)
            if dist.shape != ids.shape:
                raise ValueError("distances must match ids in shape")
            object.__setattr__(self, "distances", _frozen(dist))
        object.__setattr__(self, "source", NeighborSource(self.source))

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    @property
    def rows(self) -> int:
        return self.ids.shape[0]

    @property
    def nearest(self) -> np.ndarray:
        return self.ids[:, 0]

    def truncated(self, k: int) -> "NeighborTable":
        dist = None if self.distances is None else self.distances[:, :k]
        return NeighborTable(self.ids[:, :k], dist, self.source, dict(self.meta))

    def validate_self(self) -> None:
        m = self.rows
        ids = self.ids
        if ids.min() < 0 or ids.max() >= m:
            raise ValueError("neighbor id out of range")
        if np.any(ids == np.arange(m)[:, None]):
            raise ValueError("a row lists its own id as a neighbor")


def comparator_value(metric: "Metric | str", u: Sequence[float], v: Sequence[float]) -> float:
    """Comparator between two vectors under ``metric``; smaller is nearer.

    Euclidean returns the squared L2 distance.
    """
    metric = Metric.parse(metric)
    a = np.asarray(u, dtype=np.float64).ravel()
    b = np.asarray(v, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimMismatch(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if metric is Metric.EUCLIDEAN:
        diff = a - b
        return float(np.dot(diff, diff))
    if metric is Metric.INNER_PRODUCT:
        return float(-np.dot(a, b))
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine comparator is undefined for a zero vector")
    return float(1.0 - np.dot(a, b) / (na * nb))


def cluster_sizes(c: Clustering) -> np.ndarray:
    return np.bincount(c.assignment, minlength=c.num_clusters)


class PreparedPoints:
    """Float64 copy of a point matrix with whatever the metric needs precomputed."""

    def __init__(self, points: np.ndarray, metric: Metric):
        self.metric = metric
        x = np.asarray(points, dtype=np.float64)
        if metric is Metric.COSINE:
            norms = np.linalg.norm(x, axis=1)
            if np.any(norms == 0):
                raise ZeroVector("cosine metric requires nonzero vectors")
            x = x / norms[:, None]
        self.x = x
        self.sq = np.einsum("ij,ij->i", x, x) if metric is Metric.EUCLIDEAN else None

    def __len__(self) -> int:
        return self.x.shape[0]

    def take(self, rows: np.ndarray) -> "PreparedPoints":
        out = object.__new__(PreparedPoints)
        out.metric = self.metric
        out.x = self.x[rows]
        out.sq = None if self.sq is None else self.sq[rows]
        return out


def comparator_block(q: PreparedPoints, x: PreparedPoints) -> np.ndarray:
    """All comparator values between the rows of ``q`` and ``x`` (float64)."""
    if q.x.shape[1] != x.x.shape[1]:
        raise DimMismatch(f"dimension mismatch: {q.x.shape[1]} vs {x.x.shape[1]}")
    dots = q.x @ x.x.T
    if q.metric is Metric.EUCLIDEAN:
        out = q.sq[:, None] - 2.0 * dots + x.sq[None, :]
        np.maximum(out, 0.0, out=out)
        return out
    if q.metric is Metric.INNER_PRODUCT:
        return np.negative(dots, out=dots)
    return np.subtract(1.0, dots, out=dots)


def pairwise_comparator(metric: "Metric | str", a: np.ndarray, b: np.ndarray) -> np.ndarray:
    metric = Metric.parse(metric)
    return comparator_block(PreparedPoints(a, metric), PreparedPoints(b, metric))


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def map_blocks(fn: Callable[[int, int], Any], n: int, block: int, workers: int | None = None) -> list:
    """Apply ``fn(start, stop)`` over fixed row blocks, results in block order.

    Block boundaries depend only on ``n`` and ``block`` so the output never
    depends on the worker count.
    """
    bounds = [(s, min(s + block, n)) for s in range(0, n, block)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(bounds) <= 1:
        return [fn(s, e) for s, e in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
