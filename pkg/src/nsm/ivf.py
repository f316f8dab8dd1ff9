"""Inverted-file index: shards from a clustering, centroid routing, exact in-shard scan."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from nsm.core import Clustering, Dataset, Metric, PreparedPoints, comparator_block, map_blocks
from nsm.errors import BadProbeCount, DimMismatch, LengthMismatch
from nsm.neighbors import topk_rows

SENTINEL = -1


@dataclass(frozen=True)
class IvfIndex:
    data: Dataset
    centroids: np.ndarray
    postings: tuple[np.ndarray, ...]
    assignment: np.ndarray = field(repr=False)

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class SearchResult:
    ids: np.ndarray
    short: bool


def cluster_means(data: Dataset, c: Clustering) -> np.ndarray:
    """Arithmetic cluster means; unit-normalized for cosine datasets. Empty clusters get a zero row."""
    x = data.points.astype(np.float64)
    counts = np.bincount(c.assignment, minlength=c.num_clusters)
    sums = np.zeros((c.num_clusters, data.d))
    np.add.at(sums, c.assignment, x)
    means = np.zeros_like(sums)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz, None]
    if data.metric is Metric.COSINE:
        norms = np.linalg.norm(means, axis=1)
        ok = norms > 0
        means[ok] /= norms[ok, None]
    return means


def build(data: Dataset, c: Clustering) -> IvfIndex:
    if c.m != data.m:
        raise LengthMismatch(f"clustering covers {c.m} points, dataset has {data.m}")
    if c.centroids is not None:
        if c.centroids.shape[1] != data.d:
            raise DimMismatch("centroid dimension differs from the dataset")
        cent = np.asarray(c.centroids, dtype=np.float64)
    else:
        cent = cluster_means(data, c)
    order = np.argsort(c.assignment, kind="stable")
    bounds = np.searchsorted(c.assignment[order], np.arange(c.num_clusters + 1))
    postings = tuple(order[bounds[i]:bounds[i + 1]] for i in range(c.num_clusters))
    for p in postings:
        p.setflags(write=False)
    return IvfIndex(data, cent, postings, c.assignment)


def _centroid_values(index: IvfIndex, queries: np.ndarray) -> np.ndarray:
    metric = index.data.metric
    q = PreparedPoints(queries, metric)
    cent = index.centroids
    if metric is Metric.COSINE:
        # zero (empty-cluster) centroids are never preferred
        norms = np.linalg.norm(cent, axis=1)
        safe = np.where(norms[:, None] > 0, cent / np.where(norms > 0, norms, 1.0)[:, None], 0.0)
        vals = 1.0 - q.x @ safe.T
        vals[:, norms == 0] = np.inf
        return vals
    c = object.__new__(PreparedPoints)
    c.metric = metric
    c.x = cent
    c.sq = np.einsum("ij,ij->i", cent, cent) if metric is Metric.EUCLIDEAN else None
    return comparator_block(q, c)


def route_many(index: IvfIndex, queries: np.ndarray, nprobe: int) -> np.ndarray:
    """Best ``nprobe`` cluster ids per query, ties to the lower cluster id."""
    if not 1 <= nprobe <= index.num_clusters:
        raise BadProbeCount(f"nprobe={nprobe} must lie in [1, {index.num_clusters}]")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if queries.shape[1] != index.data.d:
        raise DimMismatch("query dimension differs from the index")
    block = max(1, (1 << 22) // index.num_clusters)

    def run(s, e):
        return topk_rows(_centroid_values(index, queries[s:e]), nprobe)[0]

    return np.concatenate(map_blocks(run, queries.shape[0], block))


def route(index: IvfIndex, q: Sequence[float], nprobe: int) -> np.ndarray:
    return route_many(index, np.asarray(q, dtype=np.float32)[None, :], nprobe)[0]


def search(index: IvfIndex, q: Sequence[float], k: int, nprobe: int) -> SearchResult:
    """Exact top-``k`` over the union of the ``nprobe`` routed shards."""
    if k < 1:
        raise ValueError("k must be >= 1")
    probed = route(index, q, nprobe)
    cand = np.sort(np.concatenate([index.postings[c] for c in probed]))
    if cand.size == 0:
        return SearchResult(np.empty(0, dtype=np.int64), True)
    metric = index.data.metric
    qp = PreparedPoints(np.asarray(q, dtype=np.float32)[None, :], metric)
    xp = PreparedPoints(index.data.points[cand], metric)
    vals = comparator_block(qp, xp)
    ids, _ = topk_rows(vals, min(k, cand.size), cand)
    return SearchResult(ids[0], cand.size < k)


def accuracy(results: Sequence[Sequence[int]], ground_truth: Sequence[Sequence[int]], k: int) -> float:
    """Mean over queries of |S ∩ S'| / k, matched by id.

    Result rows shorter than ``k`` are padded with a sentinel that never matches.
    """
    if len(results) != len(ground_truth):
        raise LengthMismatch(f"{len(results)} result rows vs {len(ground_truth)} ground-truth rows")
    if len(results) == 0:
        raise LengthMismatch("no queries")
    total = 0.0
    for res, gt in zip(results, ground_truth):
        gt = list(gt)[:k]
        if len(gt) < k:
            raise LengthMismatch(f"ground truth row has fewer than k={k} entries")
        res = list(res)[:k]
        res += [SENTINEL] * (k - len(res))
        total += len(set(res) & set(gt)) / k
    return total / len(results)


def accuracy_grid(
    index: IvfIndex,
    queries: np.ndarray,
    ground_truth: np.ndarray,
    ks: Sequence[int],
    nprobes: Sequence[int],
) -> dict[tuple[int, int], float]:
    """Accuracy for every (k, nprobe) pair in one pass over the queries.

    Equivalent to calling ``search`` per query: a point is a candidate when its
    cluster is among the query's first ``nprobe`` routed clusters, and the
    top-``k`` candidates are taken under the global tie rule.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    gt = np.asarray(ground_truth)
    if gt.shape[0] != queries.shape[0]:
        raise LengthMismatch("ground truth and queries differ in length")
    L = index.num_clusters
    for p in nprobes:
        if not 1 <= p <= L:
            raise BadProbeCount(f"nprobe={p} must lie in [1, {L}]")
    kmax = max(ks)
    if gt.shape[1] < kmax:
        raise LengthMismatch(f"ground truth has {gt.shape[1]} columns, need {kmax}")
    metric = index.data.metric
    xp = PreparedPoints(index.data.points, metric)
    assign = index.assignment
    hits = {(k, p): 0 for k in ks for p in nprobes}
    block = max(1, (1 << 22) // index.data.m)
    for s in range(0, queries.shape[0], block):
        e = min(s + block, queries.shape[0])
        order = topk_rows(_centroid_values(index, queries[s:e]), L)[0]
        rank = np.empty_like(order)
        rank[np.arange(e - s)[:, None], order] = np.arange(L)[None, :]
        point_rank = rank[:, assign]
        vals = comparator_block(PreparedPoints(queries[s:e], metric), xp)
        for p in nprobes:
            masked = np.where(point_rank < p, vals, np.inf)
            ids, top_vals = topk_rows(masked, kmax)
            ids = np.where(np.isfinite(top_vals), ids, SENTINEL)
            for k in ks:
                res = ids[:, :k]
                truth = gt[s:e, :k]
                hits[(k, p)] += int((res[:, :, None] == truth[:, None, :]).any(axis=2).sum())
    n = queries.shape[0]
    return {(k, p): hits[(k, p)] / (n * k) for k in ks for p in nprobes}
