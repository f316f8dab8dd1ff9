"""Nearest-neighbor tables: exact brute force, distance-matrix oracle, and an IVF-backed approximate 1-NN."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nsm.core import (
    Clustering,
    Dataset,
    Metric,
    NeighborSource,
    NeighborTable,
    PreparedPoints,
    comparator_block,
    map_blocks,
)
from nsm.errors import BadProbeCount, DimMismatch, KTooLarge

MAX_K = 4096
# Target number of float64 entries per comparator block (~64 MB).
_BLOCK_ENTRIES = 1 << 23


def _block_rows(n_cols: int) -> int:
    return max(1, min(4096, _BLOCK_ENTRIES // max(n_cols, 1)))


def topk_rows(values: np.ndarray, k: int, col_ids: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``k`` smallest entries ordered by (value, id).

    ``col_ids`` must be ascending when given; it defaults to column positions.
    Returns (ids, values), both ``rows x k``.
    """
    b, n = values.shape
    cols = np.arange(n) if col_ids is None else np.asarray(col_ids)
    if k >= n:
        order = np.argsort(values, axis=1, kind="stable")
        return cols[order], np.take_along_axis(values, order, axis=1)
    part = np.argpartition(values, k - 1, axis=1)[:, :k]
    part_vals = np.take_along_axis(values, part, axis=1)
    order = np.lexsort((part, part_vals), axis=-1)
    part = np.take_along_axis(part, order, axis=1)
    part_vals = np.take_along_axis(part_vals, order, axis=1)
    # argpartition may pick a higher id among values tied at the k-th place
    kth = part_vals[:, -1]
    tied_out = (values <= kth[:, None]).sum(axis=1) > k
    for r in np.flatnonzero(tied_out):
        row = values[r]
        cand = np.flatnonzero(row <= kth[r])
        sel = cand[np.argsort(row[cand], kind="stable")[:k]]
        part[r] = sel
        part_vals[r] = row[sel]
    return cols[part], part_vals


def _knn_prepared(q: PreparedPoints, x: PreparedPoints, k: int, self_offset: int | None, workers) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    block = _block_rows(n)

    def run(s: int, e: int):
        vals = comparator_block(q.take(np.arange(s, e)), x)
        if self_offset is not None:
            rows = np.arange(e - s)
            vals[rows, rows + s + self_offset] = np.inf
        return topk_rows(vals, k)

    parts = map_blocks(run, len(q), block, workers)
    ids = np.concatenate([p[0] for p in parts])
    dist = np.concatenate([p[1] for p in parts])
    return ids, dist


def exact_knn(data: Dataset, queries: "np.ndarray | Dataset | None" = None, k: int = 1, workers: int | None = None) -> NeighborTable:
    """Brute-force k-NN under the dataset metric.

    ``queries=None`` means self mode: every dataset point is a query and its
    own id is excluded. Equal comparator values are ordered by ascending id.
    """
    if k < 1:
        raise KTooLarge("k must be at least 1")
    if k > MAX_K:
        raise KTooLarge(f"k={k} exceeds the per-table cap of {MAX_K}")
    x = PreparedPoints(data.points, data.metric)
    if queries is None:
        if k > data.m - 1:
            raise KTooLarge(f"self-mode k={k} needs at least k+1={k + 1} points, have {data.m}")
        ids, dist = _knn_prepared(x, x, k, 0, workers)
        return NeighborTable(ids, dist, NeighborSource.EXACT, {"mode": "self", "metric": data.metric.value})
    qpts = queries.points if isinstance(queries, Dataset) else np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if qpts.shape[1] != data.d:
        raise DimMismatch(f"queries have {qpts.shape[1]} dims, dataset has {data.d}")
    if k > data.m:
        raise KTooLarge(f"k={k} exceeds dataset size {data.m}")
    q = PreparedPoints(qpts, data.metric)
    ids, dist = _knn_prepared(q, x, k, None, workers)
    return NeighborTable(ids, dist, NeighborSource.EXACT, {"mode": "queries", "metric": data.metric.value})


@dataclass(frozen=True)
class DistanceMatrixOracle:
    """Arbitrary δ given as an explicit matrix; no symmetry or sign assumed."""

    matrix: np.ndarray

    def __post_init__(self):
        D = np.array(self.matrix, dtype=np.float64)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("distance matrix must be square")
        off = ~np.eye(D.shape[0], dtype=bool)
        if not np.all(np.isfinite(D[off])):
            raise ValueError("distance matrix entries must be finite")
        D.setflags(write=False)
        object.__setattr__(self, "matrix", D)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


def knn_from_matrix(oracle: "DistanceMatrixOracle | np.ndarray", k: int = 1) -> NeighborTable:
    if not isinstance(oracle, DistanceMatrixOracle):
        oracle = DistanceMatrixOracle(oracle)
    m = oracle.m
    if k < 1 or k > m - 1:
        raise KTooLarge(f"k={k} must lie in [1, {m - 1}]")
    D = oracle.matrix.copy()
    np.fill_diagonal(D, np.inf)
    ids, dist = topk_rows(D, k)
    return NeighborTable(ids, dist, NeighborSource.EXACT, {"mode": "matrix"})


def approximate_clusters(m: int) -> int:
    return min(m, math.ceil(4 * math.sqrt(m)))


def approximate_1nn(
    data: Dataset,
    clusters: int | None = None,
    probes: int = 10,
    seed: int = 0,
    clustering: Clustering | None = None,
    iterations: int = 10,
) -> NeighborTable:
    """Approximate nearest neighbor of every point via clustering-based search.

    Points are partitioned into ``clusters`` (default ceil(4 sqrt m)) shards and
    each point scans only the ``probes`` shards nearest to it. The point itself
    is never returned. Rows whose probed shards hold no other point fall back
    to an exact scan; their count is recorded in ``meta["fallback_rows"]``.
    """
    from nsm.clustering import KMeansConfig, kmeans
    from nsm.ivf import build, route_many

    if clustering is None:
        L = approximate_clusters(data.m) if clusters is None else clusters
        if probes > L:
            raise BadProbeCount(f"probes={probes} exceeds clusters={L}")
        variant = "standard" if data.metric is Metric.EUCLIDEAN else "spherical"
        clustering = kmeans(data, KMeansConfig(variant=variant, num_clusters=L, iterations=iterations, seed=seed))
    L = clustering.num_clusters
    if not 1 <= probes <= L:
        raise BadProbeCount(f"probes={probes} must lie in [1, {L}]")
    index = build(data, clustering)
    probed = route_many(index, data.points, probes)

    m = data.m
    x = PreparedPoints(data.points, data.metric)
    best_val = np.full(m, np.inf)
    best_id = np.full(m, m, dtype=np.int64)
    flat = probed.ravel()
    order = np.argsort(flat, kind="stable")
    owners = (order // probes).astype(np.int64)
    starts = np.searchsorted(flat[order], np.arange(L + 1))
    for c in range(L):
        members = index.postings[c]
        qs = owners[starts[c]:starts[c + 1]]
        if members.size == 0 or qs.size == 0:
            continue
        vals = comparator_block(x.take(qs), x.take(members))
        vals[qs[:, None] == members[None, :]] = np.inf
        j = np.argmin(vals, axis=1)
        v = vals[np.arange(qs.size), j]
        cand = members[j]
        cur_v, cur_id = best_val[qs], best_id[qs]
        better = (v < cur_v) | ((v == cur_v) & (cand < cur_id))
        best_val[qs[better]] = v[better]
        best_id[qs[better]] = cand[better]

    missing = np.flatnonzero(~np.isfinite(best_val))
    if missing.size:
        vals = comparator_block(x.take(missing), x)
        vals[np.arange(missing.size), missing] = np.inf
        ids, dist = topk_rows(vals, 1)
        best_id[missing] = ids[:, 0]
        best_val[missing] = dist[:, 0]
    meta = {
        "mode": "self",
        "metric": data.metric.value,
        "clusters": L,
        "probes": probes,
        "fallback_rows": int(missing.size),
    }
    return NeighborTable(best_id[:, None], best_val[:, None], NeighborSource.APPROXIMATE, meta)
