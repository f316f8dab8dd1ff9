"""Neighborhood stability measures (set, clustering, point) and the ball-cover machinery behind them.

All measures read nearest neighbors from a :class:`NeighborTable` computed over
the full dataset; they never look at vectors.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from nsm.core import Clustering, Dataset, NeighborTable, map_blocks
from nsm.errors import AllClustersEmpty, BadParams, EmptySet, MissingRows, RadiusTooLarge, TooLarge
from nsm.stats import lower_quantile

MAX_ENUMERATION = 24


def _nearest(nn: NeighborTable) -> np.ndarray:
    return nn.ids[:, 0]


def set_nsm(nn: NeighborTable, members: Iterable[int]) -> float:
    """Fraction of ``members`` whose nearest neighbor is also a member."""
    ids = np.unique(np.fromiter(members, dtype=np.int64))
    if ids.size == 0:
        raise EmptySet("set-NSM of an empty set")
    m = nn.rows
    if ids.min() < 0 or ids.max() >= m:
        raise MissingRows(f"member id outside the {m} rows of the neighbor table")
    inside = np.zeros(m, dtype=bool)
    inside[ids] = True
    return float(np.count_nonzero(inside[_nearest(nn)[ids]]) / ids.size)


def per_cluster_nsm(nn: NeighborTable, c: Clustering) -> tuple[np.ndarray, np.ndarray]:
    """(set-NSM per cluster, cluster sizes). Empty clusters get NaN."""
    if nn.rows != c.m:
        raise MissingRows(f"neighbor table has {nn.rows} rows, clustering has {c.m} points")
    a = c.assignment
    stable = a[_nearest(nn)] == a
    sizes = np.bincount(a, minlength=c.num_clusters)
    kept = np.bincount(a[stable], minlength=c.num_clusters)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(sizes > 0, kept / np.maximum(sizes, 1), np.nan)
    return frac, sizes


def clustering_nsm(nn: NeighborTable, c: Clustering, weights: "np.ndarray | str | None" = None) -> float:
    """Weighted mean of per-cluster set-NSM. Linear in the number of points.

    ``weights`` overrides ``c.weights``; ``"uniform"`` and ``"by_size"`` are accepted.
    """
    if weights is not None:
        c = c.with_weights(weights)
    frac, sizes = per_cluster_nsm(nn, c)
    nonempty = sizes > 0
    if not nonempty.any():
        raise AllClustersEmpty("clustering has no nonempty cluster")
    if not nonempty.all():
        warnings.warn(f"{int((~nonempty).sum())} empty clusters skipped", RuntimeWarning, stacklevel=2)
    w = c.weights[nonempty]
    return float(np.dot(w, frac[nonempty]) / w.sum())


def ball(nn: NeighborTable, u: int, r: int) -> np.ndarray:
    """``u`` together with its ``r - 1`` nearest neighbors."""
    if r < 1:
        raise BadParams("radius must be >= 1")
    if r - 1 > nn.k:
        raise RadiusTooLarge(f"radius {r} needs {r - 1} neighbors, table has {nn.k}")
    return np.concatenate(([u], nn.ids[u, : r - 1]))


def point_nsm(nn: NeighborTable, u: int, r: int) -> float:
    if r < 2:
        raise BadParams("point-NSM radius must be >= 2")
    return set_nsm(nn, ball(nn, u, r))


def point_nsm_many(nn: NeighborTable, ids: np.ndarray, r: int, workers: int | None = None) -> np.ndarray:
    """Vectorized point-NSM for many centers; values are multiples of 1/r."""
    if r < 2:
        raise BadParams("point-NSM radius must be >= 2")
    if r - 1 > nn.k:
        raise RadiusTooLarge(f"radius {r} needs {r - 1} neighbors, table has {nn.k}")
    ids = np.asarray(ids, dtype=np.int64)
    nearest = _nearest(nn)
    m = np.int64(nn.rows)

    def run(s, e):
        u = ids[s:e]
        balls = np.concatenate((u[:, None], nn.ids[u, : r - 1]), axis=1)
        rows = np.arange(e - s, dtype=np.int64)[:, None]
        keys = np.sort(balls + rows * m, axis=1).ravel()
        probe = (nearest[balls] + rows * m).ravel()
        pos = np.minimum(np.searchsorted(keys, probe), keys.size - 1)
        hit = (keys[pos] == probe).reshape(balls.shape)
        return hit.sum(axis=1) / r

    block = max(1, (1 << 20) // r)
    parts = map_blocks(run, ids.size, block, workers)
    return np.concatenate(parts) if parts else np.empty(0)


@dataclass(frozen=True)
class PointNsmDistribution:
    radius: int
    ids: np.ndarray
    values: np.ndarray
    sample_fraction: float
    seed: int | None
    quantile_levels: tuple[float, ...] = (0.1,)
    summary: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return self.summary["mean"]

    def quantile(self, alpha: float) -> float:
        return lower_quantile(self.values, alpha)


def sample_ids(m: int, fraction: float, seed: int | None) -> np.ndarray:
    if not 0 < fraction <= 1:
        raise BadParams("sample fraction must lie in (0, 1]")
    if fraction == 1:
        return np.arange(m)
    n = max(1, int(round(fraction * m)))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(m, size=n, replace=False))


def point_nsm_distribution(
    data: "Dataset | int",
    nn: NeighborTable,
    r: int,
    sample_fraction: float = 0.05,
    seed: int | None = 0,
    quantiles: Sequence[float] = (0.1,),
    workers: int | None = None,
) -> PointNsmDistribution:
    """Point-NSM over a seeded uniform sample (without replacement) of the points."""
    m = data if isinstance(data, int) else data.m
    if nn.rows != m:
        raise MissingRows(f"neighbor table has {nn.rows} rows, dataset has {m}")
    ids = sample_ids(m, sample_fraction, seed)
    values = point_nsm_many(nn, ids, r, workers)
    summary = {"mean": float(values.mean())}
    for q in quantiles:
        summary[f"q{q:g}"] = lower_quantile(values, q)
    return PointNsmDistribution(r, ids, values, sample_fraction, seed, tuple(quantiles), summary)


def clusterability_tail_bound(mean_point_nsm: float, L: int, epsilon: float) -> float:
    """Threshold below which clustering-NSM falls with probability at most ``epsilon``."""
    if L < 1:
        raise BadParams("L must be >= 1")
    if not 0 < epsilon <= 1:
        raise BadParams("epsilon must lie in (0, 1]")
    return mean_point_nsm - math.sqrt(math.log(1.0 / epsilon) / (2.0 * L))


# -- ball covers ---------------------------------------------------------------


@dataclass(frozen=True)
class BallCover:
    centers: tuple[int, ...]
    clusters: tuple[tuple[int, ...], ...]

    def clustering(self, m: int) -> Clustering:
        return Clustering.from_groups(self.clusters, m)


def _balls(nn: NeighborTable, m: int, r: int) -> list[frozenset[int]]:
    if nn.rows != m:
        raise MissingRows(f"neighbor table has {nn.rows} rows, expected {m}")
    if r - 1 > nn.k:
        raise RadiusTooLarge(f"radius {r} needs {r - 1} neighbors, table has {nn.k}")
    return [frozenset(ball(nn, u, r).tolist()) for u in range(m)]


def _enumerate_center_sets(balls: Sequence[frozenset[int]], points: Sequence[int]) -> list[tuple[int, ...]]:
    """Every set of centers whose balls partition ``points`` exactly."""
    universe = frozenset(points)
    containing: dict[int, list[int]] = {p: [] for p in universe}
    for u in universe:
        if balls[u] <= universe:
            for p in balls[u]:
                containing[p].append(u)
    order = sorted(universe)
    out: list[tuple[int, ...]] = []

    def rec(covered: frozenset[int], chosen: list[int]):
        if len(covered) == len(universe):
            out.append(tuple(sorted(chosen)))
            return
        p = next(q for q in order if q not in covered)
        # balls are disjoint, so the ball covering the lowest uncovered point is unique per cover
        for u in containing[p]:
            b = balls[u]
            if covered.isdisjoint(b):
                chosen.append(u)
                rec(covered | b, chosen)
                chosen.pop()

    rec(frozenset(), [])
    return out


def enumerate_ball_covers(nn: NeighborTable, m: int, r: int) -> list[BallCover]:
    """All center selections whose r-balls are pairwise disjoint and cover every point.

    Exponential; restricted to ``m <= 24``. An empty list means no cover exists.
    """
    if m > MAX_ENUMERATION:
        raise TooLarge(f"enumeration is limited to {MAX_ENUMERATION} points, got {m}")
    if r < 1 or m % r:
        raise BadParams(f"radius {r} must divide the number of points {m}")
    balls = _balls(nn, m, r)
    covers = []
    for centers in _enumerate_center_sets(balls, range(m)):
        clusters = tuple(sorted(tuple(sorted(balls[u])) for u in centers))
        covers.append(BallCover(centers, clusters))
    return covers


def _cover_nsm(nearest: np.ndarray, clusters: Sequence[Sequence[int]], m: int) -> float:
    """Clustering-NSM of a cover with equal weights per cluster."""
    label = np.empty(m, dtype=np.int64)
    for i, g in enumerate(clusters):
        label[list(g)] = i
    stable = label[nearest] == label
    vals = [stable[list(g)].mean() for g in clusters]
    return float(np.mean(vals))


def _pairings(items: Sequence, size: int) -> list[list[tuple]]:
    """Every partition of ``items`` into groups of ``size``."""
    items = list(items)
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for partners in itertools.combinations(range(len(rest)), size - 1):
        group = (first, *(rest[i] for i in partners))
        remaining = [x for i, x in enumerate(rest) if i not in partners]
        for tail in _pairings(remaining, size):
            out.append([group, *tail])
    return out


@dataclass(frozen=True)
class CoverExpectationReport:
    num_covers: int
    mean_point_nsm: float
    expected_cover_nsm: float
    center_weighted_point_nsm: float
    gap: float
    uniform_centers: bool
    center_frequency: np.ndarray = field(repr=False)
    group_size: int | None = None
    expected_grouped_nsm: float | None = None
    general_bound_holds: bool | None = None

    def as_dict(self) -> dict:
        return {
            "num_covers": self.num_covers,
            "mean_point_nsm": self.mean_point_nsm,
            "expected_cover_nsm": self.expected_cover_nsm,
            "center_weighted_point_nsm": self.center_weighted_point_nsm,
            "gap": self.gap,
            "uniform_centers": self.uniform_centers,
            "group_size": self.group_size,
            "expected_grouped_nsm": self.expected_grouped_nsm,
            "general_bound_holds": self.general_bound_holds,
        }


def verify_theorem2(nn: NeighborTable, m: int, r: int, group_size: int | None = None) -> CoverExpectationReport:
    """Compare expected cover clustering-NSM with mean point-NSM by full enumeration.

    The expectation is uniform over center selections. ``gap`` is
    expected_cover_nsm - mean_point_nsm; it is zero whenever every point is a
    center equally often. With ``group_size`` > 1, balls of each cover are
    also merged into groups of that many balls in every possible way and
    the expected grouped clustering-NSM is checked to be at least the mean
    point-NSM.
    """
    covers = enumerate_ball_covers(nn, m, r)
    if not covers:
        raise BadParams("no ball cover exists for this table and radius")
    L = m // r
    nearest = _nearest(nn)
    pnsm = point_nsm_many(nn, np.arange(m), r)
    mean_p = float(pnsm.mean())
    cover_vals = np.array([_cover_nsm(nearest, cv.clusters, m) for cv in covers])
    expected = float(cover_vals.mean())
    freq = np.zeros(m)
    for cv in covers:
        freq[list(cv.centers)] += 1
    freq /= len(covers)
    weighted = float(np.dot(freq, pnsm) / L)
    uniform = bool(np.allclose(freq, 1.0 / r, rtol=0, atol=1e-12))

    grouped = None
    holds = None
    if group_size is not None and group_size > 1:
        if L % group_size:
            raise BadParams(f"group size {group_size} must divide the number of balls {L}")
        vals = []
        for cv in covers:
            for groups in _pairings(range(L), group_size):
                merged = [tuple(p for i in g for p in cv.clusters[i]) for g in groups]
                vals.append(_cover_nsm(nearest, merged, m))
        grouped = float(np.mean(vals))
        holds = grouped >= mean_p - 1e-12
    return CoverExpectationReport(len(covers), mean_p, expected, weighted, expected - mean_p, uniform, freq, group_size, grouped, holds)


def cover_components(nn: NeighborTable, m: int, r: int) -> list[list[int]]:
    """Connected groups of points linked by shared ball membership.

    A cover of the whole set is a product of independent covers of these groups.
    """
    balls = _balls(nn, m, r)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for b in balls:
        it = iter(b)
        root = find(next(it))
        for p in it:
            q = find(p)
            if q != root:
                parent[q] = root
    groups: dict[int, list[int]] = {}
    for p in range(m):
        groups.setdefault(find(p), []).append(p)
    return sorted(groups.values())


class CoverSampler:
    """Uniform sampling of center selections for datasets made of small independent components."""

    def __init__(self, nn: NeighborTable, m: int, r: int, max_component: int = MAX_ENUMERATION):
        if r < 1 or m % r:
            raise BadParams(f"radius {r} must divide the number of points {m}")
        self.m, self.r = m, r
        self.balls = _balls(nn, m, r)
        self.nearest = _nearest(nn)
        self.choices: list[list[tuple[int, ...]]] = []
        for comp in cover_components(nn, m, r):
            if len(comp) > max_component:
                raise TooLarge(f"component of {len(comp)} points is too large to enumerate")
            sets = _enumerate_center_sets(self.balls, comp)
            if not sets:
                raise BadParams("a component admits no ball cover")
            self.choices.append(sets)

    @property
    def num_balls(self) -> int:
        return self.m // self.r

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        centers: list[int] = []
        for sets in self.choices:
            centers.extend(sets[rng.integers(len(sets))])
        return tuple(sorted(centers))

    def cover_nsm(self, centers: Sequence[int]) -> float:
        return _cover_nsm(self.nearest, [sorted(self.balls[u]) for u in centers], self.m)

    def center_frequency(self) -> np.ndarray:
        freq = np.zeros(self.m)
        for sets in self.choices:
            for s in sets:
                freq[list(s)] += 1.0 / len(sets)
        return freq
