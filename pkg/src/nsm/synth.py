"""Seeded synthetic datasets used as small stand-ins for real vector corpora."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nsm.core import Dataset, Metric
from nsm.errors import BadParams

KINDS = ("gaussian_mixture", "ball_cover", "line", "uniform_noise")


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    labels: np.ndarray | None = None
    queries: np.ndarray | None = None
    query_labels: np.ndarray | None = None


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise BadParams(msg)


def gaussian_mixture(
    components: int = 8,
    per: int = 125,
    sigma: float = 0.05,
    sep: float = 10.0,
    d: int = 16,
    seed: int = 0,
    n_queries: int = 0,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    intrinsic_dim: int | None = None,
    ambient_noise: float = 0.01,
    heterogeneity: float = 0.0,
) -> SynthResult:
    """Isotropic Gaussian blobs.

    Component means are ``sep * g / sqrt(k)`` with standard normal ``g`` in
    ``k = intrinsic_dim or d`` dimensions, so two means sit about
    ``sep * sqrt(2)`` apart; points add ``sigma`` noise per coordinate. With
    ``intrinsic_dim < d`` the mixture is drawn in k dimensions, mapped into
    ``d`` by a random orthonormal basis and given ``ambient_noise * sigma``
    isotropic noise, which mimics the low intrinsic dimension of embeddings.
    ``heterogeneity > 0`` draws log-normal component weights (spread h) and
    per-component noise scales (spread h/2); the total stays ``components * per``.
    Queries, if requested, are fresh draws from random components.
    """
    k = d if intrinsic_dim is None else intrinsic_dim
    _check(components >= 1 and per >= 1 and d >= 1, "counts must be >= 1")
    _check(1 <= k <= d, "intrinsic_dim must lie in [1, d]")
    _check(sigma >= 0 and sep >= 0 and ambient_noise >= 0, "sigma, sep and ambient_noise must be >= 0")
    _check(n_queries >= 0 and heterogeneity >= 0, "n_queries and heterogeneity must be >= 0")
    rng = np.random.default_rng(seed)
    means = sep * rng.standard_normal((components, k)) / np.sqrt(k)
    if heterogeneity:
        weights = np.exp(heterogeneity * rng.standard_normal(components))
        weights /= weights.sum()
        scale = sigma * np.exp(0.5 * heterogeneity * rng.standard_normal(components))
        labels = np.sort(rng.choice(components, size=components * per, p=weights))
    else:
        weights = np.full(components, 1.0 / components)
        scale = np.full(components, float(sigma))
        labels = np.repeat(np.arange(components), per)
    points = means[labels] + scale[labels, None] * rng.standard_normal((labels.size, k))
    q = ql = None
    if n_queries:
        ql = rng.choice(components, size=n_queries, p=weights) if heterogeneity else rng.integers(components, size=n_queries)
        q = means[ql] + scale[ql, None] * rng.standard_normal((n_queries, k))
    if k < d:
        basis = np.linalg.qr(rng.standard_normal((d, k)))[0]
        points = points @ basis.T + ambient_noise * sigma * rng.standard_normal((labels.size, d))
        if n_queries:
            q = q @ basis.T + ambient_noise * sigma * rng.standard_normal((n_queries, d))
    if q is not None:
        q = q.astype(np.float32)
    return SynthResult(Dataset(points, metric), labels, q, ql)


def ball_cover(L: int = 4, r: int = 3, separation: float = 10.0, d: int = 2, seed: int = 0) -> SynthResult:
    """``L`` groups of exactly ``r`` points.

    Each group is a center plus ``r - 1`` points within unit distance of it.
    Group centers lie on the first axis, spaced so that any two points of
    different groups are at least ``separation`` times the largest intra-group
    radius apart.
    """
    _check(L >= 1 and r >= 1 and d >= 1, "counts must be >= 1")
    _check(separation >= 0, "separation must be >= 0")
    rng = np.random.default_rng(seed)
    offsets = np.zeros((L, r, d))
    if r > 1:
        dirs = rng.standard_normal((L, r - 1, d))
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        radii = rng.uniform(0.2, 1.0, size=(L, r - 1, 1))
        offsets[:, 1:, :] = dirs * radii
    rho = float(np.linalg.norm(offsets, axis=2).max()) or 1.0
    spacing = separation * rho + 2 * rho
    centers = np.zeros((L, d))
    centers[:, 0] = spacing * np.arange(L)
    points = (centers[:, None, :] + offsets).reshape(L * r, d)
    labels = np.repeat(np.arange(L), r)
    return SynthResult(Dataset(points), labels)


def line(positions: Sequence[float] | None = None, m: int = 4) -> SynthResult:
    """Points on a line. Defaults to pairs 0,1 / 10,11 / 20,21 ... truncated to ``m``."""
    if positions is None:
        _check(m >= 2, "m must be >= 2")
        positions = [10 * (i // 2) + (i % 2) for i in range(m)]
    pts = np.asarray(positions, dtype=np.float64)[:, None]
    return SynthResult(Dataset(pts))


def uniform_noise(m: int = 1000, d: int = 8, seed: int = 0, metric: "Metric | str" = Metric.EUCLIDEAN) -> SynthResult:
    _check(m >= 2 and d >= 1, "need m >= 2 and d >= 1")
    rng = np.random.default_rng(seed)
    return SynthResult(Dataset(rng.uniform(size=(m, d)), metric))


def synth(kind: str, params: dict | None = None, seed: int = 0) -> SynthResult:
    params = dict(params or {})
    if kind == "gaussian_mixture":
        return gaussian_mixture(seed=seed, **params)
    if kind == "ball_cover":
        return ball_cover(seed=seed, **params)
    if kind == "line":
        return line(**params)
    if kind == "uniform_noise":
        return uniform_noise(seed=seed, **params)
    raise BadParams(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")


def uniform_cover_matrix(blocks: int = 25, block_size: int = 6, r: int = 3, seed: int = 0, far: float = 1e6) -> np.ndarray:
    """Block-diagonal comparator matrix whose ball covers pick every point as a center equally often.

    Each block is a random integer matrix, redrawn until its ``r``-balls admit
    at least two covers, every point is a center in exactly 1/r of them and
    cover NSM is not constant. Entries between blocks are ``far``, so blocks
    never see each other and covers of the whole matrix are products of block
    covers.
    """
    from nsm.neighbors import knn_from_matrix
    from nsm.stability import CoverSampler

    _check(blocks >= 1 and r >= 2 and block_size % r == 0 and block_size > r, "need block_size a multiple of r and larger than r")
    _check(block_size <= 12, "block_size is limited to 12")
    rng = np.random.default_rng(seed)
    out = np.full((blocks * block_size, blocks * block_size), far)
    for b in range(blocks):
        while True:
            D = rng.integers(1, 20, size=(block_size, block_size)).astype(np.float64)
            nn = knn_from_matrix(D, k=r - 1)
            try:
                sampler = CoverSampler(nn, block_size, r)
            except BadParams:
                continue
            if len(sampler.choices) != 1 or len(sampler.choices[0]) < 2:
                continue
            covers = sampler.choices[0]
            if not np.allclose(sampler.center_frequency(), 1.0 / r, rtol=0, atol=1e-12):
                continue
            if len({sampler.cover_nsm(c) for c in covers}) < 2:
                continue
            break
        s = b * block_size
        out[s:s + block_size, s:s + block_size] = D
    return out
