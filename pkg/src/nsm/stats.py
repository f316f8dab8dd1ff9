"""Rank correlation with permutation p-values, distribution summaries, label-based metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from nsm.errors import Empty, LengthMismatch, TooShort, UnknownMeasure

SIGNIFICANCE = 0.001
EXACT_PERMUTATION_MAX_N = 8
MONTE_CARLO_DRAWS = 100_000

# Measure name -> True when smaller values mean a better clustering.
LOWER_IS_BETTER = {
    "nsm": False,
    "nsm_approx": False,
    "dunn": False,
    "db": True,
    "db_weighted": True,
    "mutual_information": False,
    "homogeneity": False,
    "point_nsm_mean": False,
    "point_nsm_q0.1": False,
}


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int
    method: str

    def significant(self, alpha: float = SIGNIFICANCE) -> bool:
        return self.p_value < alpha


def _rho_from_ranks(rx: np.ndarray, ry: np.ndarray) -> np.ndarray:
    """Pearson correlation of rx against each row of ry."""
    dx = rx - rx.mean()
    dy = ry - ry.mean(axis=-1, keepdims=True)
    sxx = float(np.dot(dx, dx))
    syy = np.einsum("...i,...i->...", dy, dy)
    # one sqrt of the product keeps perfectly monotone pairs at exactly +-1
    with np.errstate(invalid="ignore", divide="ignore"):
        return (dy @ dx) / np.sqrt(sxx * syy)


def spearman(x: Sequence[float], y: Sequence[float], seed: int = 0, draws: int = MONTE_CARLO_DRAWS) -> SpearmanResult:
    """Spearman's rho on average ranks with a two-sided permutation p-value.

    Exact over all n! permutations for n <= 8, Monte Carlo otherwise. A
    constant input has undefined rho (NaN) and p-value 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"lengths differ: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise TooShort(f"need at least 3 pairs, got {n}")
    rx, ry = rankdata(x), rankdata(y)
    rho = float(_rho_from_ranks(rx, ry))
    if math.isnan(rho):
        return SpearmanResult(rho, 1.0, n, "undefined")
    rho = max(-1.0, min(1.0, rho))
    tol = 1e-12
    if n <= EXACT_PERMUTATION_MAX_N:
        perms = ry[np.array(list(itertools.permutations(range(n))))]
        null = _rho_from_ranks(rx, perms)
        p = float(np.mean(np.abs(null) >= abs(rho) - tol))
        return SpearmanResult(rho, p, n, "exact_permutation")
    rng = np.random.default_rng(seed)
    count = 0
    chunk = 10_000
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        perms = rng.permuted(np.broadcast_to(ry, (b, n)), axis=1)
        null = _rho_from_ranks(rx, perms)
        count += int(np.sum(np.abs(null) >= abs(rho) - tol))
        done += b
    # add-one estimator keeps p > 0
    p = (count + 1) / (draws + 1)
    return SpearmanResult(rho, p, n, "monte_carlo")


def negate_for_lower_better(measure_name: str, rho: float) -> float:
    try:
        lower = LOWER_IS_BETTER[measure_name]
    except KeyError:
        raise UnknownMeasure(measure_name) from None
    return -rho if lower else rho


def _contingency(labels: Sequence[int], clusters: Sequence[int]) -> np.ndarray:
    a = np.asarray(labels)
    b = np.asarray(clusters)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise Empty("no labels")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def mutual_information(labels: Sequence[int], clusters: Sequence[int]) -> float:
    """Empirical mutual information in nats."""
    t = _contingency(labels, clusters)
    n = t.sum()
    pij = t / n
    pi = pij.sum(axis=1, keepdims=True)
    pj = pij.sum(axis=0, keepdims=True)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / (pi @ pj)[nz])))
    return max(mi, 0.0)


def homogeneity(labels: Sequence[int], clusters: Sequence[int]) -> float:
    """1 - H(class | cluster) / H(class); 1 when the classes have zero entropy."""
    t = _contingency(labels, clusters)
    h_class = _entropy(t.sum(axis=1))
    if h_class == 0:
        return 1.0
    n = t.sum()
    h_cond = sum(col.sum() / n * _entropy(col) for col in t.T if col.sum() > 0)
    return float(min(1.0, max(0.0, 1.0 - h_cond / h_class)))


def lower_quantile(values: Sequence[float], alpha: float) -> float:
    """Order statistic at position ceil(alpha * n), 1-indexed (at least the first)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise Empty("quantile of an empty list")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    pos = max(1, math.ceil(alpha * v.size - 1e-9))
    return float(v[pos - 1])


def summarize(values: Sequence[float], quantiles: Sequence[float] = (0.1,)) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise Empty("summary of an empty list")
    return {"mean": float(v.mean()), "q": {q: lower_quantile(v, q) for q in quantiles}}
