"""End-to-end experiment pipelines: quality reports, the KMeans-ensemble correlation protocol, point-NSM studies."""

from __future__ import annotations

import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from nsm import __version__
from nsm.baselines import db_index, dunn_index
from nsm.clustering import ITERATION_GRID, VARIANTS, KMeansConfig, default_num_clusters, kmeans
from nsm.core import Clustering, Dataset, NeighborTable
from nsm.errors import NsmError, UnknownMeasure
from nsm.ivf import accuracy_grid, build
from nsm.neighbors import approximate_1nn, exact_knn
from nsm.stability import clustering_nsm, point_nsm_distribution, point_nsm_many
from nsm.stats import LOWER_IS_BETTER, homogeneity, lower_quantile, mutual_information, spearman

log = logging.getLogger(__name__)

MEASURES = ("nsm", "dunn", "db", "db_weighted")
RUN_COLUMNS = (
    "dataset", "algo", "iters", "rounds", "L", "k", "nprobe", "accuracy",
    "nsm", "nsm_approx", "dunn", "db", "db_weighted",
)
CORR_COLUMNS = ("dataset", "measure", "x", "k", "nprobe", "rho", "rho_raw", "p", "n", "method", "significant")


def canonical_measure(name: str) -> str:
    name = name.strip().lower().replace("-", "_")
    if name in ("nsm", "clustering_nsm"):
        return "nsm"
    if name in MEASURES or name in ("nsm_approx",):
        return name
    raise UnknownMeasure(name)


def quality_report(
    data: Dataset,
    c: Clustering,
    nn: NeighborTable | None,
    measures: Sequence[str] = MEASURES,
    dunn_flavor: str = "classical",
) -> dict:
    """Named quality measures for one clustering.

    A measure that is undefined for this clustering (for example DB with a
    single nonempty cluster) is reported as None with the reason under ``errors``.
    """
    out: dict = {"errors": {}, "weights": "by_size", "dunn_flavor": dunn_flavor}
    for raw in measures:
        name = canonical_measure(raw)
        try:
            if name in ("nsm", "nsm_approx"):
                if nn is None:
                    raise ValueError("clustering-NSM needs a neighbor table")
                out[name] = clustering_nsm(nn, c)
            elif name == "dunn":
                out[name] = dunn_index(data, c, flavor=dunn_flavor)
            elif name == "db":
                out[name] = db_index(data, c, "uniform")
            elif name == "db_weighted":
                out[name] = db_index(data, c, "by_size")
        except NsmError as exc:
            out[name] = None
            out["errors"][name] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class ProtocolConfig:
    seed: int = 0
    t: float = 1.0
    ks: tuple[int, ...] = (5, 10)
    nprobes: tuple[int, ...] = (1,)
    iterations: tuple[int, ...] = ITERATION_GRID
    variants: tuple[str, ...] = VARIANTS
    approximate: bool = True
    dunn_flavor: str = "classical"
    n_queries: int = 1000
    name: str = "dataset"


@dataclass
class ProtocolResult:
    runs: list[dict]
    correlations: list[dict]
    clusterings: list[Clustering] = field(repr=False)
    metadata: dict


def holdout_queries(data: Dataset, n: int, seed: int) -> tuple[Dataset, np.ndarray]:
    """Split ``n`` seeded points off ``data`` to serve as queries."""
    n = min(n, data.m // 10 if data.m >= 20 else 1)
    rng = np.random.default_rng(seed)
    q = np.sort(rng.choice(data.m, size=n, replace=False))
    keep = np.setdiff1d(np.arange(data.m), q)
    return Dataset(data.points[keep], data.metric), data.points[q]


def correlate_runs(runs: Sequence[dict], x: str = "accuracy", measures: Sequence[str] = ("nsm", "dunn", "db", "db_weighted"), seed: int = 0) -> list[dict]:
    """Spearman between ``x`` and each measure per (dataset, k, nprobe) group.

    Lower-is-better measures have their coefficient negated; ``rho_raw`` keeps
    the original sign. Columns with no registered direction are left as is.
    """
    groups: dict[tuple, list[dict]] = {}
    for row in runs:
        groups.setdefault((row.get("dataset", ""), row.get("k", ""), row.get("nprobe", "")), []).append(row)
    out = []
    for (ds, k, p), rows in groups.items():
        for measure in measures:
            pairs = [(float(r[x]), float(r[measure])) for r in rows if _present(r.get(measure)) and _present(r.get(x))]
            if len(pairs) < 3:
                continue
            res = spearman([a for a, _ in pairs], [b for _, b in pairs], seed=seed)
            rho = -res.rho if LOWER_IS_BETTER.get(measure, False) else res.rho
            out.append({
                "dataset": ds, "measure": measure, "x": x, "k": k, "nprobe": p,
                "rho": rho, "rho_raw": res.rho, "p": res.p_value, "n": res.n,
                "method": res.method, "significant": res.significant(),
            })
    return out


def _present(v) -> bool:
    if v is None or v == "":
        return False
    try:
        return not math.isnan(float(v))
    except (TypeError, ValueError):
        return False


def run_protocol(data: Dataset, queries: np.ndarray | None = None, cfg: ProtocolConfig | None = None) -> ProtocolResult:
    """Standard and spherical KMeans at each iteration budget, all quality measures, IVF accuracy, correlations.

    One exact 1-NN table is computed up front and shared by every clustering.
    """
    cfg = cfg or ProtocolConfig()
    t0 = time.perf_counter()
    if queries is None:
        data, queries = holdout_queries(data, cfg.n_queries, cfg.seed)
    L = default_num_clusters(data.m, cfg.t)
    nn = exact_knn(data, k=1)
    nn_approx = approximate_1nn(data, seed=cfg.seed) if cfg.approximate else None
    gt = exact_knn(data, queries, k=max(cfg.ks)).ids
    log.info("neighbor tables ready in %.1fs", time.perf_counter() - t0)

    runs: list[dict] = []
    clusterings: list[Clustering] = []
    for variant in cfg.variants:
        for iters in cfg.iterations:
            c = kmeans(data, KMeansConfig(variant=variant, num_clusters=L, iterations=iters, seed=cfg.seed))
            clusterings.append(c)
            q = quality_report(data, c, nn, MEASURES, cfg.dunn_flavor)
            if nn_approx is not None:
                q["nsm_approx"] = clustering_nsm(nn_approx, c)
            acc = accuracy_grid(build(data, c), queries, gt, cfg.ks, cfg.nprobes)
            for k in cfg.ks:
                for p in cfg.nprobes:
                    runs.append({
                        "dataset": cfg.name, "algo": variant, "iters": iters,
                        "rounds": c.meta["rounds"], "L": L, "k": k, "nprobe": p,
                        "accuracy": acc[(k, p)],
                        **{m: q.get(m) for m in ("nsm", "nsm_approx", "dunn", "db", "db_weighted")},
                    })
            log.info("%s x%d done (%.1fs)", variant, iters, time.perf_counter() - t0)
    measures = ["nsm", "dunn", "db", "db_weighted"] + (["nsm_approx"] if cfg.approximate else [])
    corr = correlate_runs(runs, "accuracy", measures, cfg.seed)
    meta = run_metadata(cfg, data, extra={
        "num_queries": int(len(queries)), "L": L, "in_shard_search": "exact",
        "weights": "by_size", "seconds": time.perf_counter() - t0,
    })
    return ProtocolResult(runs, corr, clusterings, meta)


def run_labeled_protocol(data: Dataset, labels: np.ndarray, cfg: ProtocolConfig | None = None) -> ProtocolResult:
    """Cluster into as many clusters as classes and correlate quality with MI and homogeneity."""
    cfg = cfg or ProtocolConfig()
    t0 = time.perf_counter()
    labels = np.asarray(labels)
    L = int(np.unique(labels).size)
    nn = exact_knn(data, k=1)
    nn_approx = approximate_1nn(data, seed=cfg.seed) if cfg.approximate else None
    runs, clusterings = [], []
    for variant in cfg.variants:
        for iters in cfg.iterations:
            c = kmeans(data, KMeansConfig(variant=variant, num_clusters=L, iterations=iters, seed=cfg.seed))
            clusterings.append(c)
            q = quality_report(data, c, nn, MEASURES, cfg.dunn_flavor)
            if nn_approx is not None:
                q["nsm_approx"] = clustering_nsm(nn_approx, c)
            runs.append({
                "dataset": cfg.name, "algo": variant, "iters": iters, "rounds": c.meta["rounds"], "L": L,
                "k": "", "nprobe": "",
                "mutual_information": mutual_information(labels, c.assignment),
                "homogeneity": homogeneity(labels, c.assignment),
                **{m: q.get(m) for m in ("nsm", "nsm_approx", "dunn", "db", "db_weighted")},
            })
    measures = ["nsm", "dunn", "db", "db_weighted"] + (["nsm_approx"] if cfg.approximate else [])
    corr = correlate_runs(runs, "mutual_information", measures, cfg.seed)
    corr += correlate_runs(runs, "homogeneity", measures, cfg.seed)
    meta = run_metadata(cfg, data, extra={"L": L, "seconds": time.perf_counter() - t0})
    return ProtocolResult(runs, corr, clusterings, meta)


def run_metadata(cfg, data: Dataset, extra: dict | None = None) -> dict:
    return {
        "config": asdict(cfg) if hasattr(cfg, "__dataclass_fields__") else dict(cfg),
        "dataset": {"m": data.m, "d": data.d, "metric": data.metric.value},
        "versions": {"nsm": __version__, "numpy": np.__version__, "python": platform.python_version()},
        **(extra or {}),
    }


@dataclass
class ClusterabilityRow:
    name: str
    radius: int
    sample_mean: float
    sample_q10: float
    full_mean: float
    full_q10: float
    clustering_nsm: float
    num_clusters: int


def clusterability_row(
    name: str,
    data: Dataset,
    r: int,
    sample_fraction: float = 0.05,
    seed: int = 0,
    iterations: int = 20,
    variant: str = "standard",
    nn: NeighborTable | None = None,
) -> ClusterabilityRow:
    """Point-NSM summary (sampled and full) next to clustering-NSM of a KMeans run with m / r clusters."""
    if nn is None or nn.k < r - 1:
        nn = exact_knn(data, k=r - 1)
    dist = point_nsm_distribution(data, nn, r, sample_fraction, seed)
    full = point_nsm_many(nn, np.arange(data.m), r)
    L = max(1, data.m // r)
    c = kmeans(data, KMeansConfig(variant=variant, num_clusters=L, iterations=iterations, seed=seed))
    return ClusterabilityRow(
        name, r, dist.mean, dist.summary["q0.1"], float(full.mean()), lower_quantile(full, 0.1),
        clustering_nsm(nn, c), L,
    )
