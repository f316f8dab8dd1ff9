"""Command-line entry point. Exit codes: 0 ok, 2 usage, 3 data format, 4 numeric or degenerate input."""

from __future__ import annotations

import argparse
import ast
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from nsm import __version__, io
from nsm.baselines import DUNN_FLAVORS
from nsm.clustering import ITERATION_GRID, KMeansConfig, default_num_clusters, kmeans
from nsm.core import THREADS_ENV, Clustering, Metric
from nsm.errors import BadParams, FormatError, NsmError
from nsm.ivf import accuracy_grid, build
from nsm.neighbors import approximate_1nn, exact_knn
from nsm.pipeline import (
    CORR_COLUMNS,
    MEASURES,
    RUN_COLUMNS,
    ProtocolConfig,
    canonical_measure,
    correlate_runs,
    quality_report,
    run_labeled_protocol,
    run_metadata,
    run_protocol,
)
from nsm.stability import point_nsm_distribution
from nsm.synth import KINDS, synth

log = logging.getLogger("nsm")

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4
ALGOS = {"kmeans": "standard", "standard": "standard", "spherical": "spherical"}


def _ints(text: str) -> list[int]:
    """Parse ``5,10`` or ``1..8`` (inclusive) or a mix of both."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def _names(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _param(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return key, value


def _metric(args) -> Metric:
    return Metric.parse(args.metric)


def cmd_synth(args) -> None:
    params = dict(args.param or [])
    if args.metric and args.kind in ("gaussian_mixture", "uniform_noise"):
        params["metric"] = args.metric
    res = synth(args.kind, params, args.seed)
    io.write_fvecs(args.out, res.dataset.points)
    if args.labels:
        if res.labels is None:
            raise BadParams(f"{args.kind} has no labels")
        io.write_assignment(args.labels, res.labels)
    if args.queries:
        if res.queries is None:
            raise BadParams("pass --param n_queries=N to generate queries")
        io.write_fvecs(args.queries, res.queries)
    _write_meta(args, {"kind": args.kind, "params": params, "seed": args.seed, "m": res.dataset.m, "d": res.dataset.d})


def cmd_knn(args) -> None:
    data = io.load_dataset(args.data, _metric(args))
    if args.approx:
        if args.queries or args.k != 1:
            raise BadParams("--approx builds a self 1-NN table only")
        table = approximate_1nn(data, clusters=args.clusters, probes=args.probes, seed=args.seed)
    else:
        queries = io.read_fvecs(args.queries) if args.queries else None
        table = exact_knn(data, queries, k=args.k)
    io.write_neighbors(args.out, table)
    _write_meta(args, {"k": table.k, "source": table.source.value, "meta": table.meta, "seed": args.seed})


def cmd_cluster(args) -> None:
    data = io.load_dataset(args.data, _metric(args))
    L = args.clusters if args.clusters is not None else default_num_clusters(data.m, args.t)
    cfg = KMeansConfig(variant=ALGOS[args.algo], num_clusters=L, iterations=args.iters, seed=args.seed)
    c = kmeans(data, cfg)
    io.write_assignment(args.out, c.assignment)
    if args.centroids:
        io.write_fvecs(args.centroids, c.centroids)
    _write_meta(args, {"config": cfg.__dict__, "meta": c.meta})


def _load_clustering(args, data) -> Clustering:
    c = io.load_clustering(args.assign, getattr(args, "centroids", None))
    if c.m != data.m:
        raise BadParams(f"assignment has {c.m} entries, dataset has {data.m} points")
    return c


def cmd_quality(args) -> None:
    data = io.load_dataset(args.data, _metric(args))
    c = _load_clustering(args, data)
    measures = [canonical_measure(m) for m in args.measures]
    nn = io.read_neighbors(args.nn) if args.nn else None
    if nn is None and "nsm" in measures:
        raise BadParams("--nn is required for the nsm measure")
    report = quality_report(data, c, nn, measures, args.dunn_flavor)
    report["metadata"] = run_metadata({"measures": measures, "dunn_flavor": args.dunn_flavor}, data, {"num_clusters": c.num_clusters})
    io.write_json(args.out, report)


def cmd_point_nsm(args) -> None:
    data = io.load_dataset(args.data, _metric(args))
    nn = io.read_neighbors(args.nn)
    stats = args.stats
    quantiles = [float(s[1:]) for s in stats if s.startswith("q")]
    unknown = [s for s in stats if s != "mean" and not s.startswith("q")]
    if unknown:
        raise BadParams(f"unknown statistics {unknown}")
    dist = point_nsm_distribution(data, nn, args.radius, args.sample, args.seed, quantiles)
    rows = [{"id": int(i), "point_nsm": float(v)} for i, v in zip(dist.ids, dist.values)]
    io.write_csv(args.out, rows, ("id", "point_nsm"))
    summary = {s: dist.summary["mean"] if s == "mean" else dist.quantile(float(s[1:])) for s in stats}
    _write_meta(args, {"radius": args.radius, "sample": args.sample, "seed": args.seed, "summary": summary}, suffix=".summary.json")
    print(json.dumps(summary))


def cmd_ivf_eval(args) -> None:
    data = io.load_dataset(args.data, _metric(args))
    c = _load_clustering(args, data)
    queries = io.read_fvecs(args.queries)
    gt = io.read_ivecs(args.gt)
    if gt.shape[0] != queries.shape[0]:
        raise BadParams(f"ground truth has {gt.shape[0]} rows for {queries.shape[0]} queries")
    if gt.shape[1] < max(args.k):
        raise BadParams(f"ground truth has only {gt.shape[1]} neighbors per query")
    grid = accuracy_grid(build(data, c), queries, gt, args.k, args.nprobe)
    rows = [{"k": k, "nprobe": p, "accuracy": acc} for (k, p), acc in sorted(grid.items())]
    io.write_csv(args.out, rows, ("k", "nprobe", "accuracy"))


def cmd_correlate(args) -> None:
    runs = io.read_csv(args.table)
    if not runs:
        raise BadParams(f"{args.table} has no rows")
    missing = [c for c in [args.x, *args.y] if c not in runs[0]]
    if missing:
        raise BadParams(f"columns not in table: {missing}")
    corr = correlate_runs(runs, args.x, args.y, args.seed)
    io.write_csv(args.out, corr, CORR_COLUMNS)


def cmd_protocol(args) -> None:
    data = io.load_dataset(args.data, _metric(args))
    out = Path(args.out)
    cfg = ProtocolConfig(
        seed=args.seed,
        t=args.t,
        ks=tuple(args.k),
        nprobes=tuple(args.nprobe),
        iterations=tuple(args.iters),
        approximate=not args.no_approx,
        dunn_flavor=args.dunn_flavor,
        n_queries=args.n_queries,
        name=args.name or Path(args.data).stem,
    )
    if args.labels:
        labels = io.read_assignment(args.labels)
        if labels.size != data.m:
            raise BadParams(f"{labels.size} labels for {data.m} points")
        res = run_labeled_protocol(data, labels, cfg)
        columns = tuple(c for c in RUN_COLUMNS if c not in ("k", "nprobe", "accuracy")) + ("mutual_information", "homogeneity")
    else:
        queries = io.read_fvecs(args.queries) if args.queries else None
        res = run_protocol(data, queries, cfg)
        columns = RUN_COLUMNS
    io.write_csv(out / "runs.csv", res.runs, columns)
    io.write_csv(out / "correlations.csv", res.correlations, CORR_COLUMNS)
    io.write_json(out / "metadata.json", res.metadata)


def _write_meta(args, payload: dict, suffix: str = ".json") -> None:
    if getattr(args, "meta", None) is False:
        return
    path = Path(str(args.out) + suffix)
    payload = {"command": args.command, **payload}
    payload["versions"] = {"nsm": __version__, "numpy": np.__version__}
    io.write_json(path, payload)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsm", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, metric=True):
        sp.add_argument("--data", required=True)
        if metric:
            sp.add_argument("--metric", default="l2", help="l2, cos or ip")

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--param", type=_param, action="append", help="generator parameter key=value")
    s.add_argument("--metric", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--labels")
    s.add_argument("--queries")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("knn", help="exact or approximate nearest-neighbor table")
    data_args(s)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--queries")
    s.add_argument("--approx", action="store_true")
    s.add_argument("--clusters", type=int, default=None)
    s.add_argument("--probes", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_knn)

    s = sub.add_parser("cluster", help="run KMeans")
    data_args(s)
    s.add_argument("--algo", choices=sorted(ALGOS), default="kmeans")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--clusters", type=int, default=None)
    g.add_argument("--t", type=float, default=1.0)
    s.add_argument("--iters", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--centroids")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("quality", help="internal quality measures of a clustering")
    data_args(s)
    s.add_argument("--assign", required=True)
    s.add_argument("--nn")
    s.add_argument("--measures", type=_names, default=list(MEASURES))
    s.add_argument("--dunn-flavor", choices=DUNN_FLAVORS, default="classical")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_quality)

    s = sub.add_parser("point-nsm", help="sampled point-NSM distribution")
    data_args(s)
    s.add_argument("--nn", required=True)
    s.add_argument("--radius", type=int, required=True)
    s.add_argument("--sample", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stats", type=_names, default=["mean", "q0.1"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_point_nsm)

    s = sub.add_parser("ivf-eval", help="IVF top-k accuracy over k and nprobe")
    data_args(s)
    s.add_argument("--queries", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--assign", required=True)
    s.add_argument("--centroids")
    s.add_argument("--k", type=_ints, default=[5, 10])
    s.add_argument("--nprobe", type=_ints, default=[1])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ivf_eval)

    s = sub.add_parser("correlate", help="Spearman correlations from a runs table")
    s.add_argument("--table", required=True)
    s.add_argument("--x", default="accuracy")
    s.add_argument("--y", type=_names, default=["nsm"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("protocol", help="KMeans ensemble, quality measures, accuracy and correlations")
    data_args(s)
    s.add_argument("--queries")
    s.add_argument("--labels", help="class labels; switches to mutual information and homogeneity")
    s.add_argument("--n-queries", type=int, default=1000, help="held-out queries when --queries is absent")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--k", type=_ints, default=[5, 10])
    s.add_argument("--nprobe", type=_ints, default=[1])
    s.add_argument("--iters", type=_ints, default=list(ITERATION_GRID))
    s.add_argument("--dunn-flavor", choices=DUNN_FLAVORS, default="classical")
    s.add_argument("--no-approx", action="store_true", help="skip the approximate-NN clustering-NSM column")
    s.add_argument("--name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_protocol)
    return p


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads is not None:
        if args.threads < 1:
            return _fail(EXIT_USAGE, BadParams("--threads must be >= 1"))
        os.environ[THREADS_ENV] = str(args.threads)
    try:
        args.func(args)
    except FormatError as exc:
        return _fail(EXIT_FORMAT, exc)
    except NsmError as exc:
        return _fail(exc.exit_code, exc)
    except (OSError, EOFError) as exc:
        return _fail(EXIT_FORMAT, exc)
    except (ValueError, TypeError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
