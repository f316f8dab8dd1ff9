"""fvecs/ivecs readers and writers, atomic CSV/JSON report output.

Both vector formats store, per record, a little-endian int32 dimension
followed by that many little-endian float32 (fvecs) or int32 (ivecs) values.
"""

from __future__ import annotations

import contextlib
import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np

from nsm.core import Clustering, Dataset, Metric, NeighborSource, NeighborTable
from nsm.errors import InconsistentDim, NegativeId, NonFiniteValue, NonPositiveDim, TruncatedRecord


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename over it only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _walk_records(raw: np.ndarray) -> None:
    """Slow path that pinpoints the first malformed record."""
    pos, first = 0, None
    n = raw.size
    while pos < n:
        d = int(raw[pos])
        if d <= 0:
            raise NonPositiveDim(f"record at word {pos} declares dimension {d}")
        if first is None:
            first = d
        elif d != first:
            raise InconsistentDim(f"record at word {pos} has dimension {d}, expected {first}")
        if pos + 1 + d > n:
            raise TruncatedRecord(f"record at word {pos} is truncated")
        pos += 1 + d


def _read_words(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) % 4:
        raise TruncatedRecord(f"{path}: size {len(buf)} is not a multiple of 4 bytes")
    return np.frombuffer(buf, dtype="<i4")


def _split_records(words: np.ndarray, path) -> np.ndarray:
    if words.size == 0:
        return words.reshape(0, 0)
    d = int(words[0])
    if d <= 0:
        raise NonPositiveDim(f"{path}: dimension {d}")
    if words.size % (d + 1) == 0:
        table = words.reshape(-1, d + 1)
        if np.all(table[:, 0] == d):
            return table[:, 1:]
    _walk_records(words)
    raise InconsistentDim(f"{path}: malformed records")  # pragma: no cover


def read_fvecs(path) -> np.ndarray:
    """Read an fvecs file into an ``m x d`` float32 matrix; NaN/Inf are rejected."""
    body = _split_records(_read_words(path), path)
    vecs = np.ascontiguousarray(body).view("<f4").astype(np.float32)
    if not np.all(np.isfinite(vecs)):
        raise NonFiniteValue(f"{path}: NaN or Inf payload")
    return vecs


def read_ivecs(path, allow_negative: bool = False) -> np.ndarray:
    body = _split_records(_read_words(path), path)
    ids = np.ascontiguousarray(body).astype(np.int64)
    if not allow_negative and ids.size and ids.min() < 0:
        raise NegativeId(f"{path}: negative id")
    return ids


def _write_records(path, matrix: np.ndarray, dtype: str) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim == 1:
        matrix = matrix[None, :] if matrix.size else matrix.reshape(0, 0)
    m, d = matrix.shape
    if m and d <= 0:
        raise NonPositiveDim("cannot write zero-dimensional records")
    out = np.empty((m, d + 1), dtype="<i4")
    out[:, 0] = d
    if dtype == "f":
        out[:, 1:] = np.ascontiguousarray(matrix, dtype="<f4").view("<i4")
    else:
        out[:, 1:] = matrix.astype("<i4")
    with atomic_path(path) as tmp:
        tmp.write_bytes(out.tobytes())


def write_fvecs(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.size and not np.all(np.isfinite(matrix)):
        raise NonFiniteValue("refusing to write NaN or Inf")
    _write_records(path, matrix, "f")


def write_ivecs(path, matrix: np.ndarray, allow_negative: bool = False) -> None:
    matrix = np.asarray(matrix, dtype=np.int64)
    if not allow_negative and matrix.size and matrix.min() < 0:
        raise NegativeId("refusing to write a negative id")
    if matrix.size and matrix.max() > np.iinfo(np.int32).max:
        raise ValueError("id does not fit in int32")
    _write_records(path, matrix, "i")


def load_dataset(path, metric: "Metric | str" = Metric.EUCLIDEAN) -> Dataset:
    return Dataset(read_fvecs(path), Metric.parse(metric))


def write_assignment(path, assignment: Sequence[int], layout: Literal["column", "row"] = "column") -> None:
    """``column`` writes one 1-long record per point, ``row`` a single m-long record."""
    a = np.asarray(assignment, dtype=np.int64)
    write_ivecs(path, a[:, None] if layout == "column" else a[None, :])


def read_assignment(path) -> np.ndarray:
    table = read_ivecs(path)
    if table.ndim == 2 and (table.shape[1] == 1 or table.shape[0] == 1):
        return table.ravel()
    raise InconsistentDim(f"{path}: assignment must be one id per record or a single record")


def load_clustering(assign_path, centroids_path=None, num_clusters: int | None = None) -> Clustering:
    a = read_assignment(assign_path)
    cent = read_fvecs(centroids_path) if centroids_path else None
    L = num_clusters or (cent.shape[0] if cent is not None else int(a.max()) + 1)
    return Clustering(a, L, None, cent)


def write_neighbors(path, nn: NeighborTable) -> None:
    write_ivecs(path, nn.ids)


def read_neighbors(path, source: "NeighborSource | str" = NeighborSource.IMPORTED) -> NeighborTable:
    return NeighborTable(read_ivecs(path), None, NeighborSource(source), {"path": str(path)})


def write_csv(path, rows: Iterable[dict[str, Any]], columns: Sequence[str]) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
            w.writeheader()
            for row in rows:
                w.writerow({k: _fmt(row.get(k)) for k in columns})


def _fmt(v):
    # np.float64 subclasses float, and its repr is not a plain number
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(path, payload: dict) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
