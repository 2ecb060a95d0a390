"""Exact k-nearest-neighbor search under cosine distance.

Distance is 1 - cosine similarity, clamped to [0, 2] against rounding. The
scan is exact brute force over L2-normalized training rows; ties are broken
by ascending training-row index, so results are fully deterministic.

Every norm and every dot product runs through the compiled kernels in
_kernels, which makes query results bit-identical whether a vector is scored
alone, inside any batch, at any batch position, or under any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError
from .store import EmbeddingSet

# queries per distance block during a scan; fixed so peak memory stays around
# block * count * 8 bytes, has no effect on results
_BLOCK = 512


def _unit_rows(rows, what):
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if not np.isfinite(rows).all():
        raise DataError(f"{what}: non-finite component")
    sumsq = _kernels.row_sumsq(rows)
    if (sumsq == 0.0).any():
        raise DataError(f"{what}: zero vector at row {int(np.argmax(sumsq == 0.0))}")
    return rows / np.sqrt(sumsq)[:, None]


@dataclass(eq=False)
class KnnIndex:
    """Immutable search structure over one training embedding set.

    unit_rows holds the L2-normalized training vectors; _padded additionally
    carries zero rows up to the scan tile multiple and is what the kernel
    actually reads.
    """

    train: EmbeddingSet
    unit_rows: np.ndarray
    _padded: np.ndarray

    @property
    def count(self):
        return self.train.count

    @property
    def dim(self):
        return self.train.dim


def build_index(train: EmbeddingSet) -> KnnIndex:
    if train.count < 1:
        raise DataError("cannot build an index over an empty training set")
    padded = _kernels.pad_rows(_unit_rows(train.vectors, "training embeddings"),
                               _kernels.TRAIN_TILE)
    padded.setflags(write=False)
    # unit_rows views the padded buffer; no second copy at index scale
    return KnnIndex(train=train, unit_rows=padded[:train.count], _padded=padded)


@dataclass(frozen=True)
class NeighborList:
    """k nearest training rows, ascending by (distance, row index)."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def entries(self):
        return list(zip(self.indices.tolist(), self.distances.tolist()))

    def __len__(self):
        return len(self.indices)


def _as_queries(index: KnnIndex, queries, what):
    q = np.asarray(queries, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None, :]
    if q.ndim != 2 or q.shape[1] != index.dim:
        got = q.shape[-1] if q.ndim >= 1 else 0
        raise DataError(f"{what}: expected dimension {index.dim}, got {got}")
    return q, single


def _check_k(index: KnnIndex, k):
    k = int(k)
    if k < 1:
        raise ConfigError(f"k must be positive, got {k}")
    if k > index.count:
        raise ConfigError(f"k={k} exceeds training count {index.count}")
    return k


def _scan(index: KnnIndex, unit_queries, k):
    """Top-k per query over all training rows. unit_queries must be normalized."""
    m = unit_queries.shape[0]
    out_i = np.empty((m, k), np.int64)
    out_d = np.empty((m, k), np.float64)
    for start in range(0, m, _BLOCK):
        block = unit_queries[start:start + _BLOCK]
        dots = _kernels.pair_dots(index._padded, block)
        np.subtract(1.0, dots, out=dots)
        np.clip(dots, 0.0, 2.0, out=dots)
        bi, bd = _kernels.topk_ascending(dots, index.count, k)
        out_i[start:start + _BLOCK] = bi
        out_d[start:start + _BLOCK] = bd
    return out_i, out_d


def cosine_distance(a, b) -> float:
    """1 - cos(a, b) in [0, 2]; inputs must be nonzero and finite."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"cosine_distance: shape mismatch {a.shape} vs {b.shape}")
    ua = _unit_rows(a[None, :], "cosine_distance a")
    ub = _unit_rows(b[None, :], "cosine_distance b")
    dot = _kernels.pair_dots(_kernels.pad_rows(ub, _kernels.TRAIN_TILE), ua)[0, 0]
    return float(min(max(1.0 - dot, 0.0), 2.0))


def query_knn(index: KnnIndex, q, k) -> NeighborList:
    """The k training rows nearest to q, ascending by (distance, row index)."""
    k = _check_k(index, k)
    q2, _ = _as_queries(index, q, "query")
    if q2.shape[0] != 1:
        raise DataError("query_knn takes a single vector; use query_knn_batch")
    unit = _unit_rows(q2, "query")
    idx, dist = _scan(index, unit, k)
    return NeighborList(indices=idx[0], distances=dist[0])


def query_knn_batch(index: KnnIndex, queries, k):
    """Vectorized query_knn: returns (indices, distances), each (m, k).

    Results are identical, bit for bit, to calling query_knn row by row.
    """
    k = _check_k(index, k)
    q, _ = _as_queries(index, queries, "queries")
    unit = _unit_rows(q, "queries")
    return _scan(index, unit, k)


def prefix_mean_distances(distances):
    """Mean of the first 1..k ascending neighbor distances, per row.

    Sequential accumulation (cumsum), so the k-sweep and the single-k path
    produce bitwise-equal means.
    """
    distances = np.atleast_2d(distances)
    return np.cumsum(distances, axis=1) / np.arange(1, distances.shape[1] + 1)


def mean_knn_distance(index: KnnIndex, q, k) -> float:
    """Mean cosine distance from q to its k nearest training rows."""
    neighbors = query_knn(index, q, k)
    return float(prefix_mean_distances(neighbors.distances)[0, -1])


def mean_knn_distance_batch(index: KnnIndex, queries, k):
    _, dist = query_knn_batch(index, queries, k)
    return prefix_mean_distances(dist)[:, -1]
