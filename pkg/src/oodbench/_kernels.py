"""Compiled kernels for the cosine-distance scan and top-k selection.

Every dot product in the library flows through one compiled kernel so that
results are bit-identical regardless of query batching, batch position, or
thread count. BLAS is deliberately avoided here: its reduction order changes
with the GEMM shape, which breaks that guarantee.

This module must be imported before numba is imported anywhere else in the
process; it configures the target CPU features first.
"""

import os


def _configure_cpu_features():
    # LLVM prefers 256-bit vectors on AVX-512 hosts unless told otherwise.
    # Must run before the first numba import; respects an explicit override.
    if "NUMBA_CPU_FEATURES" in os.environ:
        return
    import llvmlite.binding as llb

    features = llb.get_host_cpu_features().flatten()
    if "+avx512f" in features:
        os.environ["NUMBA_CPU_FEATURES"] = features + ",-prefer-256-bit"


_configure_cpu_features()

import numpy as np
from numba import njit, prange, config, set_num_threads

# Vectorization needs reassociation, but the full fastmath set is out:
# nnan/ninf would let LLVM fold away the comparisons that validation relies on.
_FASTMATH = {"reassoc", "contract", "nsz", "arcp"}

# Register tile: 8 query rows x 3 train rows. 24 accumulators + 11 row
# pointers fit the 32 zmm registers without spills.
QUERY_TILE = 8
TRAIN_TILE = 3


@njit(cache=True, parallel=True, fastmath=_FASTMATH)
def _tile_dots(train, queries):
    """Dense pair dots, queries x train. Both inputs padded to tile multiples."""
    n, d = train.shape
    m = queries.shape[0]
    out = np.empty((m, n), np.float64)
    for bq in prange(m // 8):
        q0 = bq * 8
        q0r = queries[q0]
        q1r = queries[q0 + 1]
        q2r = queries[q0 + 2]
        q3r = queries[q0 + 3]
        q4r = queries[q0 + 4]
        q5r = queries[q0 + 5]
        q6r = queries[q0 + 6]
        q7r = queries[q0 + 7]
        for bt in range(n // 3):
            t0 = bt * 3
            t0r = train[t0]
            t1r = train[t0 + 1]
            t2r = train[t0 + 2]
            a00 = 0.0; a01 = 0.0; a02 = 0.0
            a10 = 0.0; a11 = 0.0; a12 = 0.0
            a20 = 0.0; a21 = 0.0; a22 = 0.0
            a30 = 0.0; a31 = 0.0; a32 = 0.0
            a40 = 0.0; a41 = 0.0; a42 = 0.0
            a50 = 0.0; a51 = 0.0; a52 = 0.0
            a60 = 0.0; a61 = 0.0; a62 = 0.0
            a70 = 0.0; a71 = 0.0; a72 = 0.0
            for j in range(d):
                u0 = q0r[j]; u1 = q1r[j]; u2 = q2r[j]; u3 = q3r[j]
                u4 = q4r[j]; u5 = q5r[j]; u6 = q6r[j]; u7 = q7r[j]
                v0 = t0r[j]; v1 = t1r[j]; v2 = t2r[j]
                a00 += u0 * v0; a01 += u0 * v1; a02 += u0 * v2
                a10 += u1 * v0; a11 += u1 * v1; a12 += u1 * v2
                a20 += u2 * v0; a21 += u2 * v1; a22 += u2 * v2
                a30 += u3 * v0; a31 += u3 * v1; a32 += u3 * v2
                a40 += u4 * v0; a41 += u4 * v1; a42 += u4 * v2
                a50 += u5 * v0; a51 += u5 * v1; a52 += u5 * v2
                a60 += u6 * v0; a61 += u6 * v1; a62 += u6 * v2
                a70 += u7 * v0; a71 += u7 * v1; a72 += u7 * v2
            out[q0, t0] = a00; out[q0, t0 + 1] = a01; out[q0, t0 + 2] = a02
            out[q0 + 1, t0] = a10; out[q0 + 1, t0 + 1] = a11; out[q0 + 1, t0 + 2] = a12
            out[q0 + 2, t0] = a20; out[q0 + 2, t0 + 1] = a21; out[q0 + 2, t0 + 2] = a22
            out[q0 + 3, t0] = a30; out[q0 + 3, t0 + 1] = a31; out[q0 + 3, t0 + 2] = a32
            out[q0 + 4, t0] = a40; out[q0 + 4, t0 + 1] = a41; out[q0 + 4, t0 + 2] = a42
            out[q0 + 5, t0] = a50; out[q0 + 5, t0 + 1] = a51; out[q0 + 5, t0 + 2] = a52
            out[q0 + 6, t0] = a60; out[q0 + 6, t0 + 1] = a61; out[q0 + 6, t0 + 2] = a62
            out[q0 + 7, t0] = a70; out[q0 + 7, t0 + 1] = a71; out[q0 + 7, t0 + 2] = a72
    return out


@njit(cache=True, fastmath=_FASTMATH)
def _row_sumsq(a):
    """Per-row sum of squares. Single arithmetic path for every norm in the library."""
    n, d = a.shape
    out = np.empty(n, np.float64)
    for i in range(n):
        row = a[i]
        acc = 0.0
        for j in range(d):
            acc += row[j] * row[j]
        out[i] = acc
    return out


@njit(cache=True, parallel=True)
def _topk_heap(dist, n, k):
    """Per-row k smallest of dist[:, :n], ascending by (distance, column index).

    Bounded max-heap ordered lexicographically by (distance, index); a scan in
    ascending column order means an incoming tie can never displace a kept
    entry, so the tie rule (prefer lower index) needs no extra branch on push.
    """
    m = dist.shape[0]
    out_i = np.empty((m, k), np.int64)
    out_d = np.empty((m, k), np.float64)
    for r in prange(m):
        hd = out_d[r]
        hi = out_i[r]
        size = 0
        for c in range(n):
            v = dist[r, c]
            if size < k:
                hd[size] = v
                hi[size] = c
                size += 1
                child = size - 1
                while child > 0:
                    parent = (child - 1) >> 1
                    if hd[parent] < hd[child] or (
                        hd[parent] == hd[child] and hi[parent] < hi[child]
                    ):
                        hd[parent], hd[child] = hd[child], hd[parent]
                        hi[parent], hi[child] = hi[child], hi[parent]
                        child = parent
                    else:
                        break
            elif v < hd[0]:
                hd[0] = v
                hi[0] = c
                parent = 0
                while True:
                    left = 2 * parent + 1
                    if left >= k:
                        break
                    big = left
                    right = left + 1
                    if right < k and (
                        hd[right] > hd[left]
                        or (hd[right] == hd[left] and hi[right] > hi[left])
                    ):
                        big = right
                    if hd[big] > hd[parent] or (
                        hd[big] == hd[parent] and hi[big] > hi[parent]
                    ):
                        hd[parent], hd[big] = hd[big], hd[parent]
                        hi[parent], hi[big] = hi[big], hi[parent]
                        parent = big
                    else:
                        break
        # in-place heapsort: popping the lexicographic max to the tail leaves
        # the row ascending by (distance, index)
        end = k - 1
        while end > 0:
            hd[0], hd[end] = hd[end], hd[0]
            hi[0], hi[end] = hi[end], hi[0]
            parent = 0
            while True:
                left = 2 * parent + 1
                if left >= end:
                    break
                big = left
                right = left + 1
                if right < end and (
                    hd[right] > hd[left]
                    or (hd[right] == hd[left] and hi[right] > hi[left])
                ):
                    big = right
                if hd[big] > hd[parent] or (
                    hd[big] == hd[parent] and hi[big] > hi[parent]
                ):
                    hd[parent], hd[big] = hd[big], hd[parent]
                    hi[parent], hi[big] = hi[big], hi[parent]
                    parent = big
                else:
                    break
            end -= 1
    return out_i, out_d


def pad_rows(a, multiple):
    """Zero-pad rows of a 2-d float64 array up to a tile multiple."""
    extra = (-a.shape[0]) % multiple
    a = np.ascontiguousarray(a, dtype=np.float64)
    if extra == 0:
        return a
    return np.vstack([a, np.zeros((extra, a.shape[1]))])


def pair_dots(train_padded, queries):
    """Dots of every query against every padded train row.

    train_padded rows must already be a TRAIN_TILE multiple; queries are padded
    here. Returns the (len(queries), train_padded rows) block; callers slice
    off the train padding columns.
    """
    m = queries.shape[0]
    return _tile_dots(train_padded, pad_rows(queries, QUERY_TILE))[:m]


def row_sumsq(a):
    return _row_sumsq(np.ascontiguousarray(a, dtype=np.float64))


def topk_ascending(dist, n, k):
    return _topk_heap(dist, n, k)


def use_threads(n):
    """Clamp to the process thread budget; invalid values are a caller bug."""
    set_num_threads(max(1, min(int(n), config.NUMBA_NUM_THREADS)))


def warmup():
    """Compile (or load cached) kernels on tiny inputs."""
    t = np.arange(12.0).reshape(3, 4) + 1.0
    q = np.arange(8.0).reshape(2, 4) + 1.0
    d = pair_dots(pad_rows(t, TRAIN_TILE), q)
    row_sumsq(t)
    topk_ascending(d, 3, 2)
