# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled top-k kernel: brute-force nearest neighbors over dense rows.

Same contract as the numpy fallback: ascending distance, ties by ascending
reference index, per-query exclusion.  Cosine variants expect row-normalized
inputs.  Selection is k passes of strict argmin, which encodes the tie rule
directly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

BACKEND = "cython"


cdef void _select_row(double* dist, Py_ssize_t n, Py_ssize_t k,
                      long long* out_idx, double* out_dist) noexcept nogil:
    cdef Py_ssize_t j, i, best
    cdef double best_d
    for j in range(k):
        best = -1
        best_d = INFINITY
        for i in range(n):
            if dist[i] < best_d:
                best_d = dist[i]
                best = i
        out_idx[j] = best
        out_dist[j] = best_d
        dist[best] = INFINITY


def topk_cosine(double[:, ::1] ref_unit, double[:, ::1] q_unit, Py_ssize_t k,
                long long[::1] exclude):
    cdef Py_ssize_t n = ref_unit.shape[0]
    cdef Py_ssize_t d = ref_unit.shape[1]
    cdef Py_ssize_t m = q_unit.shape[0]
    idx_arr = np.empty((m, k), dtype=np.int64)
    dist_arr = np.empty((m, k), dtype=np.float64)
    scratch_arr = np.empty(n, dtype=np.float64)
    cdef long long[:, ::1] idx = idx_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double[::1] scratch = scratch_arr
    cdef Py_ssize_t row, i, c
    cdef double acc
    with nogil:
        for row in range(m):
            for i in range(n):
                acc = 0.0
                for c in range(d):
                    acc += q_unit[row, c] * ref_unit[i, c]
                scratch[i] = 1.0 - acc
            if exclude[row] >= 0:
                scratch[exclude[row]] = INFINITY
            _select_row(&scratch[0], n, k, &idx[row, 0], &dist[row, 0])
    return idx_arr, dist_arr


def topk_euclidean(double[:, ::1] ref, double[:, ::1] q, Py_ssize_t k,
                   long long[::1] exclude):
    cdef Py_ssize_t n = ref.shape[0]
    cdef Py_ssize_t d = ref.shape[1]
    cdef Py_ssize_t m = q.shape[0]
    idx_arr = np.empty((m, k), dtype=np.int64)
    dist_arr = np.empty((m, k), dtype=np.float64)
    scratch_arr = np.empty(n, dtype=np.float64)
    cdef long long[:, ::1] idx = idx_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double[::1] scratch = scratch_arr
    cdef Py_ssize_t row, i, c
    cdef double acc, diff
    with nogil:
        for row in range(m):
            for i in range(n):
                acc = 0.0
                for c in range(d):
                    diff = q[row, c] - ref[i, c]
                    acc += diff * diff
                scratch[i] = sqrt(acc)
            if exclude[row] >= 0:
                scratch[exclude[row]] = INFINITY
            _select_row(&scratch[0], n, k, &idx[row, 0], &dist[row, 0])
    return idx_arr, dist_arr
