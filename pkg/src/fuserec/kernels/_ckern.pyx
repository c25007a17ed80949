# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: CSR neighbor aggregation and int8 scoring.

Kept in lockstep with the numpy fallback in ``_npkern``; the parity test
suite compares both backends on random inputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_aggregate(const long long[::1] indptr,
                  const long long[::1] indices,
                  const double[::1] edge_w,
                  const double[:, ::1] h):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = h.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t v, e, j, u
    cdef double w
    for v in range(n):
        for e in range(indptr[v], indptr[v + 1]):
            u = indices[e]
            w = edge_w[e]
            for j in range(d):
                out[v, j] += w * h[u, j]
    return out_arr


def csr_aggregate_rows(const long long[::1] indptr,
                       const long long[::1] indices,
                       const double[::1] edge_w,
                       const double[:, ::1] h,
                       const long long[::1] rows):
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t d = h.shape[1]
    out_arr = np.zeros((m, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, v, e, j, u
    cdef double w
    for r in range(m):
        v = rows[r]
        for e in range(indptr[v], indptr[v + 1]):
            u = indices[e]
            w = edge_w[e]
            for j in range(d):
                out[r, j] += w * h[u, j]
    return out_arr


def int8_matmul(const signed char[:, ::1] q,
                const double[::1] scales,
                const double[:, ::1] x):
    cdef Py_ssize_t rows = q.shape[0]
    cdef Py_ssize_t cols = q.shape[1]
    cdef Py_ssize_t batch = x.shape[0]
    out_arr = np.empty((batch, rows), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, i, j
    cdef double acc
    for b in range(batch):
        for i in range(rows):
            acc = 0.0
            for j in range(cols):
                acc += q[i, j] * x[b, j]
            out[b, i] = acc * scales[i]
    return out_arr
