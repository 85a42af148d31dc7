# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-edge kernels: segment softmax, segment sums, and the
attention-weighted aggregation with its backward pass.

Semantics match faithgat.backend.numpy_ops exactly (sequential reductions in
slot order), so either backend can serve any test or pipeline run.
"""

from libc.math cimport exp

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


def seg_softmax(const double[:, ::1] scores, const i64[::1] offsets, const i64[::1] dst):
    cdef Py_ssize_t heads = scores.shape[0]
    cdef Py_ssize_t n_slots = scores.shape[1]
    cdef Py_ssize_t n_rows = offsets.shape[0] - 1
    out_arr = np.empty((heads, n_slots), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t h, i, e, lo, hi
    cdef double m, s
    with nogil:
        for h in range(heads):
            for i in range(n_rows):
                lo = offsets[i]
                hi = offsets[i + 1]
                m = scores[h, lo]
                for e in range(lo + 1, hi):
                    if scores[h, e] > m:
                        m = scores[h, e]
                s = 0.0
                for e in range(lo, hi):
                    out[h, e] = exp(scores[h, e] - m)
                    s += out[h, e]
                for e in range(lo, hi):
                    out[h, e] /= s
    return out_arr


def seg_sum(const double[:, ::1] values, const i64[::1] offsets):
    cdef Py_ssize_t heads = values.shape[0]
    cdef Py_ssize_t n_rows = offsets.shape[0] - 1
    out_arr = np.empty((heads, n_rows), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t h, i, e
    cdef double s
    with nogil:
        for h in range(heads):
            for i in range(n_rows):
                s = 0.0
                for e in range(offsets[i], offsets[i + 1]):
                    s += values[h, e]
                out[h, i] = s
    return out_arr


def aggregate(const double[:, ::1] weights, const double[:, :, ::1] z, const i64[::1] col, const i64[::1] offsets):
    cdef Py_ssize_t heads = z.shape[0]
    cdef Py_ssize_t n_rows = offsets.shape[0] - 1
    cdef Py_ssize_t fdim = z.shape[2]
    out_arr = np.zeros((heads, n_rows, fdim), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t h, i, e, f, j
    cdef double w
    with nogil:
        for h in range(heads):
            for i in range(n_rows):
                for e in range(offsets[i], offsets[i + 1]):
                    w = weights[h, e]
                    j = col[e]
                    for f in range(fdim):
                        out[h, i, f] += w * z[h, j, f]
    return out_arr


def aggregate_backward(const double[:, :, ::1] d_out, const double[:, ::1] weights,
                       const double[:, :, ::1] z, const i64[::1] col, const i64[::1] dst):
    cdef Py_ssize_t heads = z.shape[0]
    cdef Py_ssize_t n_rows = z.shape[1]
    cdef Py_ssize_t fdim = z.shape[2]
    cdef Py_ssize_t n_slots = weights.shape[1]
    d_w_arr = np.empty((heads, n_slots), dtype=np.float64)
    d_z_arr = np.zeros((heads, n_rows, fdim), dtype=np.float64)
    cdef double[:, ::1] d_w = d_w_arr
    cdef double[:, :, ::1] d_z = d_z_arr
    cdef Py_ssize_t h, e, f, i, j
    cdef double acc, w
    with nogil:
        for h in range(heads):
            for e in range(n_slots):
                i = dst[e]
                j = col[e]
                acc = 0.0
                w = weights[h, e]
                for f in range(fdim):
                    acc += d_out[h, i, f] * z[h, j, f]
                    d_z[h, j, f] += w * d_out[h, i, f]
                d_w[h, e] = acc
    return d_w_arr, d_z_arr
