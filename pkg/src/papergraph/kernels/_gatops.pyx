# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment kernels for the attention hot loop.

Mirrors py_ops: segment softmax (forward and backward), segment sums, and
scatter-add over edge arrays sorted by destination node. Segments must be
non-empty (guaranteed by self-loops).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef fused real:
    float
    double


def seg_softmax(real[:, ::1] e, cnp.int64_t[::1] starts):
    cdef Py_ssize_t n_seg = starts.shape[0] - 1
    cdef Py_ssize_t n_col = e.shape[1]
    alpha_arr = np.empty((e.shape[0], n_col), dtype=np.asarray(e).dtype)
    cdef real[:, ::1] alpha = alpha_arr
    cdef Py_ssize_t v, h, i, lo, hi
    cdef real peak, total
    with nogil:
        for v in range(n_seg):
            lo = starts[v]
            hi = starts[v + 1]
            for h in range(n_col):
                peak = e[lo, h]
                for i in range(lo + 1, hi):
                    if e[i, h] > peak:
                        peak = e[i, h]
                total = 0
                for i in range(lo, hi):
                    alpha[i, h] = <real> exp(e[i, h] - peak)
                    total += alpha[i, h]
                for i in range(lo, hi):
                    alpha[i, h] /= total
    return alpha_arr


def seg_softmax_grad(real[:, ::1] alpha, real[:, ::1] g_alpha, cnp.int64_t[::1] starts):
    cdef Py_ssize_t n_seg = starts.shape[0] - 1
    cdef Py_ssize_t n_col = alpha.shape[1]
    out_arr = np.empty((alpha.shape[0], n_col), dtype=np.asarray(alpha).dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t v, h, i, lo, hi
    cdef real dot
    with nogil:
        for v in range(n_seg):
            lo = starts[v]
            hi = starts[v + 1]
            for h in range(n_col):
                dot = 0
                for i in range(lo, hi):
                    dot += alpha[i, h] * g_alpha[i, h]
                for i in range(lo, hi):
                    out[i, h] = alpha[i, h] * (g_alpha[i, h] - dot)
    return out_arr


def seg_sum(real[:, ::1] x, cnp.int64_t[::1] starts):
    cdef Py_ssize_t n_seg = starts.shape[0] - 1
    cdef Py_ssize_t n_col = x.shape[1]
    out_arr = np.zeros((n_seg, n_col), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t v, d, i
    with nogil:
        for v in range(n_seg):
            for i in range(starts[v], starts[v + 1]):
                for d in range(n_col):
                    out[v, d] += x[i, d]
    return out_arr


def scatter_add(real[:, ::1] src, cnp.int64_t[::1] idx, Py_ssize_t n_rows):
    cdef Py_ssize_t n_col = src.shape[1]
    out_arr = np.zeros((n_rows, n_col), dtype=np.asarray(src).dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t e, d, r
    with nogil:
        for e in range(src.shape[0]):
            r = idx[e]
            for d in range(n_col):
                out[r, d] += src[e, d]
    return out_arr
