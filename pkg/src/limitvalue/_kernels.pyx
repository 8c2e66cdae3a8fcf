# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Bellman sweep and reach-graph min closure."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport INFINITY

cnp.import_array()


def backward_sweep(double[::1] values0, double[:, ::1] cost,
                   long long[:, :, ::1] idx, double[:, :, ::1] weight,
                   long n_steps, long stride, int n_threads=1):
    cdef Py_ssize_t n_cells = cost.shape[0]
    cdef Py_ssize_t n_ctrl = cost.shape[1]
    cdef Py_ssize_t n_corn = idx.shape[2]
    cdef Py_ssize_t c, u, j
    cdef long k
    cdef double best, acc, diff
    cdef double inc_min = INFINITY
    cdef double inc_max = -INFINITY
    cdef long n_rec = n_steps // stride + 1
    if n_steps % stride:
        n_rec += 1
    out = np.empty((n_rec, n_cells), dtype=np.float64)
    cdef double[:, ::1] rec = out
    cur_arr = np.array(values0, dtype=np.float64, copy=True)
    nxt_arr = np.empty(n_cells, dtype=np.float64)
    cdef double[::1] cur = cur_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] tmp
    cdef long r = 0
    rec[0, :] = cur
    r = 1
    for k in range(1, n_steps + 1):
        # cells are independent within a layer; each thread writes its own nxt[c]
        for c in prange(n_cells, nogil=True, num_threads=n_threads, schedule="static"):
            best = INFINITY
            for u in range(n_ctrl):
                acc = cost[c, u]
                for j in range(n_corn):
                    acc = acc + weight[c, u, j] * cur[idx[c, u, j]]
                if acc < best:
                    best = acc
            nxt[c] = best
        for c in range(n_cells):
            diff = nxt[c] - cur[c]
            if diff < inc_min:
                inc_min = diff
            if diff > inc_max:
                inc_max = diff
        tmp = cur
        cur = nxt
        nxt = tmp
        if k % stride == 0 or k == n_steps:
            rec[r, :] = cur
            r += 1
    return out, inc_min, inc_max


def min_closure(double[::1] q, long long[:, ::1] dest, long max_iter):
    cdef Py_ssize_t n_cells = dest.shape[0]
    cdef Py_ssize_t n_ctrl = dest.shape[1]
    cdef Py_ssize_t c, u
    cdef long long d
    cdef long it
    cdef bint changed = True
    out_arr = np.array(q, dtype=np.float64, copy=True)
    cdef double[::1] out = out_arr
    it = 0
    while changed and it < max_iter:
        changed = False
        for c in range(n_cells):
            for u in range(n_ctrl):
                d = dest[c, u]
                if d >= 0 and out[d] < out[c]:
                    out[c] = out[d]
                    changed = True
        it += 1
    return out_arr, it
