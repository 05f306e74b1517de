# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled retrieval kernel: batched cosine scoring + top-k selection.

Same contract as tsarag.kernels._fallback.retrieve_batch; selection is
O(M*k) per query instead of a full sort, with the identical tie rule
(equal scores resolve to the lower key index).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def retrieve_batch(double[:, ::1] queries, double[:, ::1] keys, int k):
    cdef Py_ssize_t B = queries.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t M = keys.shape[0]
    cdef Py_ssize_t b, m, j, t, best
    cdef double qnorm, dot, best_score

    out_idx = np.empty((B, k), dtype=np.int64)
    out_score = np.empty((B, k), dtype=np.float64)
    cdef long long[:, ::1] idx_v = out_idx
    cdef double[:, ::1] score_v = out_score

    key_norms_arr = np.empty(M, dtype=np.float64)
    cdef double[::1] key_norms = key_norms_arr
    for m in range(M):
        dot = 0.0
        for j in range(d):
            dot += keys[m, j] * keys[m, j]
        key_norms[m] = sqrt(dot)

    scores_arr = np.empty(M, dtype=np.float64)
    taken_arr = np.zeros(M, dtype=np.uint8)
    cdef double[::1] scores = scores_arr
    cdef unsigned char[::1] taken = taken_arr

    for b in range(B):
        qnorm = 0.0
        for j in range(d):
            qnorm += queries[b, j] * queries[b, j]
        qnorm = sqrt(qnorm)
        for m in range(M):
            dot = 0.0
            for j in range(d):
                dot += queries[b, j] * keys[m, j]
            scores[m] = dot / (qnorm * key_norms[m])
            taken[m] = 0
        for t in range(k):
            best = -1
            best_score = 0.0
            for m in range(M):
                if taken[m]:
                    continue
                # strict > keeps the first (lowest-index) maximum on ties
                if best < 0 or scores[m] > best_score:
                    best = m
                    best_score = scores[m]
            taken[best] = 1
            idx_v[b, t] = best
            score_v[b, t] = best_score

    return out_idx, out_score
