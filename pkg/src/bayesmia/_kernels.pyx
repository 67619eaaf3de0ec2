# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled threshold-scan and ranking kernels (see ``bayesmia.kernels``)."""

import numpy as np


cdef inline Py_ssize_t _scan(const double[:] v, const unsigned char[:] pos,
                             long long w_pos, long long w_neg, bint pos_high,
                             long long *best_obj) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0], c, best_c = 0
    cdef long long P = 0, N, pb = 0, nb = 0, obj, best = -1
    for c in range(n):
        P += pos[c]
    N = n - P
    for c in range(n + 1):
        if c == 0 or c == n or v[c - 1] < v[c]:
            if pos_high:
                obj = w_pos * (P - pb) + w_neg * nb
            else:
                obj = w_pos * pb + w_neg * (N - nb)
            if obj > best:
                best = obj
                best_c = c
        if c < n:
            if pos[c]:
                pb += 1
            else:
                nb += 1
    best_obj[0] = best
    return best_c


def best_cut(values, pos, w_pos, w_neg, pos_high):
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const unsigned char[:] p = np.ascontiguousarray(pos, dtype=np.uint8)
    cdef long long obj = 0
    cdef Py_ssize_t c
    c = _scan(v, p, w_pos, w_neg, pos_high, &obj)
    return int(c), int(obj)


def best_cuts_rows(values, pos, w_pos, w_neg, pos_high):
    cdef const double[:, :] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const unsigned char[:, :] p = np.ascontiguousarray(pos, dtype=np.uint8)
    cdef const long long[:] wp = np.ascontiguousarray(w_pos, dtype=np.int64)
    cdef const long long[:] wn = np.ascontiguousarray(w_neg, dtype=np.int64)
    cdef Py_ssize_t i, rows = v.shape[0]
    cdef bint high = pos_high
    cdef long long obj = 0
    out = np.empty(rows, dtype=np.int64)
    cdef long long[:] o = out
    with nogil:
        for i in range(rows):
            o[i] = _scan(v[i], p[i], wp[i], wn[i], high, &obj)
    return out


def average_precision_desc(scores, pos):
    cdef const double[:] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const unsigned char[:] p = np.ascontiguousarray(pos, dtype=np.uint8)
    cdef Py_ssize_t i, n = s.shape[0]
    cdef long long tp = 0, tp_group = 0, total = 0
    cdef double ap = 0.0
    for i in range(n):
        total += p[i]
    if total == 0:
        return float("nan")
    for i in range(n):
        if p[i]:
            tp += 1
            tp_group += 1
        if i == n - 1 or s[i + 1] != s[i]:
            if tp_group:
                ap += tp_group * (<double>tp / (i + 1))
            tp_group = 0
    return ap / total
