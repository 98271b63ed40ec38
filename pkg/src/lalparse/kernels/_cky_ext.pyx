# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CKY chart kernel.

Same arithmetic as ``_cky_py``: for every span the best label is the first
maximum over the label axis, and the span value is
``label_score + (best[i, k] + best[k, j])`` for the first maximising split.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def cky_tables(const double[:, :, ::1] chart):
    cdef Py_ssize_t n = chart.shape[0] - 1
    cdef Py_ssize_t nl = chart.shape[2]
    cdef Py_ssize_t length, i, j, k, l, best_k, best_l
    cdef double lab, cand, top

    if n < 1 or chart.shape[1] != n + 1 or nl < 1:
        raise ValueError(f"chart must have shape (n+1, n+1, labels), got ({chart.shape[0]}, {chart.shape[1]}, {chart.shape[2]})")

    best_np = np.zeros((n + 1, n + 1), dtype=np.float64)
    label_np = np.zeros((n + 1, n + 1), dtype=np.int64)
    split_np = np.full((n + 1, n + 1), -1, dtype=np.int64)
    cdef double[:, ::1] best = best_np
    cdef cnp.int64_t[:, ::1] label = label_np
    cdef cnp.int64_t[:, ::1] split = split_np

    with nogil:
        for length in range(1, n + 1):
            for i in range(0, n - length + 1):
                j = i + length
                best_l = 0
                lab = chart[i, j, 0]
                for l in range(1, nl):
                    if chart[i, j, l] > lab:
                        lab = chart[i, j, l]
                        best_l = l
                label[i, j] = best_l
                if length == 1:
                    best[i, j] = lab
                    continue
                best_k = i + 1
                top = best[i, i + 1] + best[i + 1, j]
                for k in range(i + 2, j):
                    cand = best[i, k] + best[k, j]
                    if cand > top:
                        top = cand
                        best_k = k
                split[i, j] = best_k
                best[i, j] = lab + top
    return best_np[0, n], label_np, split_np
