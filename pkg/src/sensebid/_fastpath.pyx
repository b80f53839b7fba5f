# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled density-greedy kernel.

Exact twin of sensebid._purepath.greedy_sequence: integer
cross-multiplication comparisons, ties to the lowest row index, marginals
maintained through an inverted task-to-owner index.  The dispatcher only
routes here when max-marginal * max-bid fits comfortably in 64 bits.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def greedy_sequence(object indptr_o, object tasks_o, object bids_o,
                    object rows_o, object covered_o, object stop_o):
    cdef cnp.int64_t[::1] indptr = np.ascontiguousarray(indptr_o, dtype=np.int64)
    cdef cnp.int32_t[::1] tasks = np.ascontiguousarray(tasks_o, dtype=np.int32)
    cdef cnp.int64_t[::1] bids = np.ascontiguousarray(bids_o, dtype=np.int64)
    cdef cnp.int64_t[::1] rows = np.ascontiguousarray(rows_o, dtype=np.int64)
    cdef cnp.uint8_t[::1] covered = covered_o
    cdef long long stop_value = <long long> stop_o

    cdef Py_ssize_t nsub = rows.shape[0]
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    if nsub == 0 or stop_value <= 0:
        return empty

    cdef Py_ssize_t m = covered.shape[0]
    cdef Py_ssize_t k, r, j, t, total = 0
    for k in range(nsub):
        r = rows[k]
        total += indptr[r + 1] - indptr[r]

    cdef cnp.int64_t[::1] marg = np.zeros(nsub, dtype=np.int64)
    cdef cnp.int64_t[::1] sub_bids = np.empty(nsub, dtype=np.int64)
    cdef cnp.int64_t[::1] seg_start = np.empty(nsub, dtype=np.int64)
    cdef cnp.int64_t[::1] seg_len = np.empty(nsub, dtype=np.int64)
    cdef cnp.int64_t[::1] sub_tasks = np.empty(max(total, 1), dtype=np.int64)

    cdef Py_ssize_t off = 0
    for k in range(nsub):
        r = rows[k]
        sub_bids[k] = bids[r]
        seg_start[k] = off
        seg_len[k] = indptr[r + 1] - indptr[r]
        for j in range(indptr[r], indptr[r + 1]):
            t = tasks[j]
            sub_tasks[off] = t
            if covered[t] == 0:
                marg[k] += 1
            off += 1

    # inverted index over the subset: owners of each task, via counting sort
    cdef cnp.int64_t[::1] inv_start = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] inv_owner = np.empty(max(total, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] fill = np.zeros(m + 1, dtype=np.int64)
    for j in range(total):
        inv_start[sub_tasks[j] + 1] += 1
    for t in range(m):
        inv_start[t + 1] += inv_start[t]
    for k in range(nsub):
        for j in range(seg_start[k], seg_start[k] + seg_len[k]):
            t = sub_tasks[j]
            inv_owner[inv_start[t] + fill[t]] = k
            fill[t] += 1

    cdef cnp.int64_t[::1] picks = np.empty(nsub, dtype=np.int64)
    cdef cnp.int64_t[::1] gains = np.empty(nsub, dtype=np.int64)
    cdef Py_ssize_t count = 0
    cdef long long value = 0
    cdef Py_ssize_t best
    cdef long long bm, bb, mk, bk
    cdef Py_ssize_t p

    while True:
        best = -1
        bm = 0
        bb = 1
        for k in range(nsub):
            mk = marg[k]
            if mk <= 0:
                continue
            bk = sub_bids[k]
            if best < 0 or mk * bb > bm * bk:
                best = k
                bm = mk
                bb = bk
        if best < 0:
            break
        picks[count] = rows[best]
        gains[count] = bm
        count += 1
        value += bm
        for j in range(seg_start[best], seg_start[best] + seg_len[best]):
            t = sub_tasks[j]
            if covered[t] == 0:
                covered[t] = 1
                for p in range(inv_start[t], inv_start[t + 1]):
                    marg[inv_owner[p]] -= 1
        marg[best] = 0
        if value >= stop_value:
            break

    return (
        np.asarray(picks[:count]).copy(),
        np.asarray(gains[:count]).copy(),
    )
