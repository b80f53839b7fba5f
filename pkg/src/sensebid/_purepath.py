"""Pure numpy implementation of the density-greedy kernel.

Semantics shared with the compiled fast path: repeatedly pick the
candidate maximizing marginal-coverage-per-bid, with exact rational
comparisons and ties broken toward the lowest row index.  Marginals are
maintained incrementally through an inverted task-to-owner index.
"""

from __future__ import annotations

import numpy as np

_NEAR_MAX = 1.0 - 1e-12


def greedy_sequence(indptr, tasks, bids, rows, covered, stop_value):
    """Run the exact density greedy over a subset of rows.

    indptr/tasks: CSR of per-row task indices; bids: int64 micro-units;
    rows: ascending row indices eligible for selection; covered: uint8
    mask over tasks, mutated in place; stop_value: halt once the summed
    marginals reach this value.

    Returns (picked_rows, marginals) as int64 arrays, in pick order.
    Rows with zero marginal are never picked.
    """
    rows = np.asarray(rows, dtype=np.int64)
    nsub = rows.size
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    if nsub == 0 or stop_value <= 0:
        return empty

    lens = (indptr[rows + 1] - indptr[rows]).astype(np.int64)
    total = int(lens.sum())
    starts = indptr[rows].astype(np.int64)
    if total:
        head = np.cumsum(lens) - lens
        flat = np.repeat(starts - head, lens) + np.arange(total, dtype=np.int64)
        sub_tasks = tasks[flat].astype(np.int64)
    else:
        sub_tasks = np.zeros(0, dtype=np.int64)
    owner = np.repeat(np.arange(nsub, dtype=np.int64), lens)

    uncovered = covered[sub_tasks] == 0 if total else np.zeros(0, dtype=bool)
    marg = np.bincount(owner, weights=uncovered, minlength=nsub).astype(np.int64)

    # Inverted index: positions of each task's owners, sorted by task id.
    order = np.argsort(sub_tasks, kind="stable")
    inv_tasks = sub_tasks[order]
    inv_owner = owner[order]

    sub_bids = bids[rows]
    bidf = sub_bids.astype(np.float64)
    seg_start = np.cumsum(lens) - lens

    picks: list[int] = []
    gains: list[int] = []
    value = 0
    while True:
        dens = marg / bidf
        best = int(np.argmax(dens))
        top = dens[best]
        if top <= 0.0:
            break
        # Exact refinement: floats only prefilter; ties and near-ties are
        # resolved by integer cross-multiplication, lowest row first.
        cand = np.nonzero(dens >= top * _NEAR_MAX)[0]
        if cand.size > 1:
            best = int(cand[0])
            bm, bb = int(marg[best]), int(sub_bids[best])
            for k in cand[1:].tolist():
                m_k, b_k = int(marg[k]), int(sub_bids[k])
                if m_k * bb > bm * b_k:
                    best, bm, bb = k, m_k, b_k
        gain = int(marg[best])
        picks.append(int(rows[best]))
        gains.append(gain)
        value += gain
        seg = sub_tasks[seg_start[best] : seg_start[best] + lens[best]]
        fresh = seg[covered[seg] == 0]
        covered[fresh] = 1
        marg[best] = 0
        if value >= stop_value:
            break
        if fresh.size:
            lo = np.searchsorted(inv_tasks, fresh, side="left")
            hi = np.searchsorted(inv_tasks, fresh, side="right")
            touched = np.concatenate([inv_owner[a:b] for a, b in zip(lo, hi)])
            np.subtract.at(marg, touched, 1)
            marg[best] = 0
    return (
        np.asarray(picks, dtype=np.int64),
        np.asarray(gains, dtype=np.int64),
    )
