"""Kernel dispatch and per-auction instance plumbing.

The density-greedy inner loop dominates runtime at simulation scale, so it
has a compiled implementation (`sensebid._fastpath`, Cython) with a pure
numpy twin (`sensebid._purepath`).  The backend is picked at import time;
set SENSEBID_BACKEND=pure or =compiled to force one.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from . import _purepath
from .core import DeclaredProfile
from .valuefn import CoverageValueFn

_REQUESTED = os.environ.get("SENSEBID_BACKEND", "auto").strip().lower() or "auto"
if _REQUESTED not in ("auto", "pure", "compiled"):
    raise ValueError(f"SENSEBID_BACKEND must be auto, pure, or compiled, not {_REQUESTED!r}")

_fastpath = None
if _REQUESTED in ("auto", "compiled"):
    try:
        from . import _fastpath  # type: ignore[attr-defined]
    except ImportError:
        _fastpath = None
        if _REQUESTED == "compiled":
            raise ImportError(
                "SENSEBID_BACKEND=compiled but the sensebid._fastpath extension is not built"
            )

BACKEND = "compiled" if _fastpath is not None else "pure"

# Exact int64 cross-multiplication in the compiled kernel needs
# max-marginal * max-bid to stay well inside 2^63.
_EXACT_LIMIT = 1 << 62

NO_STOP = 1 << 60


def greedy_sequence(indptr, tasks, bids, rows, covered, stop_value, *, force=None):
    """Dispatch one greedy run to the selected backend."""
    impl = force or BACKEND
    if impl == "compiled" and _fastpath is not None:
        max_bid = int(bids.max()) if bids.size else 0
        if covered.size * max_bid < _EXACT_LIMIT:
            return _fastpath.greedy_sequence(indptr, tasks, bids, rows, covered, stop_value)
    return _purepath.greedy_sequence(indptr, tasks, bids, rows, covered, stop_value)


class KernelInstance:
    """CSR view of declared profiles ready for the greedy kernels.

    Rows are ordered by ascending user id, which makes the kernel's
    lowest-row tie-break equal to the lowest-user-id rule.
    """

    def __init__(self, value_fn: CoverageValueFn, profiles: Sequence[DeclaredProfile]):
        ordered = sorted(profiles, key=lambda p: p.id)
        ids = [p.id for p in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate user ids")
        self.value_fn = value_fn
        self.ids = tuple(ids)
        self.row_of = {uid: row for row, uid in enumerate(ids)}
        self.m = value_fn.m
        self.bids = np.array([p.bid_micro for p in ordered], dtype=np.int64)
        indptr = np.zeros(len(ids) + 1, dtype=np.int64)
        chunks = []
        for row, p in enumerate(ordered):
            idx = value_fn.task_indices(p.id)
            seg = np.fromiter(sorted(idx), dtype=np.int32, count=len(idx))
            chunks.append(seg)
            indptr[row + 1] = indptr[row] + seg.size
        self.indptr = indptr
        self.tasks = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int32)

    def sequence(self, *, exclude=None, stop_value=None, rows=None):
        """Density-greedy pick order as [(user_id, marginal), ...]."""
        if rows is None:
            rows = np.arange(len(self.ids), dtype=np.int64)
        if exclude is not None:
            rows = rows[rows != self.row_of[exclude]]
        covered = np.zeros(self.m, dtype=np.uint8)
        stop = NO_STOP if stop_value is None else stop_value
        picked, gains = greedy_sequence(
            self.indptr, self.tasks, self.bids, rows, covered, stop
        )
        return [(self.ids[r], int(g)) for r, g in zip(picked.tolist(), gains.tolist())]

    def bid_of(self, uid: int) -> int:
        return int(self.bids[self.row_of[uid]])

    def task_seg(self, uid: int) -> np.ndarray:
        row = self.row_of[uid]
        return self.tasks[self.indptr[row] : self.indptr[row + 1]]


def generic_sequence(value_fn, profiles: Sequence[DeclaredProfile], *, exclude=None, stop_value=None):
    """Oracle-agnostic greedy for non-coverage value functions.

    Same exact semantics as the kernels, driven through value_fn.marginal;
    quadratic in the number of users, intended for small instances and for
    plugging in alternative integer-valued submodular oracles.
    """
    candidates = sorted(
        (p for p in profiles if p.id != exclude), key=lambda p: p.id
    )
    selected: list[int] = []
    out: list[tuple[int, int]] = []
    value = 0
    stop = NO_STOP if stop_value is None else stop_value
    remaining = list(candidates)
    while value < stop and remaining:
        best = None
        best_gain = 0
        for p in remaining:
            gain = value_fn.marginal(p.id, selected)
            if gain <= 0:
                continue
            if best is None or gain * best.bid_micro > best_gain * p.bid_micro:
                best, best_gain = p, gain
        if best is None:
            break
        selected.append(best.id)
        out.append((best.id, best_gain))
        value += best_gain
        remaining.remove(best)
    return out


def sequence_for(value_fn, profiles, *, exclude=None, stop_value=None):
    """Pick the kernel path for coverage oracles, generic path otherwise."""
    if isinstance(value_fn, CoverageValueFn):
        inst = KernelInstance(value_fn, profiles)
        return inst.sequence(exclude=exclude, stop_value=stop_value)
    return generic_sequence(value_fn, profiles, exclude=exclude, stop_value=stop_value)
