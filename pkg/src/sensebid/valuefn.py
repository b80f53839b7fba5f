"""Task universes and the coverage value function.

The coverage function counts distinct tasks covered by a coalition of
users.  It is integer-valued, monotone, and submodular; mechanisms rely on
the integer values for exact greedy tie-breaking.  Any object exposing
``ids()``, ``value(users)``, and ``marginal(i, users)`` with integer
results can stand in as an alternative value oracle.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class TaskUniverse:
    """Finite set of sensing tasks, optionally pinned to planar coordinates."""

    tasks: tuple[Hashable, ...]
    positions: np.ndarray | None = None

    def __post_init__(self):
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError("task identifiers must be unique")
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=np.float64)
            if pos.shape != (len(self.tasks), 2):
                raise ValueError("positions must have shape (m, 2)")
            if not np.isfinite(pos).all():
                raise ValueError("task coordinates must be finite")
            object.__setattr__(self, "positions", pos)
        object.__setattr__(
            self, "_index", {task: j for j, task in enumerate(self.tasks)}
        )

    @property
    def m(self) -> int:
        return len(self.tasks)

    def index_of(self, task: Hashable) -> int:
        return self._index[task]


class CoverageValueFn:
    """Number of distinct tasks covered by the union of users' task sets."""

    def __init__(self, universe: TaskUniverse, membership: Mapping[int, Iterable[Hashable]]):
        self.universe = universe
        sets: dict[int, frozenset[int]] = {}
        for uid, tasks in membership.items():
            try:
                idx = frozenset(universe.index_of(t) for t in tasks)
            except KeyError as exc:
                raise ValueError(f"user {uid} claims a task outside the universe: {exc}")
            sets[uid] = idx
        self._sets = sets
        self._ids = tuple(sorted(sets))
        # CSR layout over users sorted by id, shared with the greedy kernels.
        indptr = np.zeros(len(self._ids) + 1, dtype=np.int64)
        chunks = []
        for row, uid in enumerate(self._ids):
            seg = np.fromiter(sorted(sets[uid]), dtype=np.int32, count=len(sets[uid]))
            chunks.append(seg)
            indptr[row + 1] = indptr[row] + seg.size
        self.indptr = indptr
        self.task_rows = (
            np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int32)
        )
        self.row_of = {uid: row for row, uid in enumerate(self._ids)}

    def ids(self) -> tuple[int, ...]:
        return self._ids

    @property
    def m(self) -> int:
        return self.universe.m

    def task_indices(self, i: int) -> frozenset[int]:
        return self._sets[i]

    def value(self, users: Iterable[int]) -> int:
        covered: set[int] = set()
        for i in users:
            covered |= self._sets[i]
        return len(covered)

    def marginal(self, i: int, users: Iterable[int]) -> int:
        own = self._sets[i]
        members = list(users)
        if i in members:
            return 0
        covered: set[int] = set()
        for j in members:
            covered |= self._sets[j]
        return len(own - covered)


@dataclass
class SubmodularityReport:
    trials: int
    chain_checks: int = 0
    monotone_checks: int = 0
    violations: list[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_submodular(fn, trials: int, seed: int = 0) -> SubmodularityReport:
    """Randomized diminishing-returns and monotonicity audit.

    Samples chains S ⊆ T and an outside element i, and checks
    marginal(i, S) ≥ marginal(i, T) plus value(S) ≤ value(T).  Violations
    are recorded with their witnesses.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = random.Random(seed)
    ids = list(fn.ids())
    report = SubmodularityReport(trials=trials)
    if not ids:
        return report
    for _ in range(trials):
        t_size = rng.randint(0, len(ids))
        big = rng.sample(ids, t_size)
        small = [u for u in big if rng.random() < 0.5]
        v_small = fn.value(small)
        v_big = fn.value(big)
        report.monotone_checks += 1
        if v_small > v_big:
            report.violations.append(("monotonicity", tuple(small), tuple(big), v_small, v_big))
        outside = [u for u in ids if u not in set(big)]
        if not outside:
            continue
        i = rng.choice(outside)
        gain_small = fn.marginal(i, small)
        gain_big = fn.marginal(i, big)
        report.chain_checks += 1
        if gain_small < gain_big:
            report.violations.append(
                ("diminishing-returns", i, tuple(small), tuple(big), gain_small, gain_big)
            )
    return report


def coverage_from_positions(
    universe: TaskUniverse,
    user_positions: Mapping[int, Sequence[float]],
    radius: float,
) -> CoverageValueFn:
    """Coverage oracle for users sensing every task within `radius` meters."""
    if universe.positions is None:
        raise ValueError("universe has no task coordinates")
    r2 = radius * radius
    membership = {}
    for uid, pos in user_positions.items():
        d2 = ((universe.positions - np.asarray(pos, dtype=np.float64)) ** 2).sum(axis=1)
        membership[uid] = [universe.tasks[j] for j in np.nonzero(d2 <= r2)[0]]
    return CoverageValueFn(universe, membership)
