from __future__ import annotations

from fractions import Fraction

import pytest

from sensebid.core import DeclaredProfile, UserProfile
from sensebid.valuefn import CoverageValueFn, TaskUniverse

# Three-user instance used across mechanism tests:
# u1 covers {t1,t2} at cost 2, u2 covers {t2,t3} at cost 1, u3 covers {t4}
# at cost 4.  Expected values below were frozen from an independent naive
# set-based greedy plus an exhaustive bid sweep.
HAND_MEMBERSHIP = {1: {"t1", "t2"}, 2: {"t2", "t3"}, 3: {"t4"}}
HAND_COSTS = {1: 2, 2: 1, 3: 4}


@pytest.fixture
def hand_universe():
    return TaskUniverse(tasks=("t1", "t2", "t3", "t4"))


@pytest.fixture
def hand_value_fn(hand_universe):
    return CoverageValueFn(hand_universe, HAND_MEMBERSHIP)


@pytest.fixture
def hand_profiles():
    return [
        DeclaredProfile.make(uid, HAND_COSTS[uid], HAND_MEMBERSHIP[uid])
        for uid in sorted(HAND_COSTS)
    ]


@pytest.fixture
def hand_users():
    return [
        UserProfile.make(uid, HAND_COSTS[uid], HAND_MEMBERSHIP[uid])
        for uid in sorted(HAND_COSTS)
    ]


def naive_density_sequence(membership, bids_micro, stop_value=None):
    """Reference greedy: exact Fraction densities, lowest-id ties.

    Independent of the package kernels; used as the oracle in differential
    tests.
    """
    covered = set()
    remaining = dict(membership)
    out = []
    total = 0
    while remaining:
        if stop_value is not None and total >= stop_value:
            break
        best = None
        best_key = None
        for uid in sorted(remaining):
            gain = len(set(remaining[uid]) - covered)
            if gain <= 0:
                continue
            key = Fraction(gain * 10**6, bids_micro[uid])
            if best_key is None or key > best_key:
                best, best_key = uid, key
        if best is None:
            break
        gain = len(set(remaining[best]) - covered)
        covered |= set(remaining[best])
        out.append((best, gain))
        total += gain
        del remaining[best]
    return out
