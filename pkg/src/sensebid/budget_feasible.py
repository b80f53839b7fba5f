"""Proportional-share budget-feasible greedy over a sample of users.

Walks users in density order and keeps accepting while a user's bid stays
within its proportional share of the budget; the output is the achieved
value density (value per currency unit) of the accepted set.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .backend import sequence_for
from .core import DeclaredProfile
from .money import MICRO


@dataclass(frozen=True)
class FeasibleDensity:
    density: Fraction
    accepted: tuple[int, ...]
    value: int
    budget_micro: int


def get_feasible_density(
    profiles: Sequence[DeclaredProfile],
    value_fn,
    budget_micro: int,
) -> FeasibleDensity:
    """Value density achievable from `profiles` under `budget_micro`.

    Acceptance of the next density-ranked user i with marginal gain g
    requires b_i <= B * g / (V + g) together with the literal value-versus-
    budget cap V <= B (value counts compared against currency units as
    stated; dimensionally odd but kept as written).  Returns V(J)/B for
    the accepted set J; an empty J yields density 0.
    """
    if budget_micro <= 0:
        raise ValueError("budget must be positive")
    if not profiles:
        raise ValueError("sample must be nonempty")
    bids = {p.id: p.bid_micro for p in profiles}
    value = 0
    accepted: list[int] = []
    for uid, gain in sequence_for(value_fn, profiles):
        bid = bids[uid]
        if bid * (value + gain) > budget_micro * gain:
            break
        if value * MICRO > budget_micro:
            break
        accepted.append(uid)
        value += gain
    return FeasibleDensity(
        density=Fraction(value * MICRO, budget_micro),
        accepted=tuple(accepted),
        value=value,
        budget_micro=budget_micro,
    )
