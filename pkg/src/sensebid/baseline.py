"""Uninformed fixed-bid-threshold baseline.

Accepts any arriving user whose bid is at most a fixed price while the
service target is unmet, and pays that price.  Trivially bid-independent;
useful only as a comparison point.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from .core import AuctionOutcome, Decision, DeclaredProfile
from .money import MICRO, as_fraction
from .valuefn import CoverageValueFn


def run_random_threshold(
    arrivals: Iterable[DeclaredProfile],
    value_fn,
    required_service,
    deadline: int,
    price_micro: int,
) -> AuctionOutcome:
    if price_micro <= 0:
        raise ValueError("price threshold must be positive")
    required = as_fraction(required_service)
    coverage = isinstance(value_fn, CoverageValueFn)
    threshold = Fraction(price_micro, MICRO)

    users = sorted(arrivals, key=lambda p: (p.arrival_step, p.id))
    selected: list[int] = []
    covered: set = set()
    value = 0
    payments: dict[int, int] = {}
    decisions: list[Decision] = []
    for user in users:
        if user.arrival_step is None or not 1 <= user.arrival_step <= deadline:
            raise ValueError(f"user {user.id} arrives outside the horizon")
        before = value
        if Fraction(value) >= required:
            accepted, payment, reason = False, 0, "service-done"
        elif user.bid_micro > price_micro:
            accepted, payment, reason = False, 0, "threshold"
        else:
            accepted, payment, reason = True, price_micro, ""
            payments[user.id] = price_micro
            selected.append(user.id)
            if coverage:
                fresh = value_fn.task_indices(user.id) - covered
                covered |= fresh
                value += len(fresh)
            else:
                value = value_fn.value(selected)
        decisions.append(
            Decision(
                clock=user.arrival_step,
                user=user.id,
                accepted=accepted,
                payment_micro=payment,
                threshold=threshold,
                reason=reason,
                value_before=before,
                value_after=value,
            )
        )
    return AuctionOutcome(
        winners=tuple(selected),
        payments_micro=payments,
        achieved_value=value,
        total_payment_micro=sum(payments.values()),
        decisions=tuple(decisions),
    )
