"""Offline service-target reverse auction.

Winner selection is a density greedy run until the required service level
is met; a second, budget-bounded proportional-share selection is kept as a
diagnostic winner rule.  Payments come either from the positional
min(bid-scaled, share) formula or from exact critical-value bisection
against the selection rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .backend import sequence_for
from .core import (
    AuctionOutcome,
    Decision,
    DeclaredProfile,
    PaymentLoopInfeasible,
    ServiceInfeasible,
    find_critical_micro,
)
from .money import MICRO, as_fraction
from .valuefn import CoverageValueFn

WINNER_RULES = ("phase1_service", "phase2_budget")
PAYMENT_RULES = ("bisection_critical", "literal")


@dataclass(frozen=True)
class OmsConfig:
    required_service: Fraction
    winner_rule: str = "phase1_service"
    payment_rule: str = "bisection_critical"
    payment_cap_micro: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "required_service", as_fraction(self.required_service))
        if self.required_service < 0:
            raise ValueError("required service must be nonnegative")
        if self.winner_rule not in WINNER_RULES:
            raise ValueError(f"winner_rule must be one of {WINNER_RULES}")
        if self.payment_rule not in PAYMENT_RULES:
            raise ValueError(f"payment_rule must be one of {PAYMENT_RULES}")


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def select_service(
    profiles: Sequence[DeclaredProfile], value_fn, required: Fraction
) -> list[int]:
    """Greedy pick order by marginal density until coverage reaches `required`.

    Raises ServiceInfeasible when the whole population cannot reach it.
    """
    required = as_fraction(required)
    if required <= 0:
        return []
    seq = sequence_for(value_fn, profiles, stop_value=_ceil(required))
    achieved = sum(g for _, g in seq)
    if Fraction(achieved) < required:
        raise ServiceInfeasible(
            f"population covers {achieved} < required {float(required):g}"
        )
    return [uid for uid, _ in seq]


def stage_budget(winners: Sequence[DeclaredProfile]) -> int:
    """Sum of the winners' bids, in micro-units."""
    return sum(p.bid_micro for p in winners)


def select_budget(
    profiles: Sequence[DeclaredProfile], value_fn, budget_micro: int
) -> list[int]:
    """Proportional-share greedy: keep picking while the next candidate's
    density is at least the selected coalition's value-per-budget."""
    if budget_micro < 0:
        raise ValueError("budget must be nonnegative")
    bids = {p.id: p.bid_micro for p in profiles}
    picked: list[int] = []
    value = 0
    for uid, gain in sequence_for(value_fn, profiles):
        # V_i(S)/b_i >= V(S u {i})/B, cross-multiplied in integers
        if budget_micro * gain < bids[uid] * (value + gain):
            break
        picked.append(uid)
        value += gain
    return picked


def payment_literal(
    i: int,
    profiles: Sequence[DeclaredProfile],
    value_fn,
    required: Fraction,
    budget_micro: int,
) -> int:
    """Positional payment for winner i from the re-sorted others.

    Re-runs the density greedy over everyone but i; at each position j the
    candidate payment is min(bid-scaled marginal, budget share) and the
    final payment is the running maximum, accumulated until the others
    reach the required service level.
    """
    required = as_fraction(required)
    others = [p for p in profiles if p.id != i]
    seq = sequence_for(value_fn, others, stop_value=None)
    coverage = isinstance(value_fn, CoverageValueFn)
    if coverage:
        own = set(value_fn.task_indices(i))
        covered: set = set()
        seg_of = {p.id: value_fn.task_indices(p.id) for p in others}
    bids = {p.id: p.bid_micro for p in others}
    best = Fraction(0)
    value = 0
    selected: list[int] = []
    for uid, gain in seq:
        if Fraction(value) >= required:
            break
        gain_i = len(own - covered) if coverage else value_fn.marginal(i, selected)
        if gain_i > 0:
            bid_scaled = Fraction(gain_i * bids[uid], gain)
            share = Fraction(gain_i * budget_micro, value + gain_i)
            best = max(best, min(bid_scaled, share))
        if coverage:
            covered |= seg_of[uid]
        selected.append(uid)
        value += gain
    if Fraction(value) < required:
        raise PaymentLoopInfeasible(
            f"users other than {i} cover {value} < required {float(required):g}"
        )
    return int(best)  # already micro-units; floor at fixed precision


def _winner_set(profiles, value_fn, config: OmsConfig) -> list[int]:
    phase1 = select_service(profiles, value_fn, config.required_service)
    if config.winner_rule == "phase1_service":
        return phase1
    by_id = {p.id: p for p in profiles}
    budget = stage_budget([by_id[u] for u in phase1])
    return select_budget(profiles, value_fn, budget)


def _payment_cap(config: OmsConfig, profiles, i: int) -> int:
    if config.payment_cap_micro is not None:
        return config.payment_cap_micro
    others = [p.bid_micro for p in profiles if p.id != i]
    return 10 * max(others, default=MICRO)


def payment_bisection(
    i: int, profiles: Sequence[DeclaredProfile], value_fn, config: OmsConfig
) -> tuple[int, str]:
    """Critical-value payment: the supremum bid at which i still wins."""
    others = [p for p in profiles if p.id != i]
    mine = next(p for p in profiles if p.id == i)

    def wins(bid_micro: int) -> bool:
        trial = others + [mine.with_bid(bid_micro)]
        try:
            return i in _winner_set(trial, value_fn, config)
        except ServiceInfeasible:
            return False

    hi = max(_payment_cap(config, profiles, i), 2)
    return find_critical_micro(wins, 1, hi)


def run_oms(
    profiles: Sequence[DeclaredProfile], value_fn, config: OmsConfig
) -> AuctionOutcome:
    """Run selection plus payments and assemble the decision trace."""
    profiles = sorted(profiles, key=lambda p: p.id)
    if len({p.id for p in profiles}) != len(profiles):
        raise ValueError("duplicate user ids")
    by_id = {p.id: p for p in profiles}

    phase1 = select_service(profiles, value_fn, config.required_service)
    budget = stage_budget([by_id[u] for u in phase1])
    if config.winner_rule == "phase1_service":
        winners = phase1
    else:
        winners = select_budget(profiles, value_fn, budget)

    notes: list[str] = []
    payments: dict[int, int] = {}
    for uid in winners:
        if config.payment_rule == "literal":
            try:
                payments[uid] = payment_literal(
                    uid, profiles, value_fn, config.required_service, budget
                )
            except PaymentLoopInfeasible:
                p, flag = payment_bisection(uid, profiles, value_fn, config)
                payments[uid] = p
                notes.append(
                    f"payment loop infeasible for {uid}; bisection fallback ({flag})"
                )
        else:
            p, flag = payment_bisection(uid, profiles, value_fn, config)
            payments[uid] = p
            if flag == "unbounded":
                notes.append(f"critical bid for {uid} capped at the payment bracket")

    decisions: list[Decision] = []
    value = 0
    selected: list[int] = []
    for idx, uid in enumerate(winners, start=1):
        gain = value_fn.marginal(uid, selected)
        density = Fraction(gain * MICRO, by_id[uid].bid_micro)
        decisions.append(
            Decision(
                clock=idx,
                user=uid,
                accepted=True,
                payment_micro=payments[uid],
                threshold=density,
                value_before=value,
                value_after=value + gain,
            )
        )
        selected.append(uid)
        value += gain
    next_clock = len(winners) + 1
    for p in profiles:
        if p.id not in payments:
            decisions.append(
                Decision(
                    clock=next_clock,
                    user=p.id,
                    accepted=False,
                    payment_micro=0,
                    reason="not-selected",
                    value_before=value,
                    value_after=value,
                )
            )
    achieved = value_fn.value(winners)
    if Fraction(achieved) < config.required_service:
        notes.append(
            f"service shortfall: {achieved} < {float(config.required_service):g} "
            f"under {config.winner_rule}"
        )
    return AuctionOutcome(
        winners=tuple(winners),
        payments_micro=payments,
        achieved_value=achieved,
        total_payment_micro=sum(payments.values()),
        decisions=tuple(decisions),
        notes=tuple(notes),
    )
