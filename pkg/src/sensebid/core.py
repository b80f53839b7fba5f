"""Shared auction domain model: profiles, decision traces, outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable

from .money import MICRO, fmt_micro, to_micro


class ServiceInfeasible(Exception):
    """The available users cannot reach the required service level."""


class PaymentLoopInfeasible(Exception):
    """A payment re-selection cannot reach the service target without the winner."""


class NonMonotoneSelection(Exception):
    """Selection is not monotone in the probed user's bid."""

    def __init__(self, user: int, lose_bid_micro: int, win_bid_micro: int):
        self.user = user
        self.lose_bid_micro = lose_bid_micro
        self.win_bid_micro = win_bid_micro
        super().__init__(
            f"user {user} loses at bid {fmt_micro(lose_bid_micro)} "
            f"but wins at higher bid {fmt_micro(win_bid_micro)}"
        )


@dataclass(frozen=True)
class UserProfile:
    """A participant's private profile: true cost plus coverable tasks."""

    id: int
    cost_micro: int
    tasks: frozenset
    arrival_step: int | None = None

    def __post_init__(self):
        if self.cost_micro <= 0:
            raise ValueError(f"user {self.id}: cost must be positive")
        if self.arrival_step is not None and self.arrival_step < 1:
            raise ValueError(f"user {self.id}: arrival step must be >= 1")
        object.__setattr__(self, "tasks", frozenset(self.tasks))

    @property
    def cost(self) -> float:
        return self.cost_micro / MICRO

    @classmethod
    def make(cls, id: int, cost, tasks: Iterable[Hashable], arrival_step: int | None = None):
        return cls(id, to_micro(cost), frozenset(tasks), arrival_step)


@dataclass(frozen=True)
class DeclaredProfile:
    """What a user reports: a bid plus the (non-misreportable) task set."""

    id: int
    bid_micro: int
    tasks: frozenset
    arrival_step: int | None = None

    def __post_init__(self):
        if self.bid_micro <= 0:
            raise ValueError(f"user {self.id}: bid must be positive")
        object.__setattr__(self, "tasks", frozenset(self.tasks))

    @property
    def bid(self) -> float:
        return self.bid_micro / MICRO

    @classmethod
    def make(cls, id: int, bid, tasks: Iterable[Hashable], arrival_step: int | None = None):
        return cls(id, to_micro(bid), frozenset(tasks), arrival_step)

    def with_bid(self, bid_micro: int) -> "DeclaredProfile":
        return DeclaredProfile(self.id, bid_micro, self.tasks, self.arrival_step)


def declare(profile: UserProfile, bid_micro: int | None = None) -> DeclaredProfile:
    """Declared profile for a user; truthful (bid = cost) by default."""
    micro = profile.cost_micro if bid_micro is None else bid_micro
    return DeclaredProfile(profile.id, micro, profile.tasks, profile.arrival_step)


@dataclass(frozen=True)
class Decision:
    """One accept/reject decision with the threshold in force.

    `clock` is the arrival step for online mechanisms and the selection
    index for offline ones.  `threshold` is the density bar (online) or the
    pick density (offline); `stage_service` is the online stage target in
    force when the decision was made.
    """

    clock: int
    user: int
    accepted: bool
    payment_micro: int
    threshold: Fraction | None = None
    reason: str = ""
    offer_micro: int | None = None
    value_before: int = 0
    value_after: int = 0
    stage_service: Fraction | None = None


@dataclass(frozen=True)
class StageRecord:
    """Per-stage snapshot taken right after a threshold recomputation."""

    stage: int
    t: int
    stage_service: Fraction
    threshold: Fraction
    sample_size: int
    selected_size: int
    value: int
    spend_micro: int


@dataclass(frozen=True)
class AuctionOutcome:
    winners: tuple[int, ...]
    payments_micro: dict[int, int]
    achieved_value: int
    total_payment_micro: int
    decisions: tuple[Decision, ...]
    stages: tuple[StageRecord, ...] = ()
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        winner_set = set(self.winners)
        if len(winner_set) != len(self.winners):
            raise ValueError("duplicate winner")
        for uid, p in self.payments_micro.items():
            if uid not in winner_set:
                raise ValueError(f"non-winner {uid} carries a payment")
            if p < 0:
                raise ValueError(f"negative payment for {uid}")
        if self.total_payment_micro != sum(self.payments_micro.values()):
            raise ValueError("total payment does not match the payment vector")

    def payment(self, i: int) -> int:
        return self.payments_micro.get(i, 0)


def utility(i: int, outcome: AuctionOutcome, cost_micro: int) -> int:
    """Payment minus true cost if selected, zero otherwise (micro-units)."""
    if i in set(outcome.winners):
        return outcome.payment(i) - cost_micro
    return 0


@dataclass
class OutcomeChecklist:
    items: list[tuple[str, bool, str]] = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = ""):
        self.items.append((name, ok, detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.items)

    def failures(self) -> list[str]:
        return [name for name, ok, _ in self.items if not ok]


def validate_outcome(
    outcome: AuctionOutcome,
    required_service: Fraction | int,
    value_fn=None,
) -> OutcomeChecklist:
    """Re-checkable outcome audit: payment sanity, totals, service level."""
    checklist = OutcomeChecklist()
    winner_set = set(outcome.winners)

    bad_pay = [u for u, p in outcome.payments_micro.items() if p < 0]
    checklist.add("payments nonnegative", not bad_pay, f"negative: {bad_pay}")

    paid_nonwinners = sorted(
        {d.user for d in outcome.decisions if d.payment_micro > 0 and d.user not in winner_set}
    )
    checklist.add("non-winner paid", not paid_nonwinners, f"non-winner paid: {paid_nonwinners}")

    target = Fraction(required_service)
    checklist.add(
        "service shortfall",
        Fraction(outcome.achieved_value) >= target,
        f"achieved {outcome.achieved_value} < required {float(target):g}",
    )

    total = sum(outcome.payments_micro.values())
    checklist.add(
        "total consistency",
        total == outcome.total_payment_micro,
        f"sum {fmt_micro(total)} != recorded {fmt_micro(outcome.total_payment_micro)}",
    )

    if value_fn is not None:
        recomputed = value_fn.value(outcome.winners)
        checklist.add(
            "achieved value matches oracle",
            recomputed == outcome.achieved_value,
            f"oracle {recomputed} != recorded {outcome.achieved_value}",
        )
    return checklist


def find_critical_micro(
    wins: Callable[[int], bool],
    lo_micro: int,
    hi_micro: int,
) -> tuple[int, str]:
    """Supremum bid (in micro-units) at which `wins` still holds.

    Exact integer bisection over [lo, hi]; assumes `wins` is monotone
    (winning at b implies winning at any b' < b).  Returns the critical
    micro amount plus a flag: "ok", "never-wins" (loses even at lo), or
    "unbounded" (still wins at hi).
    """
    if lo_micro < 1 or hi_micro <= lo_micro:
        raise ValueError("need 1 <= lo < hi")
    if not wins(lo_micro):
        return 0, "never-wins"
    if wins(hi_micro):
        return hi_micro, "unbounded"
    lo, hi = lo_micro, hi_micro
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if wins(mid):
            lo = mid
        else:
            hi = mid
    return lo, "ok"
