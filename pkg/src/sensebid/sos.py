"""Online multi-stage threshold mechanism under a service target.

The clock runs over integer steps up to the deadline T.  Stage service and
stage horizon start at R/2^floor(log2 T) and T/2^floor(log2 T) and double
at every boundary step t = floor(T').  An arriving user is accepted, and
paid its marginal value divided by the density threshold in force, iff its
bid does not exceed that offer and the selected value is still below the
stage service.  Every arrival joins the sample; at each boundary the
threshold is relearned from the sample via the blown-up greedy cover and
the proportional-share density, divided by the shrink factor.

Decisions are irrevocable.  Because coverage gains are integers, an accept
made below the stage service can land above it; allocation then pauses
until the stage service doubles past the attained value.  The trace records
both the pre-accept value and the stage service so the stop rule is fully
replayable.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .backend import sequence_for
from .budget_feasible import get_feasible_density
from .core import AuctionOutcome, Decision, DeclaredProfile, StageRecord
from .money import MICRO, as_fraction, floor_micro
from .valuefn import CoverageValueFn


@dataclass(frozen=True)
class SosConfig:
    required_service: Fraction
    deadline: int
    blowup: Fraction = Fraction(6)
    shrink: Fraction = Fraction(2)
    initial_threshold: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "required_service", as_fraction(self.required_service))
        object.__setattr__(self, "blowup", as_fraction(self.blowup))
        object.__setattr__(self, "shrink", as_fraction(self.shrink))
        object.__setattr__(self, "initial_threshold", as_fraction(self.initial_threshold))
        if self.required_service <= 0:
            raise ValueError("required service must be positive")
        if self.deadline < 1:
            raise ValueError("deadline must be at least 1")
        if self.blowup < 1:
            raise ValueError("blowup factor must be at least 1")
        if self.shrink < 1:
            raise ValueError("shrink divisor must be at least 1")
        if self.initial_threshold <= 0:
            raise ValueError("initial threshold must be positive")


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def get_density_threshold(
    sample: Sequence[DeclaredProfile],
    value_fn,
    stage_service: Fraction,
    blowup: Fraction,
    shrink: Fraction,
) -> tuple[Fraction, bool, int]:
    """Threshold for the next stage, learned from the arrived sample.

    Greedy-cover the sample up to blowup * stage_service, take the bid sum
    of that cover as the budget, and divide the proportional-share density
    by the shrink factor.  When the sample cannot cover the blown-up target
    the budget falls back to the bid sum of the whole sample and the
    shortfall is reported.

    Returns (threshold, shortfall, budget_micro).
    """
    if not sample:
        raise ValueError("sample must be nonempty")
    if stage_service <= 0:
        raise ValueError("stage service must be positive")
    target = blowup * stage_service
    seq = sequence_for(value_fn, sample, stop_value=_ceil(target))
    achieved = sum(g for _, g in seq)
    bids = {p.id: p.bid_micro for p in sample}
    if Fraction(achieved) < target:
        shortfall = True
        budget = sum(bids.values())
    else:
        shortfall = False
        budget = sum(bids[uid] for uid, _ in seq)
    density = get_feasible_density(sample, value_fn, budget).density
    return density / shrink, shortfall, budget


class SosAuction:
    """Stateful online auction; feed arrivals one step at a time."""

    def __init__(self, config: SosConfig, value_fn):
        self.config = config
        self.value_fn = value_fn
        level = config.deadline.bit_length() - 1
        self.t = 1
        self.stage_horizon = Fraction(config.deadline, 2**level)
        self.stage_service = config.required_service / 2**level
        self.threshold = config.initial_threshold
        self.sample: list[DeclaredProfile] = []
        self.selected: list[int] = []
        self.value = 0
        self.spend_micro = 0
        self.payments: dict[int, int] = {}
        self.decisions: list[Decision] = []
        self.stages: list[StageRecord] = []
        self.notes: list[str] = []
        self._coverage = isinstance(value_fn, CoverageValueFn)
        if self._coverage:
            self._covered = np.zeros(value_fn.m, dtype=bool)
            self._segs: dict[int, np.ndarray] = {}

    def _seg(self, uid: int) -> np.ndarray:
        seg = self._segs.get(uid)
        if seg is None:
            idx = self.value_fn.task_indices(uid)
            seg = np.fromiter(sorted(idx), dtype=np.int64, count=len(idx))
            self._segs[uid] = seg
        return seg

    def _marginal(self, user: DeclaredProfile) -> int:
        if self._coverage:
            seg = self._seg(user.id)
            return int((~self._covered[seg]).sum()) if seg.size else 0
        return self.value_fn.marginal(user.id, self.selected)

    def offer_for(self, user: DeclaredProfile) -> Fraction:
        """Price quoted to an arriving user: marginal value over the
        threshold in force.  Never reads the user's bid."""
        return Fraction(self._marginal(user)) / self.threshold

    def process_arrival(self, user: DeclaredProfile) -> Decision:
        if user.arrival_step != self.t:
            raise ValueError(
                f"user {user.id} arrives at step {user.arrival_step}, clock is {self.t}"
            )
        before = self.value
        if self.t > self.config.deadline:
            return self._log(user, before, False, 0, None, "deadline")
        gain = self._marginal(user)
        offer = Fraction(gain) / self.threshold
        self.sample.append(user)
        if self.value >= self.stage_service:
            return self._log(user, before, False, 0, offer, "stage-exhausted")
        if gain == 0:
            return self._log(user, before, False, 0, offer, "zero-marginal")
        # accept iff bid <= marginal/threshold, compared exactly
        if user.bid_micro * offer.denominator > offer.numerator * MICRO:
            return self._log(user, before, False, 0, offer, "threshold")
        payment = floor_micro(offer)
        self.payments[user.id] = payment
        self.selected.append(user.id)
        if self._coverage:
            self._covered[self._seg(user.id)] = True
        self.value += gain
        self.spend_micro += payment
        return self._log(user, before, True, payment, offer, "")

    def _log(self, user, value_before, accepted, payment, offer, reason) -> Decision:
        decision = Decision(
            clock=self.t,
            user=user.id,
            accepted=accepted,
            payment_micro=payment,
            threshold=self.threshold,
            reason=reason,
            offer_micro=None if offer is None else floor_micro(offer),
            value_before=value_before,
            value_after=self.value,
            stage_service=self.stage_service,
        )
        self.decisions.append(decision)
        return decision

    def advance_stage(self):
        """Boundary work at t = floor(stage horizon): relearn the threshold
        from the sample, then double the stage service and horizon."""
        if self.sample:
            rho, shortfall, _budget = get_density_threshold(
                self.sample,
                self.value_fn,
                self.stage_service,
                self.config.blowup,
                self.config.shrink,
            )
            if shortfall:
                self.notes.append(
                    f"sample shortfall at t={self.t}: budget from full sample"
                )
            if rho > 0:
                self.threshold = rho
            else:
                self.notes.append(
                    f"degenerate sample at t={self.t}: threshold kept"
                )
        else:
            self.notes.append(f"empty sample at t={self.t}: threshold kept")
        self.stage_service *= 2
        self.stage_horizon *= 2
        self.stages.append(
            StageRecord(
                stage=len(self.stages) + 1,
                t=self.t,
                stage_service=self.stage_service,
                threshold=self.threshold,
                sample_size=len(self.sample),
                selected_size=len(self.selected),
                value=self.value,
                spend_micro=self.spend_micro,
            )
        )

    def step(self, user: DeclaredProfile | None):
        """Advance one clock step, with at most one arriving user.

        Arrivals are processed before any boundary work at the same step.
        """
        decision = self.process_arrival(user) if user is not None else None
        if self.t == self.stage_horizon.numerator // self.stage_horizon.denominator:
            self.advance_stage()
        self.t += 1
        return decision

    def outcome(self) -> AuctionOutcome:
        return AuctionOutcome(
            winners=tuple(self.selected),
            payments_micro=dict(self.payments),
            achieved_value=self.value,
            total_payment_micro=self.spend_micro,
            decisions=tuple(self.decisions),
            stages=tuple(self.stages),
            notes=tuple(self.notes),
        )


def run_sos(
    arrivals: Iterable[DeclaredProfile], value_fn, config: SosConfig
) -> AuctionOutcome:
    """Run the full online auction over a time-ordered arrival stream."""
    by_step: dict[int, DeclaredProfile] = {}
    for user in arrivals:
        if user.arrival_step is None:
            raise ValueError(f"user {user.id} has no arrival step")
        if user.arrival_step in by_step:
            raise ValueError(f"two arrivals at step {user.arrival_step}")
        if not 1 <= user.arrival_step <= config.deadline:
            raise ValueError(f"user {user.id} arrives outside the horizon")
        by_step[user.arrival_step] = user
    auction = SosAuction(config, value_fn)
    for t in range(1, config.deadline + 1):
        auction.step(by_step.get(t))
    return auction.outcome()
