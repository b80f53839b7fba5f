"""Property-test harness: truthfulness, rationality, feasibility, frugality.

Every check here re-derives its verdict from mechanism reruns or from
independent oracles (exhaustive subset search, bid sweeps); nothing trusts
the mechanism's own bookkeeping beyond the recorded trace it audits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .backend import sequence_for
from .core import (
    AuctionOutcome,
    DeclaredProfile,
    NonMonotoneSelection,
    PaymentLoopInfeasible,
    ServiceInfeasible,
    UserProfile,
    find_critical_micro,
)
from .money import MICRO, as_fraction, to_micro
from .oms import OmsConfig, payment_bisection, payment_literal, select_budget, select_service, stage_budget
from .scenario import Scenario, ScenarioConfig, gen_users_iid
from .sos import SosConfig, run_sos

BRUTE_FORCE_CAP = 20


# ---------------------------------------------------------------------------
# deviation grids and truthfulness


def deviation_grid(
    cost_micro: int,
    points: int = 41,
    lo_mult: float = 0.1,
    hi_mult: float = 3.0,
    extra: Iterable[int] = (),
) -> tuple[int, ...]:
    """Bid grid around a true cost, always containing the cost itself."""
    if points < 2:
        raise ValueError("need at least two grid points")
    lo = cost_micro * as_fraction(lo_mult)
    hi = cost_micro * as_fraction(hi_mult)
    step = (hi - lo) / (points - 1)
    grid = {cost_micro}
    for k in range(points):
        bid = int(lo + step * k)
        if bid >= 1:
            grid.add(bid)
    grid.update(b for b in extra if b >= 1)
    return tuple(sorted(grid))


@dataclass
class TruthfulnessReport:
    user: int
    cost_micro: int
    truthful_won: bool
    truthful_utility_micro: int
    best_gain_micro: int
    best_bid_micro: int
    evaluations: int
    violations: list[tuple[int, int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.best_gain_micro <= 0


def check_truthfulness(
    run_fn: Callable[[int], tuple[bool, int]],
    user: int,
    cost_micro: int,
    grid: Sequence[int],
) -> TruthfulnessReport:
    """Rerun the mechanism across a bid grid and compare utilities.

    run_fn(bid) must return (won, payment_micro) for the probed user with
    everyone else held fixed.  Gains are exact micro-unit differences.
    """
    if cost_micro not in grid:
        raise ValueError("grid must include the true cost")
    won, pay = run_fn(cost_micro)
    truthful_u = pay - cost_micro if won else 0
    report = TruthfulnessReport(
        user=user,
        cost_micro=cost_micro,
        truthful_won=won,
        truthful_utility_micro=truthful_u,
        best_gain_micro=0,
        best_bid_micro=cost_micro,
        evaluations=0,
    )
    for bid in grid:
        won, pay = run_fn(bid)
        report.evaluations += 1
        u = pay - cost_micro if won else 0
        gain = u - truthful_u
        if gain > report.best_gain_micro:
            report.best_gain_micro = gain
            report.best_bid_micro = bid
        if gain > 0:
            report.violations.append((bid, gain))
    return report


def sos_deviation_runner(
    scenario: Scenario, value_fn, config: SosConfig, uid: int
) -> Callable[[int], tuple[bool, int]]:
    def run(bid_micro: int) -> tuple[bool, int]:
        outcome = run_sos(scenario.stream({uid: bid_micro}), value_fn, config)
        return uid in set(outcome.winners), outcome.payment(uid)

    return run


def oms_deviation_runner(
    profiles: Sequence[DeclaredProfile],
    value_fn,
    config: OmsConfig,
    uid: int,
    memoize_critical: bool = True,
) -> Callable[[int], tuple[bool, int]]:
    """Rerun winner determination per bid; payments per the configured rule.

    The bisection payment never reads the probed user's declared bid (it is
    the supremum over a sweep of that bid), so it is memoized by default;
    pass memoize_critical=False to recompute it on every call.
    """
    others = [p for p in profiles if p.id != uid]
    mine = next(p for p in profiles if p.id == uid)
    cache: dict[str, int] = {}

    def run(bid_micro: int) -> tuple[bool, int]:
        trial = others + [mine.with_bid(bid_micro)]
        try:
            phase1 = select_service(trial, value_fn, config.required_service)
        except ServiceInfeasible:
            return False, 0
        by_id = {p.id: p for p in trial}
        budget = stage_budget([by_id[u] for u in phase1])
        if config.winner_rule == "phase1_service":
            winners = phase1
        else:
            winners = select_budget(trial, value_fn, budget)
        if uid not in winners:
            return False, 0
        if config.payment_rule == "literal":
            try:
                # the budget folds in the probed bid, so no memoization here
                return True, payment_literal(
                    uid, trial, value_fn, config.required_service, budget
                )
            except PaymentLoopInfeasible:
                pass  # same fallback as the mechanism itself
        if memoize_critical and "critical" in cache:
            return True, cache["critical"]
        pay, _flag = payment_bisection(uid, trial, value_fn, config)
        cache["critical"] = pay
        return True, pay

    return run


# ---------------------------------------------------------------------------
# critical values


@dataclass(frozen=True)
class CriticalBid:
    micro: int
    flag: str  # ok | never-wins | unbounded


def critical_bid_oracle(
    wins: Callable[[int], bool],
    lo_micro: int,
    hi_micro: int,
    probe_points: int = 9,
    user: int | None = None,
) -> CriticalBid:
    """Win/lose transition point of a monotone selection rule.

    Probes a coarse grid first and raises NonMonotoneSelection with a
    witness if a loss is followed by a win; then bisects to the exact
    micro-unit supremum.
    """
    probes = sorted({int(x) for x in np.linspace(lo_micro, hi_micro, probe_points)})
    results = [wins(b) for b in probes]
    seen_loss_at: int | None = None
    for bid, won in zip(probes, results):
        if not won and seen_loss_at is None:
            seen_loss_at = bid
        elif won and seen_loss_at is not None:
            raise NonMonotoneSelection(user if user is not None else -1, seen_loss_at, bid)
    micro, flag = find_critical_micro(wins, lo_micro, hi_micro)
    return CriticalBid(micro, flag)


def sweep_critical(
    wins: Callable[[int], bool],
    lo_micro: int,
    hi_micro: int,
    step_micro: int = 10_000,
) -> tuple[int, bool]:
    """Exhaustive grid sweep: (largest winning bid on the grid or 0,
    whether the win set was a clean prefix)."""
    last_win = 0
    monotone = True
    losing = False
    bid = lo_micro
    while bid <= hi_micro:
        if wins(bid):
            if losing:
                monotone = False
            last_win = bid
        else:
            losing = True
        bid += step_micro
    return last_win, monotone


def oms_win_predicate(
    profiles: Sequence[DeclaredProfile], value_fn, config: OmsConfig, uid: int
) -> Callable[[int], bool]:
    others = [p for p in profiles if p.id != uid]
    mine = next(p for p in profiles if p.id == uid)

    def wins(bid_micro: int) -> bool:
        trial = others + [mine.with_bid(bid_micro)]
        try:
            phase1 = select_service(trial, value_fn, config.required_service)
        except ServiceInfeasible:
            return False
        if config.winner_rule == "phase1_service":
            return uid in phase1
        by_id = {p.id: p for p in trial}
        budget = stage_budget([by_id[u] for u in phase1])
        return uid in select_budget(trial, value_fn, budget)

    return wins


# ---------------------------------------------------------------------------
# rationality and feasibility audits


@dataclass
class IrReport:
    violations: list[tuple[int, int, int]] = field(default_factory=list)  # (user, payment, cost)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_individual_rationality(outcome: AuctionOutcome, true_costs: dict[int, int]) -> IrReport:
    report = IrReport()
    for uid in outcome.winners:
        pay = outcome.payment(uid)
        cost = true_costs[uid]
        if pay < cost:
            report.violations.append((uid, pay, cost))
    return report


@dataclass
class FeasibilityReport:
    required: Fraction
    achieved: int
    completed: bool
    gate_violations: list = field(default_factory=list)
    overshoot_steps: int = 0
    final_overshoot: Fraction = Fraction(0)

    @property
    def passed(self) -> bool:
        return not self.gate_violations


def check_service_feasibility(outcome: AuctionOutcome, required) -> FeasibilityReport:
    """Replay the stop rule from the trace.

    Every accept must have happened strictly below the stage service in
    force (the allocation gate); since coverage gains are integers the
    post-accept value may land above the stage target, which is reported
    as overshoot rather than as a violation.
    """
    required = as_fraction(required)
    report = FeasibilityReport(
        required=required,
        achieved=outcome.achieved_value,
        completed=Fraction(outcome.achieved_value) >= required,
    )
    for d in outcome.decisions:
        if d.stage_service is None:
            continue
        if d.accepted:
            if not Fraction(d.value_before) < d.stage_service:
                report.gate_violations.append(d)
            if Fraction(d.value_after) > d.stage_service:
                report.overshoot_steps += 1
    if Fraction(outcome.achieved_value) > required:
        report.final_overshoot = Fraction(outcome.achieved_value) - required
    return report


# ---------------------------------------------------------------------------
# cost oracles and frugality


@dataclass(frozen=True)
class CoverCost:
    cost_micro: int | None
    winners: tuple[int, ...]
    feasible: bool


def min_cost_cover_bruteforce(
    profiles: Sequence[UserProfile], value_fn, required, cap: int = BRUTE_FORCE_CAP
) -> CoverCost:
    """Exhaustive subset search for the cheapest coalition reaching the
    service target; subset-DP over bitmasks, capped at `cap` users."""
    n = len(profiles)
    if n > cap:
        raise ValueError(f"{n} users exceed the exhaustive-search cap of {cap}")
    required = as_fraction(required)
    target = -((-required.numerator) // required.denominator)  # ceil
    if target <= 0:
        return CoverCost(cost_micro=0, winners=(), feasible=True)
    if n == 0:
        return CoverCost(cost_micro=None, winners=(), feasible=False)
    ordered = sorted(profiles, key=lambda p: p.id)
    used_tasks = sorted({t for p in ordered for t in value_fn.task_indices(p.id)})
    bit_of = {t: k for k, t in enumerate(used_tasks)}
    lanes = max(1, (len(used_tasks) + 63) // 64)
    member = np.zeros((n, lanes), dtype=np.uint64)
    costs = np.array([p.cost_micro for p in ordered], dtype=np.int64)
    for row, p in enumerate(ordered):
        for t in value_fn.task_indices(p.id):
            b = bit_of[t]
            member[row, b // 64] |= np.uint64(1) << np.uint64(b % 64)
    size = 1 << n
    union = np.zeros((size, lanes), dtype=np.uint64)
    cost = np.zeros(size, dtype=np.int64)
    for b in range(n):
        union.reshape(-1, 2, 1 << b, lanes)[:, 1, :, :] |= member[b]
        cost.reshape(-1, 2, 1 << b)[:, 1, :] += costs[b]
    value = np.bitwise_count(union).sum(axis=1, dtype=np.int64)
    feasible = value >= target
    if not feasible.any():
        return CoverCost(cost_micro=None, winners=(), feasible=False)
    masked = np.where(feasible, cost, np.iinfo(np.int64).max)
    best_mask = int(np.argmin(masked))
    winners = tuple(ordered[b].id for b in range(n) if best_mask >> b & 1)
    return CoverCost(cost_micro=int(cost[best_mask]), winners=winners, feasible=True)


def greedy_cover_cost(profiles: Sequence[UserProfile], value_fn, required) -> CoverCost:
    """Cost-greedy cover: an upper bound on the optimal cover cost."""
    required = as_fraction(required)
    target = -((-required.numerator) // required.denominator)
    if target <= 0:
        return CoverCost(cost_micro=0, winners=(), feasible=True)
    declared = [DeclaredProfile(p.id, p.cost_micro, p.tasks, p.arrival_step) for p in profiles]
    seq = sequence_for(value_fn, declared, stop_value=target)
    achieved = sum(g for _, g in seq)
    if achieved < target:
        return CoverCost(cost_micro=None, winners=(), feasible=False)
    costs = {p.id: p.cost_micro for p in profiles}
    return CoverCost(
        cost_micro=sum(costs[uid] for uid, _ in seq),
        winners=tuple(uid for uid, _ in seq),
        feasible=True,
    )


@dataclass
class FrugalityReport:
    completed: bool
    ratio: float | None
    total_payment_micro: int
    optimum_micro: int | None
    basis: str  # exact | greedy | none
    note: str = ""


def measure_frugality(
    outcome: AuctionOutcome,
    profiles: Sequence[UserProfile],
    value_fn,
    required,
    cap: int = BRUTE_FORCE_CAP,
) -> FrugalityReport:
    """Total payment relative to the cheapest coalition covering the target.

    Uses the exhaustive oracle up to `cap` users, else falls back to the
    greedy cover cost (an upper bound on the optimum, flagged as such).
    Incomplete runs report no ratio.
    """
    required = as_fraction(required)
    completed = Fraction(outcome.achieved_value) >= required
    if len(profiles) <= cap:
        oracle, basis = min_cost_cover_bruteforce(profiles, value_fn, required, cap), "exact"
    else:
        oracle, basis = greedy_cover_cost(profiles, value_fn, required), "greedy"
    if not oracle.feasible:
        return FrugalityReport(completed, None, outcome.total_payment_micro, None, "none",
                               "cover infeasible for the oracle")
    if not completed:
        return FrugalityReport(completed, None, outcome.total_payment_micro,
                               oracle.cost_micro, basis, "incomplete run: ratio not compared")
    if oracle.cost_micro == 0:
        return FrugalityReport(completed, None, outcome.total_payment_micro, 0, basis,
                               "zero-cost optimum")
    return FrugalityReport(
        completed=completed,
        ratio=outcome.total_payment_micro / oracle.cost_micro,
        total_payment_micro=outcome.total_payment_micro,
        optimum_micro=oracle.cost_micro,
        basis=basis,
    )


# ---------------------------------------------------------------------------
# bid-independence (redaction replay)


def sos_offer_trace(scenario: Scenario, value_fn, config: SosConfig, overrides=None):
    outcome = run_sos(scenario.stream(overrides), value_fn, config)
    return {d.user: (d.threshold, d.offer_micro) for d in outcome.decisions}


def check_bid_independence(
    scenario: Scenario, value_fn, config: SosConfig, uid: int
) -> bool:
    """The offer quoted to a user must not move when only its bid does."""
    base = sos_offer_trace(scenario, value_fn, config)
    cost = scenario.true_costs()[uid]
    for probe in (max(1, cost // 7), cost * 3 + 1):
        redacted = sos_offer_trace(scenario, value_fn, config, {uid: probe})
        if redacted[uid] != base[uid]:
            return False
    return True


# ---------------------------------------------------------------------------
# scenario battery for the property suites


@dataclass(frozen=True)
class BatteryCase:
    scenario: Scenario
    required_service: int


def small_scenario_battery(
    count: int,
    seed: int,
    n_max: int = 12,
    deadline_choices: tuple[int, ...] = (8, 16, 32, 64),
    task_range: tuple[int, int] = (8, 24),
    region: float = 30.0,
    radius_range: tuple[float, float] = (6.0, 14.0),
    rate_range: tuple[float, float] = (0.25, 0.85),
    target_fractions: tuple[float, ...] = (0.4, 0.6, 0.8),
) -> list[BatteryCase]:
    """Seeded diverse mini-scenarios with reachable service targets."""
    master = np.random.default_rng(seed)
    cases: list[BatteryCase] = []
    while len(cases) < count:
        sub = int(master.integers(0, 2**62))
        rng = np.random.default_rng(sub)
        cfg = ScenarioConfig(
            region_width=region,
            region_height=region,
            task_count=int(rng.integers(task_range[0], task_range[1] + 1)),
            sensing_radius=float(rng.uniform(*radius_range)),
            cost_low=1.0,
            cost_high=10.0,
            deadline=int(rng.choice(deadline_choices)),
            arrival_rate=float(rng.uniform(*rate_range)),
        )
        scenario = gen_users_iid(cfg, sub).truncated(n_max)
        if scenario.n == 0:
            continue
        total = scenario.value_fn().value([p.id for p in scenario.profiles])
        if total < 2:
            continue
        frac = target_fractions[len(cases) % len(target_fractions)]
        required = max(1, int(total * frac))
        cases.append(BatteryCase(scenario=scenario, required_service=required))
    return cases
