"""Scenario generation: task geometry, user populations, arrival processes.

Arrivals are discretized to one Bernoulli trial per integer step (at most
one user per step), which is how the single-arrival clock model reads; the
arrival rate is the per-step probability.  All randomness flows through
numpy generators derived from a single seed, so a (config, seed) pair
pins the scenario bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .core import DeclaredProfile, UserProfile, declare
from .money import fmt_micro, to_micro
from .valuefn import CoverageValueFn, TaskUniverse

MODELS = ("iid", "secretary")


@dataclass(frozen=True)
class ScenarioConfig:
    region_width: float = 340.0
    region_height: float = 340.0
    task_count: int = 3000
    sensing_radius: float = 7.0
    cost_low: float = 1.0
    cost_high: float = 10.0
    deadline: int = 1800
    arrival_rate: float = 0.5
    model: str = "iid"
    population: int | None = None

    def __post_init__(self):
        if self.task_count < 1:
            raise ValueError("task_count must be at least 1")
        if self.sensing_radius <= 0:
            raise ValueError("sensing_radius must be positive")
        if not self.cost_low < self.cost_high:
            raise ValueError("need cost_low < cost_high")
        if self.cost_low <= 0:
            raise ValueError("costs must be positive")
        if self.deadline < 1:
            raise ValueError("deadline must be at least 1")
        if not 0 < self.arrival_rate <= 1:
            raise ValueError("arrival_rate must be in (0, 1]")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.model == "secretary":
            if self.population is None or self.population < 1:
                raise ValueError("secretary model needs a positive population")
            if self.population > self.deadline:
                raise ValueError("population cannot exceed the deadline")


class Geometry:
    """Uniform task field plus the disk-coverage membership rule."""

    def __init__(self, universe: TaskUniverse, sensing_radius: float, region: tuple[float, float]):
        self.universe = universe
        self.sensing_radius = sensing_radius
        self.region = region

    def tasks_near(self, x: float, y: float) -> list:
        pos = self.universe.positions
        d2 = (pos[:, 0] - x) ** 2 + (pos[:, 1] - y) ** 2
        hits = np.nonzero(d2 <= self.sensing_radius * self.sensing_radius)[0]
        return [self.universe.tasks[j] for j in hits]

    def sample_user_tasks(self, rng: np.random.Generator) -> list:
        x = rng.uniform(0.0, self.region[0])
        y = rng.uniform(0.0, self.region[1])
        return self.tasks_near(x, y)


def gen_geometry(config: ScenarioConfig, seed) -> Geometry:
    """Drop `task_count` tasks uniformly over the region."""
    rng = np.random.default_rng(seed)
    width, height = config.region_width, config.region_height
    pos = np.column_stack(
        [rng.uniform(0.0, width, config.task_count), rng.uniform(0.0, height, config.task_count)]
    )
    universe = TaskUniverse(tasks=tuple(range(config.task_count)), positions=pos)
    return Geometry(universe, config.sensing_radius, (width, height))


@dataclass(frozen=True)
class Scenario:
    """A generated instance: universe, true profiles, and the horizon."""

    universe: TaskUniverse
    profiles: tuple[UserProfile, ...]
    deadline: int
    seed: int | None = None
    config: ScenarioConfig | None = None

    @property
    def n(self) -> int:
        return len(self.profiles)

    def value_fn(self) -> CoverageValueFn:
        return CoverageValueFn(self.universe, {p.id: p.tasks for p in self.profiles})

    def true_costs(self) -> dict[int, int]:
        return {p.id: p.cost_micro for p in self.profiles}

    def stream(self, bid_overrides: dict[int, int] | None = None) -> tuple[DeclaredProfile, ...]:
        """Truthful declared arrivals, optionally with some bids overridden."""
        overrides = bid_overrides or {}
        return tuple(
            declare(p, overrides.get(p.id)) for p in sorted(self.profiles, key=lambda p: p.arrival_step)
        )

    def truncated(self, n_max: int) -> "Scenario":
        kept = tuple(sorted(self.profiles, key=lambda p: p.arrival_step)[:n_max])
        return replace(self, profiles=kept)


def gen_users_iid(config: ScenarioConfig, seed) -> Scenario:
    """One Bernoulli(arrival_rate) trial per step; arrivals draw a fresh
    uniform position and a uniform cost."""
    root = np.random.SeedSequence(seed)
    geo_seed, flow_seed = root.spawn(2)
    geometry = gen_geometry(config, geo_seed)
    rng = np.random.default_rng(flow_seed)
    profiles = []
    uid = 0
    for t in range(1, config.deadline + 1):
        if rng.random() >= config.arrival_rate:
            continue
        uid += 1
        tasks = geometry.sample_user_tasks(rng)
        cost = rng.uniform(config.cost_low, config.cost_high)
        profiles.append(
            UserProfile(id=uid, cost_micro=to_micro(float(cost)), tasks=frozenset(tasks), arrival_step=t)
        )
    return Scenario(
        universe=geometry.universe,
        profiles=tuple(profiles),
        deadline=config.deadline,
        seed=_seed_int(seed),
        config=config,
    )


def gen_secretary_order(
    population: Sequence[UserProfile], deadline: int, seed
) -> Scenario:
    """Fix the population (adversarial costs/coverage), randomize only the
    arrival order: a uniform permutation over the first n slots."""
    n = len(population)
    if n > deadline:
        raise ValueError(f"population {n} exceeds deadline {deadline}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    ordered = sorted(population, key=lambda p: p.id)
    profiles = tuple(
        replace(ordered[int(who)], arrival_step=slot + 1) for slot, who in enumerate(order)
    )
    universe_tasks = sorted({t for p in population for t in p.tasks})
    universe = TaskUniverse(tasks=tuple(universe_tasks))
    return Scenario(universe=universe, profiles=profiles, deadline=deadline, seed=_seed_int(seed))


def gen_scenario(config: ScenarioConfig, seed) -> Scenario:
    if config.model == "iid":
        return gen_users_iid(config, seed)
    base = gen_users_iid(
        replace(config, model="iid", deadline=config.population, arrival_rate=1.0), seed
    )
    scenario = gen_secretary_order(
        base.profiles, config.deadline, np.random.SeedSequence(seed).spawn(3)[2]
    )
    return replace(scenario, universe=base.universe, config=config, seed=_seed_int(seed))


def _seed_int(seed) -> int | None:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return None


def scenario_to_dict(scenario: Scenario) -> dict:
    universe = scenario.universe
    return {
        "schema": "sensebid.scenario.v1",
        "deadline": scenario.deadline,
        "seed": scenario.seed,
        "tasks": list(universe.tasks),
        "positions": None
        if universe.positions is None
        else [[float(x), float(y)] for x, y in universe.positions],
        "users": [
            {
                "id": p.id,
                "cost": fmt_micro(p.cost_micro),
                "tasks": sorted(p.tasks),
                "arrival_step": p.arrival_step,
            }
            for p in scenario.profiles
        ],
        "config": None if scenario.config is None else asdict(scenario.config),
    }


def scenario_from_dict(doc: dict) -> Scenario:
    if doc.get("schema") != "sensebid.scenario.v1":
        raise ValueError("not a scenario document")
    positions = doc.get("positions")
    universe = TaskUniverse(
        tasks=tuple(doc["tasks"]),
        positions=None if positions is None else np.asarray(positions, dtype=np.float64),
    )
    profiles = tuple(
        UserProfile(
            id=u["id"],
            cost_micro=to_micro(u["cost"]),
            tasks=frozenset(u["tasks"]),
            arrival_step=u["arrival_step"],
        )
        for u in doc["users"]
    )
    cfg = doc.get("config")
    return Scenario(
        universe=universe,
        profiles=profiles,
        deadline=doc["deadline"],
        seed=doc.get("seed"),
        config=None if cfg is None else ScenarioConfig(**cfg),
    )


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
