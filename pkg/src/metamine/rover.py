"""The object-level agent: a rover crossing a terrain grid.

The rover always moves greedily toward the goal; the only choice it makes
is the movement strategy for each step, and the chance of slipping depends
on the terrain of the cell it is about to enter. That keeps the world
trivial to simulate while leaving one real regularity for the mining side
to discover: which strategy survives which terrain.

Determinism: a step consumes exactly one uniform draw from the supplied
generator, taken before the move is resolved. Episode-level exploration
draws happen before the step draw. Same world, policy, and seed always
produce byte-identical traces.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Any, Iterable, Protocol, Sequence

from .errors import ConsistencyError, InputFormatError, SchemaError
from .jsonio import expect_field, expect_object, read_json, write_json
from .knowledge import AttributeDef, InformationState, Schema, define_schema
from .seeds import derive_seed

Coord = tuple[int, int]

OUTCOME_SUCCESS = "success"
OUTCOME_FAILURE = "failure"

TERRAIN_ATTR = "terrain"
STRATEGY_ATTR = "strategy"
OUTCOME_ATTR = "outcome"


class DecisionMaker(Protocol):
    def decide(self, state: InformationState) -> Any: ...


@dataclass(frozen=True)
class FixedStrategy:
    """A policy stub that always answers the same strategy."""

    strategy: str

    def decide(self, state: InformationState) -> str:
        return self.strategy


@dataclass(frozen=True)
class Rewards:
    step_cost: float = 1.0
    failure_penalty: float = 2.0
    goal_reward: float = 10.0

    def __post_init__(self):
        for name in ("step_cost", "failure_penalty", "goal_reward"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                raise SchemaError("BadReward", f"{name} must be a non-negative number, got {v!r}")
        if self.goal_reward <= 0:
            raise SchemaError("BadReward", "goal_reward must be positive")


@dataclass(frozen=True)
class GridWorld:
    """Rectangular grid with one terrain label per cell.

    cells is row-major: cells[y][x]. hazard maps (terrain, strategy) to the
    probability that a step onto that terrain with that strategy slips.
    """

    width: int
    height: int
    terrains: tuple[str, ...]
    cells: tuple[tuple[str, ...], ...]
    start: Coord
    goal: Coord
    strategies: tuple[str, ...]
    hazard: dict[tuple[str, str], float]
    rewards: Rewards = Rewards()
    max_steps: int = 50
    master_seed: int | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise SchemaError("BadGrid", f"grid must be at least 1x1, got {self.width}x{self.height}")
        for group, label in ((self.terrains, "terrains"), (self.strategies, "strategies")):
            if not group or len(set(group)) != len(group) or not all(isinstance(v, str) and v for v in group):
                raise SchemaError("BadNameList", f"{label} must be distinct non-empty strings")
        if len(self.cells) != self.height or any(len(row) != self.width for row in self.cells):
            raise SchemaError("BadGrid", "cells must be height rows of width terrain labels")
        for row in self.cells:
            for t in row:
                if t not in self.terrains:
                    raise SchemaError("UnknownTerrain", f"cell terrain {t!r} is not a declared terrain")
        for label, pos in (("start", self.start), ("goal", self.goal)):
            if not self.in_bounds(*pos):
                raise SchemaError("OutOfGrid", f"{label} {pos} is outside the grid")
        if self.start == self.goal:
            raise SchemaError("DegenerateWorld", "start and goal must differ")
        expected = {(t, s) for t in self.terrains for s in self.strategies}
        if set(self.hazard) != expected:
            raise SchemaError("IncompleteHazard", "hazard table must cover every (terrain, strategy) pair exactly once")
        for pair, p in self.hazard.items():
            if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0.0 <= p <= 1.0:
                raise SchemaError("BadHazard", f"hazard{pair} must be a probability, got {p!r}")
        if not isinstance(self.max_steps, int) or self.max_steps < 1:
            raise SchemaError("BadMaxSteps", f"max_steps must be a positive integer, got {self.max_steps!r}")
        if self.master_seed is not None and (not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool)):
            raise SchemaError("BadSeed", f"master_seed must be an integer, got {self.master_seed!r}")

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def terrain_at(self, x: int, y: int) -> str:
        if not self.in_bounds(x, y):
            raise ConsistencyError("OutOfGrid", f"({x}, {y}) is outside the grid")
        return self.cells[y][x]


@dataclass(frozen=True)
class DecisionRecord:
    """One step as the rover experienced it.

    cell is where the rover stood, observed holds the features it saw when
    choosing (the terrain of the cell it was about to enter), outcome says
    whether the move succeeded, and reward is the step's score.
    """

    epoch: int
    cell: Coord
    observed: dict[str, Any]
    strategy: str
    outcome: str
    reward: float


@dataclass(frozen=True)
class EpisodeTrace:
    records: tuple[DecisionRecord, ...]
    reached_goal: bool
    steps_used: int

    def __post_init__(self):
        if self.steps_used != len(self.records):
            raise ConsistencyError("BadTrace", f"steps_used {self.steps_used} != {len(self.records)} records")


@dataclass(frozen=True)
class Outcome:
    reached_goal: bool
    total_reward: float
    steps_used: int


def outcome_of(trace: EpisodeTrace) -> Outcome:
    return Outcome(trace.reached_goal, sum(r.reward for r in trace.records), trace.steps_used)


def greedy_target(world: GridWorld, position: Coord) -> Coord:
    """Next cell one step closer to the goal.

    Moves along the axis with more distance left; ties go to x. Returns the
    position itself when already at the goal.
    """
    x, y = position
    dx = world.goal[0] - x
    dy = world.goal[1] - y
    if dx == 0 and dy == 0:
        return position
    if abs(dx) >= abs(dy) and dx != 0:
        return (x + (1 if dx > 0 else -1), y)
    return (x, y + (1 if dy > 0 else -1))


def step(world: GridWorld, position: Coord, strategy: str, rng: Random) -> tuple[Coord, str, float]:
    """Resolve one move attempt; returns (new position, outcome, reward).

    Consumes exactly one draw even when no move is possible (at the goal or
    the target would leave the grid), so step-count and stream position
    stay in lockstep.
    """
    if not world.in_bounds(*position):
        raise ConsistencyError("OutOfGrid", f"position {position} is outside the grid")
    if strategy not in world.strategies:
        raise ConsistencyError("UnknownStrategy", f"strategy {strategy!r} is not one the world supports")
    u = rng.random()
    target = greedy_target(world, position)
    if target == position or not world.in_bounds(*target):
        return position, OUTCOME_SUCCESS, -world.rewards.step_cost
    if u < world.hazard[(world.terrain_at(*target), strategy)]:
        return position, OUTCOME_FAILURE, -(world.rewards.step_cost + world.rewards.failure_penalty)
    reward = -world.rewards.step_cost
    if target == world.goal:
        reward += world.rewards.goal_reward
    return target, OUTCOME_SUCCESS, reward


def run_episode(world: GridWorld, policy: DecisionMaker, seed: int, explore: float = 0.0) -> EpisodeTrace:
    """One episode from start until the goal or the step budget runs out.

    With explore > 0, each step first draws once; below the threshold the
    strategy is drawn uniformly instead of asking the policy. Exploration
    belongs to training runs only; evaluation uses the default 0.0.
    """
    if not 0.0 <= explore <= 1.0:
        raise ConsistencyError("BadExploration", f"explore must be in [0, 1], got {explore!r}")
    rng = Random(seed)
    position = world.start
    records: list[DecisionRecord] = []
    for epoch in range(world.max_steps):
        if position == world.goal:
            break
        target = greedy_target(world, position)
        observed = {TERRAIN_ATTR: world.terrain_at(*target)}
        if explore > 0.0 and rng.random() < explore:
            strategy = rng.choice(world.strategies)
        else:
            strategy = policy.decide(InformationState(values=observed, epoch=epoch))
        if strategy not in world.strategies:
            raise ConsistencyError("UnknownStrategy", f"policy chose {strategy!r}, not a world strategy")
        here = position
        position, outcome, reward = step(world, position, strategy, rng)
        records.append(DecisionRecord(epoch, here, observed, strategy, outcome, reward))
    return EpisodeTrace(tuple(records), position == world.goal, len(records))


def run_seeded(world: GridWorld, policy: DecisionMaker, seeds: Sequence[int], explore: float = 0.0,
               threads: int = 1) -> list[EpisodeTrace]:
    """One episode per seed, in seed order.

    Episodes are pure functions of (world, policy, seed), so the threaded
    path returns exactly what the sequential path does.
    """
    if threads <= 1:
        return [run_episode(world, policy, s, explore) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: run_episode(world, policy, s, explore), seeds))


def run_episodes(world: GridWorld, policy: DecisionMaker, count: int, master_seed: int, explore: float = 0.0,
                 threads: int = 1) -> list[EpisodeTrace]:
    """count episodes with per-episode seeds derived from master_seed."""
    return run_seeded(world, policy, [derive_seed(master_seed, i) for i in range(count)], explore, threads)


def world_schema(world: GridWorld) -> Schema:
    """The attribute vocabulary this world's traces are expressed in."""
    return define_schema(
        [
            AttributeDef(TERRAIN_ATTR, "categorical", "world", world.terrains),
            AttributeDef(STRATEGY_ATTR, "categorical", "self", world.strategies),
            AttributeDef(OUTCOME_ATTR, "categorical", "self", (OUTCOME_SUCCESS, OUTCOME_FAILURE)),
        ],
        class_attribute=STRATEGY_ATTR,
    )


def world_to_json(world: GridWorld) -> dict:
    return {
        "width": world.width,
        "height": world.height,
        "terrains": list(world.terrains),
        "cells": [list(row) for row in world.cells],
        "start": list(world.start),
        "goal": list(world.goal),
        "strategies": list(world.strategies),
        "hazard": {t: {s: world.hazard[(t, s)] for s in world.strategies} for t in world.terrains},
        "rewards": {
            "step_cost": world.rewards.step_cost,
            "failure_penalty": world.rewards.failure_penalty,
            "goal_reward": world.rewards.goal_reward,
        },
        "max_steps": world.max_steps,
        "master_seed": world.master_seed,
    }


def world_from_json(obj: Any) -> GridWorld:
    obj = expect_object(obj, "world")
    terrains = expect_field(obj, "terrains", "world")
    strategies = expect_field(obj, "strategies", "world")
    if not isinstance(terrains, list) or not isinstance(strategies, list):
        raise InputFormatError("BadField", "world terrains and strategies must be lists")
    cells = expect_field(obj, "cells", "world")
    if not isinstance(cells, list) or not all(isinstance(row, list) for row in cells):
        raise InputFormatError("BadField", "world cells must be a list of rows")
    hazard_json = expect_object(expect_field(obj, "hazard", "world"), "hazard table")
    hazard: dict[tuple[str, str], float] = {}
    for t, by_strategy in hazard_json.items():
        for s, p in expect_object(by_strategy, f"hazard row {t!r}").items():
            hazard[(t, s)] = p
    rewards_json = expect_object(expect_field(obj, "rewards", "world"), "rewards")
    start = expect_field(obj, "start", "world")
    goal = expect_field(obj, "goal", "world")
    for label, pos in (("start", start), ("goal", goal)):
        if not isinstance(pos, list) or len(pos) != 2:
            raise InputFormatError("BadField", f"world {label} must be an [x, y] pair")
    return GridWorld(
        width=expect_field(obj, "width", "world"),
        height=expect_field(obj, "height", "world"),
        terrains=tuple(terrains),
        cells=tuple(tuple(row) for row in cells),
        start=(start[0], start[1]),
        goal=(goal[0], goal[1]),
        strategies=tuple(strategies),
        hazard=hazard,
        rewards=Rewards(
            step_cost=expect_field(rewards_json, "step_cost", "rewards"),
            failure_penalty=expect_field(rewards_json, "failure_penalty", "rewards"),
            goal_reward=expect_field(rewards_json, "goal_reward", "rewards"),
        ),
        max_steps=expect_field(obj, "max_steps", "world"),
        master_seed=obj.get("master_seed"),
    )


def save_world(world: GridWorld, path: str | Path) -> None:
    write_json(path, world_to_json(world))


def load_world(path: str | Path) -> GridWorld:
    return world_from_json(read_json(path))


TRACE_FIXED_COLUMNS = ("episode", "epoch", "x", "y", "strategy", "outcome", "reward", "reached_goal")


def save_traces(traces: Iterable[EpisodeTrace], schema: Schema, path: str | Path) -> None:
    """Write decision records as CSV, one row per record.

    Observed world attributes get their own columns between y and strategy,
    in schema order, so the file is self-describing alongside its schema.
    """
    world_attrs = [a.name for a in schema.scoped("world")]
    header = list(TRACE_FIXED_COLUMNS[:4]) + world_attrs + list(TRACE_FIXED_COLUMNS[4:])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, trace in enumerate(traces):
            for rec in trace.records:
                row = [i, rec.epoch, rec.cell[0], rec.cell[1]]
                row += [format_cell(rec.observed.get(name)) for name in world_attrs]
                row += [rec.strategy, rec.outcome, repr(rec.reward), "true" if trace.reached_goal else "false"]
                writer.writerow(row)


def load_traces(path: str | Path, schema: Schema) -> list[EpisodeTrace]:
    world_attrs = [a.name for a in schema.scoped("world")]
    expected = list(TRACE_FIXED_COLUMNS[:4]) + world_attrs + list(TRACE_FIXED_COLUMNS[4:])
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputFormatError("UnreadableFile", f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != expected:
        raise InputFormatError("BadHeader", f"{path}: expected columns {expected}, got {rows[0] if rows else 'nothing'}")
    grouped: dict[int, list[DecisionRecord]] = {}
    goal_flags: dict[int, bool] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise InputFormatError("BadRow", f"{path} line {line_no}: expected {len(expected)} cells, got {len(row)}")
        try:
            episode = int(row[0])
            observed = {
                name: parse_cell(schema.attribute(name), row[4 + k], f"{path} line {line_no}")
                for k, name in enumerate(world_attrs)
            }
            base = 4 + len(world_attrs)
            rec = DecisionRecord(
                epoch=int(row[1]),
                cell=(int(row[2]), int(row[3])),
                observed=observed,
                strategy=row[base],
                outcome=row[base + 1],
                reward=float(row[base + 2]),
            )
            goal_flags[episode] = row[base + 3] == "true"
        except ValueError as exc:
            raise InputFormatError("BadRow", f"{path} line {line_no}: {exc}") from exc
        grouped.setdefault(episode, []).append(rec)
    return [
        EpisodeTrace(tuple(grouped[e]), goal_flags[e], len(grouped[e]))
        for e in sorted(grouped)
    ]


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return "" if value is None else str(value)


def parse_cell(attr: AttributeDef, text: str, where: str) -> Any:
    if attr.kind == "boolean":
        if text in ("true", "false"):
            return text == "true"
        raise InputFormatError("BadRow", f"{where}: {attr.name} must be true/false, got {text!r}")
    if attr.kind == "numeric":
        try:
            return float(text)
        except ValueError:
            raise InputFormatError("BadRow", f"{where}: {attr.name} must be numeric, got {text!r}") from None
    return text
