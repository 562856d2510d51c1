"""Planner results, run statistics, budgets and plan verification."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import (
    STATE_FIELDS,
    DynamicsParams,
    RobotAction,
    RobotKind,
    RobotState,
    propagate,
)
from rlrrt.env.world import GoalSpec, OccupancyGrid, point_free
from rlrrt.planner.tree import Node, Tree

logger = logging.getLogger(__name__)


class PlannerError(ValueError):
    """Raised when a planning query is malformed."""


class BudgetUnit(Enum):
    SECONDS = "seconds"
    ITERATIONS = "iterations"

    def __repr__(self):
        return self.name

    def __str__(self):
        return repr(self)


class Budget:
    """Wall-clock budget, or a planner-iteration budget when ``max_iterations`` is set."""

    def __init__(self, time_budget: float, max_iterations: int | None = None):
        if max_iterations is None and time_budget <= 0:
            raise PlannerError(f"{time_budget=} must be positive")
        if max_iterations is not None and max_iterations < 0:
            raise PlannerError(f"{max_iterations=} cannot be negative")

        self.time_budget = time_budget
        self.max_iterations = max_iterations
        self.started = time.perf_counter()

    @property
    def unit(self) -> BudgetUnit:
        return BudgetUnit.SECONDS if self.max_iterations is None else BudgetUnit.ITERATIONS

    def used(self, iterations: int) -> float:
        if self.max_iterations is not None:
            return float(iterations)
        return time.perf_counter() - self.started

    def exhausted(self, iterations: int) -> bool:
        if self.max_iterations is not None:
            return iterations >= self.max_iterations
        return self.used(iterations) >= self.time_budget


@dataclass(frozen=True, slots=True)
class Decision:
    """One sample's selection outcome, for tracing and ablations."""

    iteration: int
    sample: tuple[float, float]
    node_id: int
    ttr: float | None
    pruned: bool


@dataclass(slots=True)
class PlannerStats:
    iterations: int = 0
    samples: int = 0
    pruned: int = 0
    extensions: int = 0
    budget_used: float = 0.0
    time_to_first_solution: float | None = None
    unit: BudgetUnit = BudgetUnit.SECONDS
    tree_size: int = 1
    decisions: list[Decision] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "samples": self.samples,
            "pruned": self.pruned,
            "extensions": self.extensions,
            "budget_used": self.budget_used,
            "time_to_first_solution": self.time_to_first_solution,
            "unit": self.unit.value,
            "tree_size": self.tree_size,
        }


@dataclass(slots=True, eq=False)
class MotionPlan:
    """Goal-reaching chain of nodes from the root."""

    planner: str
    seed: int
    goal: GoalSpec
    nodes: list[Node]
    dt_policy: float
    stats: PlannerStats
    config: dict = field(default_factory=dict)
    tree: Tree | None = None

    success = True

    @property
    def robot_kind(self) -> RobotKind:
        return self.nodes[0].state.kind

    @property
    def finish_time(self) -> float:
        return self.nodes[-1].arrival_time

    @property
    def final_state(self) -> RobotState:
        return self.nodes[-1].state

    def actions(self) -> list[RobotAction]:
        return [a for node in self.nodes[1:] for a in node.action_log]

    def positions(self) -> list[tuple[float, float]]:
        """Root position then every ``dt_policy`` waypoint."""
        points = [self.nodes[0].position]
        for node in self.nodes[1:]:
            points.extend(node.path)
        return points

    def length(self) -> float:
        xy = np.array(self.positions())
        if len(xy) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))

    def to_dict(self) -> dict:
        names = STATE_FIELDS[self.robot_kind]
        return {
            "planner": self.planner,
            "seed": self.seed,
            "robot_kind": self.robot_kind.value,
            "goal": {"position": list(self.goal.position), "radius": self.goal.radius},
            "finish_time": self.finish_time,
            "dt_policy": self.dt_policy,
            "states": [
                {
                    "t": node.arrival_time,
                    **dict(zip(names, node.state.as_array().tolist())),
                }
                for node in self.nodes
            ],
            "actions": [a.as_array().tolist() for a in self.actions()],
            "positions": [list(p) for p in self.positions()],
            "stats": self.stats.to_dict(),
            "config": self.config,
        }

    def to_json(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


@dataclass(slots=True, eq=False)
class PlanFailure:
    """Budget ran out before the goal was connected."""

    planner: str
    seed: int
    goal: GoalSpec
    stats: PlannerStats
    reason: str = "budget exhausted"
    config: dict = field(default_factory=dict)
    tree: Tree | None = None

    success = False
    finish_time = None

    def to_dict(self) -> dict:
        return {
            "planner": self.planner,
            "seed": self.seed,
            "success": False,
            "reason": self.reason,
            "goal": {"position": list(self.goal.position), "radius": self.goal.radius},
            "stats": self.stats.to_dict(),
            "config": self.config,
        }

    def to_json(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


PlanResult = MotionPlan | PlanFailure


@dataclass(frozen=True, slots=True)
class PlanCheck:
    feasible: bool
    max_error: float
    steps_checked: int
    collision_step: int | None = None
    reaches_goal: bool = True


def verify_plan(
    plan: MotionPlan,
    grid: OccupancyGrid,
    dynamics: DynamicsParams | None = None,
    tolerance: float = 1e-9,
) -> PlanCheck:
    """Replay the action log from the root; check node agreement and collisions at every step."""
    dynamics = dynamics or DynamicsParams()

    state = plan.nodes[0].state
    max_error = 0.0
    step = 0
    for node in plan.nodes[1:]:
        for action in node.action_log:
            state = propagate(state, action, plan.dt_policy, dynamics)
            step += 1
            if not point_free(grid, (state.x, state.y), dynamics.robot_radius):
                logger.debug("Plan collides at step %d", step)
                return PlanCheck(False, max_error, step, collision_step=step)

        error = float(np.max(np.abs(state.as_array() - node.state.as_array())))
        max_error = max(max_error, error)

    final = plan.nodes[-1].state
    reaches = plan.goal.contains(final.x, final.y)
    feasible = max_error <= tolerance and reaches and math.isfinite(max_error)
    return PlanCheck(feasible, max_error, step, reaches_goal=reaches)
