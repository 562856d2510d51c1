"""Closed-loop execution of a policy from a start state toward a goal."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import (
    ACTION_NAMES,
    STATE_FIELDS,
    DynamicsParams,
    RobotAction,
    RobotKind,
    RobotState,
    state_at_rest,
)
from rlrrt.env.env import EpisodeConfig, Outcome, raw_env
from rlrrt.env.observation import Observation
from rlrrt.env.reward import RewardWeights
from rlrrt.env.world import (
    GoalSpec,
    LidarConfig,
    OccupancyGrid,
    point_free,
    sample_free_state,
)
from rlrrt.policy.base import LocalPlannerPolicy

logger = logging.getLogger(__name__)


class RolloutError(ValueError):
    """Raised when a rollout cannot start."""


@dataclass(slots=True, eq=False)
class Trajectory:
    """States and observations at every step (start included), actions and rewards between them."""

    robot_kind: RobotKind
    goal: GoalSpec
    dt: float
    states: list[RobotState] = field(default_factory=list)
    observations: list[Observation] = field(default_factory=list)
    actions: list[RobotAction] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    outcome: Outcome | None = None

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def times(self) -> list[float]:
        return [i * self.dt for i in range(len(self.states))]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def reached(self) -> bool:
        return self.outcome is Outcome.REACHED

    @property
    def final_state(self) -> RobotState:
        return self.states[-1]

    def rows(self) -> list[dict]:
        """One row per recorded state; the last row has no action or reward."""
        state_names = STATE_FIELDS[self.robot_kind]
        action_names = ACTION_NAMES[self.robot_kind]

        rows = []
        for i, (t, state) in enumerate(zip(self.times, self.states)):
            row = {"t": round(t, 9)}
            row.update(zip(state_names, state.as_array().tolist()))
            if i < self.n_steps:
                row.update(zip(action_names, self.actions[i].as_array().tolist()))
                row["reward"] = self.rewards[i]
            else:
                row.update({name: "" for name in action_names})
                row["reward"] = ""
            rows.append(row)
        return rows

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        rows = self.rows()
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

        logger.debug("Wrote %d trajectory rows to %s", len(rows), path)
        return path


def rollout(
    policy: LocalPlannerPolicy,
    grid: OccupancyGrid,
    start: RobotState,
    goal: GoalSpec | tuple[float, float],
    cfg: EpisodeConfig | None = None,
    rng: np.random.Generator | None = None,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
    weights: RewardWeights | None = None,
) -> Trajectory:
    """Drive ``policy`` every ``dt_policy`` until the goal, a collision or the time limit."""
    cfg = cfg or EpisodeConfig()
    dynamics = dynamics or DynamicsParams()
    rng = rng if rng is not None else np.random.default_rng()

    if policy.robot_kind is not start.kind:
        raise RolloutError(f"{policy.robot_kind=} does not match {start.kind=}")

    if not point_free(grid, (start.x, start.y), dynamics.robot_radius):
        logger.error("Rollout start (%.2f, %.2f) is in collision", start.x, start.y)
        raise RolloutError(f"Start ({start.x:.3f}, {start.y:.3f}) is in collision")

    if not isinstance(goal, GoalSpec):
        goal = GoalSpec(tuple(goal), cfg.goal_radius)

    env = raw_env(grid, start.kind, cfg, lidar, dynamics, weights, render_mode=None)
    _, info = env.reset(
        seed=int(rng.integers(2**32)), options={"start": start, "goal": goal}
    )

    traj = Trajectory(start.kind, goal, cfg.dt_policy)
    traj.states.append(info["state"])
    traj.observations.append(info["observation"])

    while env.outcome is None:
        action = policy.act(info["observation"])
        _, reward, _, _, info = env.step(action.as_array())

        traj.actions.append(action)
        traj.rewards.append(float(reward))
        traj.states.append(info["state"])
        traj.observations.append(info["observation"])

    traj.outcome = env.outcome
    env.close()

    logger.debug(
        "Rollout of %s ended %s after %d steps", policy.kind, traj.outcome, traj.n_steps
    )
    return traj


def sample_pair_at_distance(
    grid: OccupancyGrid,
    robot_kind: RobotKind,
    low: float,
    high: float,
    rng: np.random.Generator,
    robot_radius: float,
    max_attempts: int = 1_000,
) -> tuple[RobotState, tuple[float, float]] | None:
    """Free start at rest and a free goal whose distance falls in ``[low, high)``."""
    for _ in range(max_attempts):
        sampled = sample_free_state(grid, robot_kind, rng, robot_radius=robot_radius)
        start = state_at_rest(robot_kind, sampled.x, sampled.y, sampled.theta)
        r = rng.uniform(low, high)
        phi = rng.uniform(-math.pi, math.pi)
        goal = (start.x + r * math.cos(phi), start.y + r * math.sin(phi))
        if point_free(grid, goal, robot_radius):
            return start, goal
    return None


def count_reached(
    policy: LocalPlannerPolicy,
    grid: OccupancyGrid,
    low: float,
    high: float,
    trials: int,
    rng: np.random.Generator,
    cfg: EpisodeConfig | None = None,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> tuple[int, int]:
    """Reached and attempted rollouts over start/goal pairs ``[low, high)`` apart."""
    cfg = cfg or EpisodeConfig()
    dynamics = dynamics or DynamicsParams()

    reached = attempted = 0
    for _ in range(trials):
        pair = sample_pair_at_distance(
            grid, policy.robot_kind, low, high, rng, dynamics.robot_radius
        )
        if pair is None:
            logger.warning("No start/goal pair found in [%.2f, %.2f)", low, high)
            break
        start, goal = pair
        traj = rollout(
            policy, grid, start, GoalSpec(goal, cfg.goal_radius), cfg, rng, lidar, dynamics
        )
        attempted += 1
        reached += traj.reached
    return reached, attempted
