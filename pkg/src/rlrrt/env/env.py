"""Gymnasium environment for obstacle-avoiding point-to-point navigation."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
from gymnasium import Env, spaces

from rlrrt.env.dynamics import (
    STATE_FIELDS,
    DynamicsParams,
    RobotKind,
    RobotState,
    action_high,
    action_low,
    clamp_action,
    propagate,
    state_at_rest,
)
from rlrrt.env.observation import (
    FrameStack,
    Observation,
    ObservationScale,
    make_observation,
    normalize_observation,
    observation_size,
)
from rlrrt.env.reward import DISPLACEMENT_LAGS, RewardWeights, compute_reward
from rlrrt.env.tabulate import to_markdown
from rlrrt.env.world import (
    GoalSpec,
    LidarConfig,
    OccupancyGrid,
    lidar_scan,
    point_free,
    sample_free_state,
    state_pose,
)

logger = logging.getLogger(__name__)


class Outcome(Enum):
    """How an episode ended."""

    REACHED = "reached"
    COLLIDED = "collided"
    TIMEOUT = "timeout"

    def __repr__(self):
        return self.name

    def __str__(self):
        return repr(self)


@dataclass(frozen=True, slots=True)
class EpisodeConfig:
    """Timing and goal sampling of a P2P episode."""

    dt_policy: float = 0.1
    max_episode_time: float = 20.0
    goal_radius: float = 0.5
    goal_sample_radius: float = 10.0

    def __post_init__(self):
        for name in ("dt_policy", "max_episode_time", "goal_radius", "goal_sample_radius"):
            value = getattr(self, name)
            if value <= 0:
                raise ValueError(f"{name}={value} must be positive")

    @property
    def max_steps(self) -> int:
        return round(self.max_episode_time / self.dt_policy)


def sample_goal_near(
    grid: OccupancyGrid,
    start: RobotState,
    radius: float,
    rng: np.random.Generator,
    robot_radius: float,
    min_distance: float = 0.0,
    max_attempts: int = 10_000,
) -> tuple[float, float]:
    """Uniform free position between ``min_distance`` and ``radius`` from the start."""
    for _ in range(max_attempts):
        r = radius * math.sqrt(rng.random())
        if r <= min_distance:
            continue
        phi = rng.uniform(-math.pi, math.pi)
        x, y = start.x + r * math.cos(phi), start.y + r * math.sin(phi)
        if point_free(grid, (x, y), robot_radius):
            return x, y

    logger.warning("No goal found within %.2f m of start, sampling anywhere", radius)
    state = sample_free_state(grid, start.kind, rng, robot_radius=robot_radius)
    return state.x, state.y


class raw_env(Env):
    """Single-robot P2P navigation with simulated lidar, for RL training and rollouts."""

    metadata = {"render_modes": ["ansi"], "name": "navigation_v0"}

    def __init__(
        self,
        grid: OccupancyGrid | None = None,
        robot_kind: RobotKind | str = RobotKind.DIFF_DRIVE,
        episode: EpisodeConfig | None = None,
        lidar: LidarConfig | None = None,
        dynamics: DynamicsParams | None = None,
        reward_weights: RewardWeights | None = None,
        render_mode: str | None = "ansi",
    ):
        super().__init__()

        self.robot_kind = RobotKind(robot_kind)
        self.grid = grid if grid is not None else OccupancyGrid.empty(200, 200, 0.1)
        self.episode = episode or EpisodeConfig()
        self.lidar = lidar or LidarConfig()
        self.dynamics = dynamics or DynamicsParams()
        self.reward_weights = reward_weights or RewardWeights.default(self.robot_kind)
        self.render_mode = render_mode

        if self.reward_weights.kind is not self.robot_kind:
            raise ValueError(
                f"{self.reward_weights.kind=} does not match {self.robot_kind=}"
            )

        self.scale = ObservationScale.for_robot(self.robot_kind, self.lidar.max_range)

        ### OBSERVATION SPACE ###

        n = self.lidar.n_beams
        size = observation_size(n)
        low = np.concatenate([np.zeros(3 * n), [-np.inf, -np.inf, -1.0, -1.0, -1.0]])
        high = np.concatenate([np.ones(3 * n), [np.inf, np.inf, 1.0, 1.0, 1.0]])
        self.observation_space = spaces.Box(low=low, high=high, shape=(size,), dtype=np.float64)

        ### ACTION SPACE ###

        self.action_space = spaces.Box(
            low=action_low(self.robot_kind),
            high=action_high(self.robot_kind),
            dtype=np.float64,
        )

        ### EPISODE STATE ###

        self.state: RobotState
        self.goal: GoalSpec
        self.stack: FrameStack
        self.history: deque[RobotState]
        self.n_steps: int = 0
        self.outcome: Outcome | None = None
        self.last_scan: np.ndarray
        self.episode_id = 0

    @property
    def elapsed(self) -> float:
        return self.n_steps * self.episode.dt_policy

    def observe(self) -> Observation:
        """Raw (unnormalized) observation of the current state toward the goal."""
        return make_observation(self.state, self.goal.position, self.stack)

    def _obs_info(self) -> tuple[np.ndarray, dict]:
        obs = self.observe()
        info = {"observation": obs, "state": self.state, "outcome": self.outcome}
        return normalize_observation(obs, self.scale), info

    def reset(self, seed: int | None = None, options: dict | None = None):
        """Start a new episode; ``options`` may carry ``start`` and ``goal``."""
        super().reset(seed=seed)
        options = dict(options or {})

        radius = self.dynamics.robot_radius

        start = options.pop("start", None)
        if start is None:
            sampled = sample_free_state(
                self.grid, self.robot_kind, self.np_random, robot_radius=radius
            )
            start = state_at_rest(self.robot_kind, sampled.x, sampled.y, sampled.theta)
        elif start.kind is not self.robot_kind:
            raise ValueError(f"{start.kind=} does not match {self.robot_kind=}")

        goal = options.pop("goal", None)
        if goal is None:
            goal = sample_goal_near(
                self.grid,
                start,
                self.episode.goal_sample_radius,
                self.np_random,
                radius,
                min_distance=self.episode.goal_radius,
            )
        if not isinstance(goal, GoalSpec):
            goal = GoalSpec(tuple(goal), self.episode.goal_radius)

        if options:
            logger.warning("Options passed to reset method, but not used: options=%s", options)

        self.episode_id += 1
        self.state = start
        self.goal = goal
        self.n_steps = 0
        self.history = deque(maxlen=max(DISPLACEMENT_LAGS))
        self.outcome = Outcome.REACHED if goal.contains(start.x, start.y) else None

        self.last_scan = lidar_scan(self.grid, state_pose(start), self.lidar, self.np_random)
        self.stack = FrameStack([self.last_scan])

        logger.debug(
            "Episode %d reset: start=(%.2f, %.2f) goal=(%.2f, %.2f)",
            self.episode_id,
            start.x,
            start.y,
            *goal.position,
        )
        return self._obs_info()

    def step(self, action):
        """Apply one action for ``dt_policy`` seconds."""
        if self.outcome is not None:
            raise RuntimeError(f"Episode already ended with {self.outcome}; call reset()")

        act = clamp_action(action, self.robot_kind)
        prev = self.state
        state = propagate(prev, act, self.episode.dt_policy, self.dynamics)

        self.n_steps += 1
        collided = not point_free(self.grid, (state.x, state.y), self.dynamics.robot_radius)

        if not collided:
            self.last_scan = lidar_scan(
                self.grid, state_pose(state), self.lidar, self.np_random
            )
            self.stack.push(self.last_scan)

        reward = compute_reward(
            list(self.history) + [prev],
            state,
            act,
            self.last_scan,
            self.goal,
            self.reward_weights,
            collided=collided,
        )

        self.history.append(prev)
        self.state = state

        if collided:
            self.outcome = Outcome.COLLIDED
        elif self.goal.contains(state.x, state.y):
            self.outcome = Outcome.REACHED
        elif self.n_steps >= self.episode.max_steps:
            self.outcome = Outcome.TIMEOUT

        terminated = self.outcome in {Outcome.COLLIDED, Outcome.REACHED}
        truncated = self.outcome is Outcome.TIMEOUT

        if self.outcome is not None:
            logger.debug(
                "Episode %d ended: %s after %d steps",
                self.episode_id,
                self.outcome,
                self.n_steps,
            )

        obs, info = self._obs_info()
        return obs, reward, terminated, truncated, info

    def render(self) -> str | None:
        """Render the map with the robot (R) and goal (G) as text."""

        if self.render_mode is None:
            logger.warning(
                "You are calling render method without specifying any render mode."
            )
            return None

        if self.render_mode != "ansi":
            raise ValueError(f"Unsupported render mode: {self.render_mode}")

        marks = {}
        if self.grid.inside(*self.goal.position):
            marks[self.grid.cell_of(*self.goal.position)] = "G"
        if self.grid.inside(self.state.x, self.state.y):
            marks[self.grid.cell_of(self.state.x, self.state.y)] = "R"

        out = f"\nStep {self.n_steps} - t={self.elapsed:.1f}s - {self.outcome}\n\n"
        out += self.grid.to_ascii(marks)

        row = {
            name: f"{value:.3f}"
            for name, value in zip(STATE_FIELDS[self.robot_kind], self.state.as_array())
        }
        out += f"\n\n{to_markdown([row])}\n"
        return out

    def close(self):
        """Clean up environment resources."""


def env(*args, **kwargs):
    """P2P navigation environment (equal to raw_env)."""
    return raw_env(*args, **kwargs)
