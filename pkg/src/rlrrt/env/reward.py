"""Per-robot reward features and their linear weighting."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from rlrrt.env.dynamics import RobotAction, RobotKind, RobotState
from rlrrt.env.world import GoalSpec

logger = logging.getLogger(__name__)

CLEARANCE_SPEED_THRESHOLD = 0.25
DISPLACEMENT_LAGS = (3, 6, 9)

REWARD_FEATURES: dict[RobotKind, tuple[str, ...]] = {
    RobotKind.ASTEROID: (
        "goal",
        "goal_dist",
        "collision",
        "clearance",
        "speed",
        "step",
        "disp",
    ),
    RobotKind.DIFF_DRIVE: (
        "goal",
        "goal_dist",
        "collision",
        "clearance",
        "step",
        "turning",
    ),
    RobotKind.CAR: ("goal", "goal_prog", "collision", "step", "backward"),
}

DEFAULT_WEIGHTS: dict[RobotKind, dict[str, float]] = {
    RobotKind.ASTEROID: {
        "goal": 10.0,
        "goal_dist": 0.05,
        "collision": 10.0,
        "clearance": 0.02,
        "speed": -0.2,
        "step": -0.05,
        "disp": 0.05,
    },
    RobotKind.DIFF_DRIVE: {
        "goal": 10.0,
        "goal_dist": 0.05,
        "collision": 10.0,
        "clearance": 0.02,
        "step": -0.05,
        "turning": 0.02,
    },
    RobotKind.CAR: {
        "goal": 10.0,
        "goal_prog": 5.0,
        "collision": 10.0,
        "step": -0.05,
        "backward": 0.5,
    },
}


@dataclass(frozen=True, slots=True)
class RewardWeights:
    """Weight vector over a robot's reward features, in ``REWARD_FEATURES`` order."""

    kind: RobotKind
    theta: tuple[float, ...]

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        expected = len(REWARD_FEATURES[self.kind])
        if len(theta) != expected:
            raise ValueError(f"{self.kind} expects {expected} weights, got {len(theta)}")
        if not all(math.isfinite(t) for t in theta):
            raise ValueError(f"Reward weights must be finite: {theta}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def default(cls, kind: RobotKind) -> RewardWeights:
        weights = DEFAULT_WEIGHTS[kind]
        return cls(kind, tuple(weights[name] for name in REWARD_FEATURES[kind]))

    @classmethod
    def one_hot(cls, kind: RobotKind, feature: str) -> RewardWeights:
        names = REWARD_FEATURES[kind]
        if feature not in names:
            raise ValueError(f"{feature=} is not a {kind} reward feature")
        return cls(kind, tuple(float(name == feature) for name in names))

    def __add__(self, other: RewardWeights) -> RewardWeights:
        if other.kind is not self.kind:
            raise ValueError(f"Cannot add {self.kind} and {other.kind} weights")
        return RewardWeights(self.kind, tuple(a + b for a, b in zip(self.theta, other.theta)))

    def as_array(self) -> np.ndarray:
        return np.array(self.theta)


def reward_features(
    prev_states: Sequence[RobotState],
    state: RobotState,
    action: RobotAction,
    scan: np.ndarray,
    goal: GoalSpec,
    *,
    collided: bool = False,
) -> dict[str, float]:
    """Feature values for one step; ``prev_states`` is oldest first."""
    del action  # features depend on the resulting state only

    goal_distance = goal.distance(state.x, state.y)
    clearance = float(np.min(scan)) if len(scan) else math.inf

    features = {
        "goal": float(goal.contains(state.x, state.y) and not collided),
        "goal_dist": -goal_distance,
        "collision": -1.0 if collided else 0.0,
        "clearance": clearance,
        "step": 1.0,
    }

    if state.kind is RobotKind.ASTEROID:
        features["speed"] = state.speed if clearance < CLEARANCE_SPEED_THRESHOLD else 0.0
        features["disp"] = sum(
            math.hypot(state.x - prev_states[-lag].x, state.y - prev_states[-lag].y)
            for lag in DISPLACEMENT_LAGS
            if len(prev_states) >= lag
        )

    elif state.kind is RobotKind.DIFF_DRIVE:
        features["turning"] = -abs(state.omega)

    elif state.kind is RobotKind.CAR:
        if prev_states:
            prev = prev_states[-1]
            features["goal_prog"] = goal.distance(prev.x, prev.y) - goal_distance
        else:
            features["goal_prog"] = 0.0
        features["backward"] = -max(0.0, -state.v)

    return {name: features[name] for name in REWARD_FEATURES[state.kind]}


def compute_reward(
    prev_states: Sequence[RobotState],
    state: RobotState,
    action: RobotAction,
    scan: np.ndarray,
    goal: GoalSpec,
    weights: RewardWeights,
    *,
    collided: bool = False,
) -> float:
    """Linear reward ``theta . features``."""
    if weights.kind is not state.kind:
        raise ValueError(f"{weights.kind=} does not match {state.kind=}")

    features = reward_features(prev_states, state, action, scan, goal, collided=collided)
    return float(np.dot(weights.as_array(), list(features.values())))
