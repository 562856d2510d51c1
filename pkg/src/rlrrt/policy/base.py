"""Local planner policy interface and trivial scripted policies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

from rlrrt.env.dynamics import RobotAction, RobotKind, action_high, action_low
from rlrrt.env.observation import Observation

logger = logging.getLogger(__name__)


class PolicyKind(Enum):
    """Local planner families."""

    LEARNED = "learned"
    DWA = "dwa"
    DWA_NO_CLEARANCE = "dwa_no_clearance"
    CONSTANT = "constant"
    RANDOM = "random"

    def __repr__(self):
        return self.name

    def __str__(self):
        return repr(self)


class PolicyError(ValueError):
    """Raised when a policy is used with the wrong robot or capability."""


@runtime_checkable
class LocalPlannerPolicy(Protocol):
    """Maps an observation to a bounded action."""

    robot_kind: RobotKind
    kind: PolicyKind

    def act(self, observation: Observation) -> RobotAction: ...


@dataclass(slots=True)
class ConstantPolicy:
    """Emits the same action regardless of the observation."""

    robot_kind: RobotKind
    action: tuple[float, float] = (0.0, 0.0)
    kind: PolicyKind = PolicyKind.CONSTANT

    def act(self, observation: Observation) -> RobotAction:
        del observation
        return RobotAction(self.robot_kind, *self.action)


@dataclass(slots=True)
class RandomPolicy:
    """Uniform random actions over the robot's action box."""

    robot_kind: RobotKind
    seed: int = 0
    kind: PolicyKind = PolicyKind.RANDOM
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def act(self, observation: Observation) -> RobotAction:
        del observation
        low, high = action_low(self.robot_kind), action_high(self.robot_kind)
        return RobotAction(self.robot_kind, *self._rng.uniform(low, high))
