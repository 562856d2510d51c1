"""Policy and estimator inputs: stacked lidar history plus goal and velocity."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from rlrrt.env.dynamics import (
    MAX_SPEED,
    MAX_STEER,
    MAX_TURN_RATE,
    RobotKind,
    RobotState,
)

logger = logging.getLogger(__name__)

N_FRAMES = 3
N_SCALARS = 5


class ObservationError(Exception):
    """Raised when an observation cannot be built or has the wrong shape."""


def observation_size(n_beams: int) -> int:
    return N_FRAMES * n_beams + N_SCALARS


class FrameStack:
    """Ring buffer of the last three scans, oldest first."""

    def __init__(self, frames=()):
        self._frames: deque[np.ndarray] = deque(maxlen=N_FRAMES)
        for frame in frames:
            self.push(frame)

    def __len__(self):
        return len(self._frames)

    def push(self, scan: np.ndarray):
        scan = np.asarray(scan, dtype=float).copy()
        scan.setflags(write=False)
        self._frames.append(scan)

    def frames(self) -> tuple[np.ndarray, ...]:
        """The three frames, padded with copies of the earliest scan."""
        if not self._frames:
            raise ObservationError("Frame stack is empty")

        padding = (self._frames[0],) * (N_FRAMES - len(self._frames))
        return padding + tuple(self._frames)

    def snapshot(self) -> tuple[np.ndarray, ...]:
        return tuple(self._frames)

    def copy(self) -> FrameStack:
        return FrameStack(self._frames)


@dataclass(frozen=True, slots=True, eq=False)
class Observation:
    """Immutable observation snapshot; ``vector`` has length ``3 * n_beams + 5``."""

    lidar_stack: np.ndarray
    rel_goal: tuple[float, float]
    velocity: tuple[float, float]
    orientation: float

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return bool(np.array_equal(self.vector, other.vector))

    __hash__ = None

    @property
    def n_beams(self) -> int:
        return self.lidar_stack.size // N_FRAMES

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.lidar_stack, self.rel_goal, self.velocity, [self.orientation]]
        )

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> Observation:
        vector = np.asarray(vector, dtype=float)
        if vector.ndim != 1 or (vector.size - N_SCALARS) % N_FRAMES:
            raise ObservationError(f"Invalid observation vector shape {vector.shape}")

        n = vector.size - N_SCALARS
        return cls(
            lidar_stack=vector[:n].copy(),
            rel_goal=(float(vector[n]), float(vector[n + 1])),
            velocity=(float(vector[n + 2]), float(vector[n + 3])),
            orientation=float(vector[n + 4]),
        )

    @property
    def newest_scan(self) -> np.ndarray:
        n = self.n_beams
        return self.lidar_stack[2 * n :]

    @property
    def goal_distance(self) -> float:
        return math.hypot(*self.rel_goal)


def to_body_frame(state: RobotState, point: tuple[float, float]) -> tuple[float, float]:
    dx, dy = point[0] - state.x, point[1] - state.y
    c, s = math.cos(state.theta), math.sin(state.theta)
    return c * dx + s * dy, -s * dx + c * dy


def make_observation(
    state: RobotState, goal: tuple[float, float], stack: FrameStack
) -> Observation:
    """Concatenate three scans with the body-frame goal, velocity and heading."""
    if not len(stack):
        raise ObservationError("Cannot observe with an empty frame stack")

    lidar = np.concatenate(stack.frames())
    lidar.setflags(write=False)

    return Observation(
        lidar_stack=lidar,
        rel_goal=to_body_frame(state, goal),
        velocity=state.velocity_slots(),
        orientation=state.theta,
    )


VELOCITY_SCALE: dict[RobotKind, tuple[float, float]] = {
    RobotKind.DIFF_DRIVE: (MAX_SPEED, MAX_TURN_RATE),
    RobotKind.CAR: (MAX_SPEED, MAX_STEER),
    RobotKind.ASTEROID: (MAX_SPEED, MAX_SPEED),
}


@dataclass(frozen=True, slots=True)
class ObservationScale:
    """Normalization constants; stored alongside network checkpoints."""

    max_range: float = 5.0
    position_scale: float = 10.0
    velocity_scale: tuple[float, float] = (MAX_SPEED, MAX_TURN_RATE)
    orientation_scale: float = math.pi

    @classmethod
    def for_robot(cls, kind: RobotKind, max_range: float, position_scale: float = 10.0):
        return cls(
            max_range=max_range,
            position_scale=position_scale,
            velocity_scale=VELOCITY_SCALE[kind],
        )

    def divisor(self, n_beams: int) -> np.ndarray:
        return np.concatenate(
            [
                np.full(N_FRAMES * n_beams, self.max_range),
                [self.position_scale, self.position_scale],
                self.velocity_scale,
                [self.orientation_scale],
            ]
        )


def normalize_observation(o: Observation | np.ndarray, cfg: ObservationScale) -> np.ndarray:
    """Scale ranges by ``max_range`` and positions by ``position_scale``.

    Accepts a single observation or a ``(batch, dim)`` array of raw vectors.
    """
    vector = o.vector if isinstance(o, Observation) else np.asarray(o, dtype=float)
    n_beams = (vector.shape[-1] - N_SCALARS) // N_FRAMES
    return vector / cfg.divisor(n_beams)


def denormalize_observation(vector: np.ndarray, cfg: ObservationScale) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    n_beams = (vector.shape[-1] - N_SCALARS) // N_FRAMES
    return vector * cfg.divisor(n_beams)
