"""Robot models, bounded actions and fixed-step propagation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import ClassVar

import numpy as np

logger = logging.getLogger(__name__)


MAX_SPEED = 1.0
MAX_TURN_RATE = 2.0
MAX_STEER = math.pi / 6
MAX_STEER_RATE = 1.0


class RobotKind(Enum):
    """Supported robot dynamics."""

    DIFF_DRIVE = "diff_drive"
    CAR = "car"
    ASTEROID = "asteroid"

    def __repr__(self):
        return self.name

    def __str__(self):
        return repr(self)


class DynamicsError(ValueError):
    """Raised on invalid propagation requests."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


@dataclass(frozen=True, slots=True)
class DynamicsParams:
    """Physical constants shared by the robot models."""

    kappa: float = 1.0
    wheelbase: float = 0.8
    dt_integrate: float = 0.01
    robot_radius: float = 0.3

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"{self.kappa=} must be positive")
        if self.wheelbase <= 0:
            raise ValueError(f"{self.wheelbase=} must be positive")
        if self.dt_integrate <= 0:
            raise ValueError(f"{self.dt_integrate=} must be positive")
        if self.robot_radius < 0:
            raise ValueError(f"{self.robot_radius=} cannot be negative")


@dataclass(frozen=True, slots=True)
class DiffDriveState:
    """Differential drive pose with commanded velocities."""

    kind: ClassVar[RobotKind] = RobotKind.DIFF_DRIVE

    x: float
    y: float
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0

    @property
    def speed(self) -> float:
        return abs(self.v)

    def velocity_slots(self) -> tuple[float, float]:
        return self.v, self.omega

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.omega])


@dataclass(frozen=True, slots=True)
class CarState:
    """Kinematic car with inertia on the forward speed."""

    kind: ClassVar[RobotKind] = RobotKind.CAR

    x: float
    y: float
    theta: float = 0.0
    v: float = 0.0
    steer: float = 0.0

    @property
    def speed(self) -> float:
        return abs(self.v)

    def velocity_slots(self) -> tuple[float, float]:
        return self.v, self.steer

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.steer])


@dataclass(frozen=True, slots=True)
class AsteroidState:
    """Thruster-driven point with first order drag."""

    kind: ClassVar[RobotKind] = RobotKind.ASTEROID

    x: float
    y: float
    xdot: float = 0.0
    ydot: float = 0.0
    theta: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.xdot, self.ydot)

    def velocity_slots(self) -> tuple[float, float]:
        # body frame
        c, s = math.cos(self.theta), math.sin(self.theta)
        return c * self.xdot + s * self.ydot, -s * self.xdot + c * self.ydot

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.xdot, self.ydot, self.theta])


RobotState = DiffDriveState | CarState | AsteroidState

STATE_TYPES: dict[RobotKind, type] = {
    RobotKind.DIFF_DRIVE: DiffDriveState,
    RobotKind.CAR: CarState,
    RobotKind.ASTEROID: AsteroidState,
}

STATE_FIELDS: dict[RobotKind, tuple[str, ...]] = {
    RobotKind.DIFF_DRIVE: ("x", "y", "theta", "v", "omega"),
    RobotKind.CAR: ("x", "y", "theta", "v", "steer"),
    RobotKind.ASTEROID: ("x", "y", "xdot", "ydot", "theta"),
}


def state_at_rest(kind: RobotKind, x: float, y: float, theta: float = 0.0):
    """Create a zero-velocity state of the given kind."""
    return STATE_TYPES[kind](x=x, y=y, theta=theta)


def state_from_array(kind: RobotKind, values) -> RobotState:
    """Inverse of ``as_array``."""
    return STATE_TYPES[kind](*(float(v) for v in values))


def with_position(state: RobotState, x: float, y: float) -> RobotState:
    """Copy a state with a new planar position."""
    return replace(state, x=x, y=y)


ACTION_BOUNDS: dict[RobotKind, tuple[tuple[float, float], tuple[float, float]]] = {
    RobotKind.DIFF_DRIVE: ((-MAX_SPEED, MAX_SPEED), (-MAX_TURN_RATE, MAX_TURN_RATE)),
    RobotKind.CAR: ((-1.0, 1.0), (-MAX_STEER_RATE, MAX_STEER_RATE)),
    RobotKind.ASTEROID: ((-0.5, 1.0), (-0.5, 0.5)),
}

ACTION_NAMES: dict[RobotKind, tuple[str, str]] = {
    RobotKind.DIFF_DRIVE: ("v_cmd", "omega_cmd"),
    RobotKind.CAR: ("accel", "steer_rate"),
    RobotKind.ASTEROID: ("a_thrust", "a_theta"),
}


def action_low(kind: RobotKind) -> np.ndarray:
    return np.array([lo for lo, _ in ACTION_BOUNDS[kind]])


def action_high(kind: RobotKind) -> np.ndarray:
    return np.array([hi for _, hi in ACTION_BOUNDS[kind]])


def _clip(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


@dataclass(frozen=True, slots=True)
class RobotAction:
    """Two-component control, clamped to the robot's action box on construction."""

    kind: RobotKind
    u0: float = 0.0
    u1: float = 0.0

    def __post_init__(self):
        (lo0, hi0), (lo1, hi1) = ACTION_BOUNDS[self.kind]
        object.__setattr__(self, "u0", _clip(float(self.u0), lo0, hi0))
        object.__setattr__(self, "u1", _clip(float(self.u1), lo1, hi1))

    def as_array(self) -> np.ndarray:
        return np.array([self.u0, self.u1])

    def __repr__(self):
        n0, n1 = ACTION_NAMES[self.kind]
        return f"{self.kind.name}({n0}={self.u0:.4g}, {n1}={self.u1:.4g})"


def clamp_action(raw, kind: RobotKind) -> RobotAction:
    """Componentwise clamp of a raw 2-vector to the robot's action box."""
    u0, u1 = (float(v) for v in raw)
    return RobotAction(kind, u0, u1)


def _step_diff_drive(s: DiffDriveState, a: RobotAction, dt: float, _):
    v = _clip(a.u0, -MAX_SPEED, MAX_SPEED)
    omega = _clip(a.u1, -MAX_TURN_RATE, MAX_TURN_RATE)
    return DiffDriveState(
        x=s.x + v * math.cos(s.theta) * dt,
        y=s.y + v * math.sin(s.theta) * dt,
        theta=wrap_angle(s.theta + omega * dt),
        v=v,
        omega=omega,
    )


def _step_car(s: CarState, a: RobotAction, dt: float, params: DynamicsParams):
    v = _clip(s.v + a.u0 * dt, 0.0, MAX_SPEED)
    steer = _clip(s.steer + a.u1 * dt, -MAX_STEER, MAX_STEER)
    return CarState(
        x=s.x + v * math.cos(s.theta) * dt,
        y=s.y + v * math.sin(s.theta) * dt,
        theta=wrap_angle(s.theta + v / params.wheelbase * math.tan(steer) * dt),
        v=v,
        steer=steer,
    )


def _step_asteroid(s: AsteroidState, a: RobotAction, dt: float, params: DynamicsParams):
    # drag solved exactly over the step, thrust held constant
    decay = math.exp(-params.kappa * dt)
    gain = (1.0 - decay) / params.kappa
    xdot = s.xdot * decay + a.u0 * math.cos(s.theta) * gain
    ydot = s.ydot * decay + a.u0 * math.sin(s.theta) * gain

    speed = math.hypot(xdot, ydot)
    if speed > MAX_SPEED:
        xdot *= MAX_SPEED / speed
        ydot *= MAX_SPEED / speed

    return AsteroidState(
        x=s.x + xdot * dt,
        y=s.y + ydot * dt,
        xdot=xdot,
        ydot=ydot,
        theta=wrap_angle(s.theta + a.u1 * dt),
    )


_STEPPERS = {
    RobotKind.DIFF_DRIVE: _step_diff_drive,
    RobotKind.CAR: _step_car,
    RobotKind.ASTEROID: _step_asteroid,
}


def step_count(duration: float, dt: float) -> int:
    """Number of integration steps in ``duration``; it must be a multiple of ``dt``."""
    if duration <= 0:
        raise DynamicsError(f"{duration=} must be positive")

    n = round(duration / dt)
    if n < 1 or abs(n * dt - duration) > 1e-9 * max(1.0, duration):
        raise DynamicsError(f"{duration=} is not a multiple of {dt=}")
    return n


def propagate(
    state: RobotState,
    action: RobotAction,
    duration: float,
    params: DynamicsParams | None = None,
) -> RobotState:
    """Integrate the robot's ODEs under a constant action for ``duration`` seconds."""
    params = params or DynamicsParams()

    if action.kind is not state.kind:
        raise DynamicsError(f"{action.kind=} does not match {state.kind=}")

    n = step_count(duration, params.dt_integrate)
    stepper = _STEPPERS[state.kind]

    dt = params.dt_integrate
    for _ in range(n):
        state = stepper(state, action, dt, params)

    return state


def state_distance_euclidean(a: RobotState, b: RobotState) -> float:
    """Planar distance between two states of the same robot kind."""
    if a.kind is not b.kind:
        raise DynamicsError(f"Cannot compare {a.kind} with {b.kind}")
    return math.hypot(a.x - b.x, a.y - b.y)
