"""Dynamic window approach steering for the differential drive robot."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from rlrrt.env.dynamics import (
    MAX_SPEED,
    MAX_TURN_RATE,
    DiffDriveState,
    RobotAction,
    RobotKind,
    RobotState,
)
from rlrrt.env.observation import Observation
from rlrrt.env.world import LidarConfig
from rlrrt.policy.base import PolicyError, PolicyKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class DwaConfig:
    """Velocity sampling and scoring weights."""

    v_samples: int = 11
    omega_samples: int = 21
    min_speed: float = 0.0
    predict_time: float = 1.5
    sim_dt: float = 0.1
    heading_weight: float = 1.0
    velocity_weight: float = 0.5
    clearance_weight: float = 0.5
    clearance_cap: float = 1.5
    robot_radius: float = 0.3

    def __post_init__(self):
        if self.v_samples < 1 or self.omega_samples < 1:
            raise ValueError(f"{self.v_samples=} and {self.omega_samples=} must be >= 1")
        if self.predict_time < self.sim_dt or self.sim_dt <= 0:
            raise ValueError(f"{self.predict_time=} must cover at least one {self.sim_dt=}")
        if self.clearance_cap <= 0:
            raise ValueError(f"{self.clearance_cap=} must be positive")


@dataclass(frozen=True, slots=True)
class DwaCandidate:
    """One sampled (v, omega) pair and its score terms."""

    v: float
    omega: float
    heading: float
    velocity: float
    clearance: float
    min_clearance: float
    admissible: bool

    def score(self, cfg: DwaConfig, enable_clearance: bool = True) -> float:
        total = cfg.heading_weight * self.heading + cfg.velocity_weight * self.velocity
        if enable_clearance:
            total += cfg.clearance_weight * self.clearance
        return total


def obstacle_points(
    state: RobotState, scan: np.ndarray, lidar: LidarConfig
) -> np.ndarray:
    """Lidar hits (returns short of ``max_range``) as world-frame points."""
    scan = np.asarray(scan, dtype=float)
    angles = state.theta + lidar.beam_offsets()
    hit = scan < lidar.max_range - 1e-9
    r = scan[hit]
    return np.stack(
        [state.x + r * np.cos(angles[hit]), state.y + r * np.sin(angles[hit])], axis=1
    )


def predict_trajectories(
    state: DiffDriveState, v: np.ndarray, omega: np.ndarray, cfg: DwaConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Constant-command rollouts, shape ``(n_candidates, n_steps)``."""
    n_steps = round(cfg.predict_time / cfg.sim_dt)
    k = np.arange(n_steps + 1)

    thetas = state.theta + omega[:, None] * k[None, :] * cfg.sim_dt
    dx = v[:, None] * np.cos(thetas[:, :-1]) * cfg.sim_dt
    dy = v[:, None] * np.sin(thetas[:, :-1]) * cfg.sim_dt

    xs = state.x + np.cumsum(dx, axis=1)
    ys = state.y + np.cumsum(dy, axis=1)
    return xs, ys, thetas[:, 1:]


def score_window(
    state: RobotState,
    goal: tuple[float, float],
    scan: np.ndarray,
    cfg: DwaConfig | None = None,
    lidar: LidarConfig | None = None,
) -> list[DwaCandidate]:
    """Score every sampled command in the window."""
    cfg = cfg or DwaConfig()
    lidar = lidar or LidarConfig()

    if state.kind is not RobotKind.DIFF_DRIVE:
        raise PolicyError(f"DWA steers the differential drive only, got {state.kind}")

    vs = np.linspace(cfg.min_speed, MAX_SPEED, cfg.v_samples)
    omegas = np.linspace(-MAX_TURN_RATE, MAX_TURN_RATE, cfg.omega_samples)
    v_grid, omega_grid = (g.ravel() for g in np.meshgrid(vs, omegas, indexing="ij"))

    xs, ys, thetas = predict_trajectories(state, v_grid, omega_grid, cfg)

    to_goal = np.arctan2(goal[1] - ys[:, -1], goal[0] - xs[:, -1])
    error = np.abs(np.angle(np.exp(1j * (to_goal - thetas[:, -1]))))
    heading = 1.0 - error / math.pi

    points = obstacle_points(state, scan, lidar)
    if len(points):
        path = np.stack(
            [np.concatenate([np.full((len(xs), 1), state.x), xs], axis=1),
             np.concatenate([np.full((len(ys), 1), state.y), ys], axis=1)],
            axis=-1,
        )
        diff = path[:, :, None, :] - points[None, None, :, :]
        nearest = np.sqrt((diff**2).sum(axis=-1)).min(axis=(1, 2))
        min_clearance = nearest - cfg.robot_radius
    else:
        min_clearance = np.full(len(xs), np.inf)

    clearance = np.minimum(min_clearance, cfg.clearance_cap) / cfg.clearance_cap

    return [
        DwaCandidate(
            v=float(v_grid[i]),
            omega=float(omega_grid[i]),
            heading=float(heading[i]),
            velocity=float(v_grid[i] / MAX_SPEED),
            clearance=float(clearance[i]),
            min_clearance=float(min_clearance[i]),
            admissible=bool(min_clearance[i] > 0.0),
        )
        for i in range(len(v_grid))
    ]


def best_candidate(
    candidates: list[DwaCandidate], cfg: DwaConfig, enable_clearance: bool
) -> DwaCandidate | None:
    best, best_score = None, -math.inf
    for cand in candidates:
        if not cand.admissible:
            continue
        score = cand.score(cfg, enable_clearance)
        if score > best_score:
            best, best_score = cand, score
    return best


def dwa_act(
    state: RobotState,
    goal: tuple[float, float],
    scan: np.ndarray,
    enable_clearance: bool = True,
    cfg: DwaConfig | None = None,
    lidar: LidarConfig | None = None,
) -> RobotAction:
    """Best-scoring admissible command; zero velocity when every command collides."""
    cfg = cfg or DwaConfig()
    candidates = score_window(state, goal, scan, cfg, lidar)
    best = best_candidate(candidates, cfg, enable_clearance)

    if best is None:
        logger.debug("DWA: no admissible command at (%.2f, %.2f)", state.x, state.y)
        return RobotAction(RobotKind.DIFF_DRIVE, 0.0, 0.0)

    return RobotAction(RobotKind.DIFF_DRIVE, best.v, best.omega)


@dataclass(slots=True)
class DwaPolicy:
    """DWA as a local planner policy, working in the robot's body frame."""

    enable_clearance: bool = True
    cfg: DwaConfig = field(default_factory=DwaConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    robot_kind: RobotKind = RobotKind.DIFF_DRIVE

    def __post_init__(self):
        if self.robot_kind is not RobotKind.DIFF_DRIVE:
            raise PolicyError(f"DWA steers the differential drive only, got {self.robot_kind}")

    @property
    def kind(self) -> PolicyKind:
        return PolicyKind.DWA if self.enable_clearance else PolicyKind.DWA_NO_CLEARANCE

    def act(self, observation: Observation) -> RobotAction:
        v, omega = observation.velocity
        body = DiffDriveState(0.0, 0.0, 0.0, v, omega)
        return dwa_act(
            body,
            observation.rel_goal,
            observation.newest_scan,
            self.enable_clearance,
            self.cfg,
            self.lidar,
        )
