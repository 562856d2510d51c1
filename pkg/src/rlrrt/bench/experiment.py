"""Seeded planner trials and their CSV records."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import DynamicsParams, RobotKind, RobotState, state_at_rest
from rlrrt.env.env import sample_goal_near
from rlrrt.env.world import (
    GoalSpec,
    LidarConfig,
    OccupancyGrid,
    load_map,
    point_free,
    sample_free_state,
)
from rlrrt.estimator import HORIZONS, ReachabilityEstimator
from rlrrt.planner.plan import PlanResult, verify_plan
from rlrrt.planner.rrt import PlannerConfig, rl_rrt, rl_rrt_euclidean, rrt_steer_plan
from rlrrt.planner.sst import SstConfig, sst_plan
from rlrrt.policy.actor_critic import ActorCriticPolicy
from rlrrt.policy.base import ConstantPolicy, LocalPlannerPolicy, RandomPolicy
from rlrrt.policy.dwa import DwaPolicy

logger = logging.getLogger(__name__)

PLANNERS = ("rl_rrt", "rl_rrt_e", "sst", "rrt_dw", "rrt_s")


class ArtifactError(Exception):
    """Raised when a map or checkpoint an experiment needs is missing."""


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """Planner comparison on one map; trial ``i`` is seeded with ``seed_base + i``."""

    map_path: str = "maps/office.map"
    robot_kind: RobotKind = RobotKind.DIFF_DRIVE
    planners: tuple[str, ...] = ("rl_rrt", "sst")
    trials: int = 50
    budgets: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0)
    budget_mode: str = "seconds"
    start: tuple[float, ...] | None = None
    goal: tuple[float, ...] | None = None
    min_goal_distance: float = 5.0
    goal_radius: float = 0.5
    policy: str = "dwa"
    estimator_path: str | None = None
    seed_base: int = 0

    def __post_init__(self):
        object.__setattr__(self, "robot_kind", RobotKind(self.robot_kind))
        if self.trials < 1:
            raise ValueError(f"{self.trials=} must be at least 1")
        if not self.budgets or list(self.budgets) != sorted(self.budgets):
            raise ValueError(f"{self.budgets=} must be non-empty and ascending")
        if self.budget_mode not in {"seconds", "iterations"}:
            raise ValueError(f"{self.budget_mode=} must be 'seconds' or 'iterations'")
        unknown = set(self.planners) - set(PLANNERS)
        if unknown:
            raise ValueError(f"Unknown planners {sorted(unknown)}; choose from {PLANNERS}")

    @property
    def max_budget(self) -> float:
        return self.budgets[-1]


@dataclass(frozen=True, slots=True)
class TrialRecord:
    planner: str
    seed: int
    success: bool
    time_to_first_solution: float | None
    unit: str
    finish_time: float | None
    tree_size: int
    samples: int
    pruned: int

    def __post_init__(self):
        if self.success and self.finish_time is None:
            raise ValueError("A successful trial needs a finish time")


def resolve_policy(
    spec: str, robot_kind: RobotKind, lidar: LidarConfig, seed: int = 0
) -> LocalPlannerPolicy:
    """``dwa``, ``dwa_no_clearance``, ``zero``, ``random`` or a checkpoint directory."""
    robot_kind = RobotKind(robot_kind)
    match spec:
        case "dwa":
            return DwaPolicy(True, lidar=lidar, robot_kind=robot_kind)
        case "dwa_no_clearance":
            return DwaPolicy(False, lidar=lidar, robot_kind=robot_kind)
        case "zero":
            return ConstantPolicy(robot_kind)
        case "random":
            return RandomPolicy(robot_kind, seed)

    path = Path(spec)
    if not (path / "actor.npz").exists():
        raise ArtifactError(f"Policy checkpoint not found: {path}")

    policy = ActorCriticPolicy.load(path)
    if policy.robot_kind is not robot_kind:
        raise ArtifactError(f"{path} holds a {policy.robot_kind} policy, not {robot_kind}")
    return policy


def check_artifacts(cfg: ExperimentConfig):
    if not Path(cfg.map_path).exists():
        raise ArtifactError(f"Map not found: {cfg.map_path}")
    if "rl_rrt" in cfg.planners:
        if cfg.estimator_path is None:
            raise ArtifactError("rl_rrt needs estimator_path")
        if not Path(cfg.estimator_path).with_suffix(".npz").exists():
            raise ArtifactError(f"Estimator not found: {cfg.estimator_path}")
    if cfg.policy not in {"dwa", "dwa_no_clearance", "zero", "random"}:
        if not (Path(cfg.policy) / "actor.npz").exists():
            raise ArtifactError(f"Policy checkpoint not found: {cfg.policy}")


def sample_query(
    grid: OccupancyGrid,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    robot_radius: float,
) -> tuple[RobotState, GoalSpec]:
    """The configured start and goal, or a random pair at least ``min_goal_distance`` apart."""
    if cfg.start is not None:
        start = state_at_rest(cfg.robot_kind, *cfg.start)
    else:
        sampled = sample_free_state(grid, cfg.robot_kind, rng, robot_radius=robot_radius)
        start = state_at_rest(cfg.robot_kind, sampled.x, sampled.y, sampled.theta)

    if cfg.goal is not None:
        goal = tuple(cfg.goal[:2])
    else:
        width, height = grid.extent
        goal = sample_goal_near(
            grid,
            start,
            math.hypot(width, height),
            rng,
            robot_radius,
            min_distance=cfg.min_goal_distance,
        )
    return start, GoalSpec(goal, cfg.goal_radius)


def run_trial(
    planner: str,
    grid: OccupancyGrid,
    start: RobotState,
    goal: GoalSpec,
    cfg: ExperimentConfig,
    seed: int,
    rng: np.random.Generator,
    policy: LocalPlannerPolicy,
    estimator: ReachabilityEstimator | None,
    lidar: LidarConfig,
    dynamics: DynamicsParams,
) -> PlanResult:
    iterations = int(cfg.max_budget) if cfg.budget_mode == "iterations" else None
    horizon = estimator.t_horizon if estimator is not None else HORIZONS[cfg.robot_kind]

    if planner == "sst":
        sst_cfg = SstConfig(
            goal_radius=cfg.goal_radius,
            time_budget=cfg.max_budget,
            max_iterations=iterations,
            stop_at_first_solution=False,
            seed=seed,
        )
        return sst_plan(grid, start, goal, cfg.robot_kind, sst_cfg, rng, dynamics)

    plan_cfg = PlannerConfig(
        ttr_threshold=horizon,
        t_max_extend=horizon,
        time_budget=cfg.max_budget,
        max_iterations=iterations,
        goal_radius=cfg.goal_radius,
        seed=seed,
    )
    match planner:
        case "rl_rrt":
            return rl_rrt(grid, start, goal, policy, estimator, plan_cfg, rng, lidar, dynamics)
        case "rl_rrt_e":
            return rl_rrt_euclidean(grid, start, goal, policy, plan_cfg, rng, lidar, dynamics)
        case "rrt_dw":
            return rrt_steer_plan(grid, start, goal, True, plan_cfg, rng, lidar, dynamics)
        case "rrt_s":
            return rrt_steer_plan(grid, start, goal, False, plan_cfg, rng, lidar, dynamics)
    raise ValueError(f"Unknown planner {planner!r}")


def record_of(planner: str, seed: int, result: PlanResult, feasible: bool = True) -> TrialRecord:
    """Trial row; a plan that fails replay is recorded as a failure."""
    stats = result.stats
    success = result.success and feasible
    return TrialRecord(
        planner=planner,
        seed=seed,
        success=success,
        time_to_first_solution=stats.time_to_first_solution if success else None,
        unit=stats.unit.value,
        finish_time=result.finish_time if success else None,
        tree_size=stats.tree_size,
        samples=stats.samples,
        pruned=stats.pruned,
    )


def run_experiment(
    cfg: ExperimentConfig,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
    out_csv: Path | str | None = None,
) -> list[TrialRecord]:
    """Every planner on every seeded query; planners share the query of a given seed."""
    lidar = lidar or LidarConfig()
    dynamics = dynamics or DynamicsParams()

    check_artifacts(cfg)
    grid = load_map(cfg.map_path)
    estimator = (
        ReachabilityEstimator.load(cfg.estimator_path) if cfg.estimator_path else None
    )
    if estimator is not None and estimator.robot_kind is not cfg.robot_kind:
        raise ArtifactError(f"Estimator is for {estimator.robot_kind}, not {cfg.robot_kind}")

    records = []
    for planner in cfg.planners:
        for i in range(cfg.trials):
            seed = cfg.seed_base + i
            rng = np.random.default_rng(seed)
            start, goal = sample_query(grid, cfg, rng, dynamics.robot_radius)
            if not point_free(grid, (start.x, start.y), dynamics.robot_radius):
                raise ArtifactError(f"Configured start {cfg.start} is in collision")

            policy = resolve_policy(cfg.policy, cfg.robot_kind, lidar, seed)
            result = run_trial(
                planner, grid, start, goal, cfg, seed, rng, policy, estimator, lidar, dynamics
            )

            feasible = True
            if result.success:
                check = verify_plan(result, grid, dynamics)
                feasible = check.feasible
                if not feasible:
                    logger.error("%s seed %d: plan failed replay: %s", planner, seed, check)

            records.append(record_of(planner, seed, result, feasible))
            logger.debug("%s seed %d: success=%s", planner, seed, records[-1].success)

        solved = sum(r.success for r in records if r.planner == planner)
        logger.info("%s: %d/%d trials solved", planner, solved, cfg.trials)

    if out_csv is not None:
        write_records(records, out_csv)
    return records


RECORD_FIELDS = [f.name for f in fields(TrialRecord)]


def write_records(records: list[TrialRecord], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        writer.writeheader()
        for record in records:
            row = asdict(record)
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return path


def _optional_float(value: str) -> float | None:
    return None if value == "" else float(value)


def read_records(path: Path | str) -> list[TrialRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            TrialRecord(
                planner=row["planner"],
                seed=int(row["seed"]),
                success=row["success"] == "True",
                time_to_first_solution=_optional_float(row["time_to_first_solution"]),
                unit=row["unit"],
                finish_time=_optional_float(row["finish_time"]),
                tree_size=int(row["tree_size"]),
                samples=int(row["samples"]),
                pruned=int(row["pruned"]),
            )
            for row in csv.DictReader(fh)
        ]
