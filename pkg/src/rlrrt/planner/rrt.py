"""RL-RRT and its tree-growing relatives: Euclidean RL-RRT and DWA-steered RRT."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np

from rlrrt.env.dynamics import DynamicsParams, RobotKind, RobotState, propagate
from rlrrt.env.observation import FrameStack, make_observation
from rlrrt.env.world import (
    GoalSpec,
    LidarConfig,
    OccupancyGrid,
    lidar_scan,
    point_free,
    sample_free_state,
    state_pose,
)
from rlrrt.estimator import avg_ttr
from rlrrt.planner.plan import (
    Budget,
    Decision,
    MotionPlan,
    PlanFailure,
    PlannerError,
    PlannerStats,
    PlanResult,
)
from rlrrt.planner.tree import Node, Tree
from rlrrt.policy.base import LocalPlannerPolicy
from rlrrt.policy.dwa import DwaPolicy

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class PlannerConfig:
    """RL-RRT parameters; ``max_iterations`` switches to an iteration budget."""

    p_goal_bias: float = 0.05
    k_c: int = 20
    p_prune: float = 0.9
    ttr_threshold: float = 20.0
    dt_policy: float = 0.1
    dt_tree: float = 1.0
    t_max_extend: float = 20.0
    time_budget: float = 10.0
    max_iterations: int | None = None
    n_ttr_samples: int = 10
    ttr_half_width: float = 0.3
    goal_radius: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_goal_bias <= 1.0:
            raise ValueError(f"{self.p_goal_bias=} must be in [0, 1]")
        if not 0.0 <= self.p_prune <= 1.0:
            raise ValueError(f"{self.p_prune=} must be in [0, 1]")
        if self.k_c < 1:
            raise ValueError(f"{self.k_c=} must be at least 1")
        if self.dt_policy <= 0 or self.t_max_extend < self.dt_policy:
            raise ValueError(f"{self.t_max_extend=} must cover one {self.dt_policy=}")

        n = round(self.dt_tree / self.dt_policy)
        if n < 1 or abs(n * self.dt_policy - self.dt_tree) > 1e-9:
            raise ValueError(f"{self.dt_tree=} must be a multiple of {self.dt_policy=}")

    @property
    def steps_per_node(self) -> int:
        return round(self.dt_tree / self.dt_policy)

    @property
    def max_extend_steps(self) -> int:
        return round(self.t_max_extend / self.dt_policy)


def _scan(
    grid: OccupancyGrid, state: RobotState, lidar: LidarConfig, rng: np.random.Generator
) -> np.ndarray:
    return lidar_scan(grid, state_pose(state), lidar, rng)


def extend(
    policy: LocalPlannerPolicy,
    tree: Tree,
    from_node: Node,
    x_rnd: RobotState,
    grid: OccupancyGrid,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
    goal: GoalSpec | None = None,
) -> list[Node]:
    """Roll the policy toward ``x_rnd``, adding a node every ``dt_tree`` while collision-free.

    Stops on collision, after ``t_max_extend``, once within ``goal_radius`` of ``x_rnd`` or
    on entering ``goal``; the state that stops the rollout this way is always added.
    """
    lidar = lidar or LidarConfig()
    dynamics = dynamics or DynamicsParams()

    target = (x_rnd.x, x_rnd.y)
    state = from_node.state
    stack = (
        from_node.frames.copy()
        if from_node.frames is not None
        else FrameStack([_scan(grid, state, lidar, rng)])
    )

    parent = from_node
    actions, path, new_nodes = [], [], []
    for step in range(1, cfg.max_extend_steps + 1):
        action = policy.act(make_observation(state, target, stack))
        state = propagate(state, action, cfg.dt_policy, dynamics)
        if not point_free(grid, (state.x, state.y), dynamics.robot_radius):
            break

        actions.append(action)
        path.append((state.x, state.y))
        stack.push(_scan(grid, state, lidar, rng))

        reached = math.hypot(state.x - target[0], state.y - target[1]) < cfg.goal_radius
        reached = reached or (goal is not None and goal.contains(state.x, state.y))
        if step % cfg.steps_per_node == 0 or reached:
            parent = tree.add(
                state,
                parent.id,
                target,
                parent.arrival_time + len(actions) * cfg.dt_policy,
                tuple(actions),
                tuple(path),
                stack.copy(),
            )
            new_nodes.append(parent)
            actions, path = [], []

        if reached:
            break

    return new_nodes


def select_nearest_hierarchical(
    tree: Tree,
    x_rnd: RobotState,
    estimator,
    k_c: int,
    rng: np.random.Generator,
    grid: OccupancyGrid,
    n_samples: int = 10,
    half_width: float = 0.3,
    lidar: LidarConfig | None = None,
) -> tuple[Node, float]:
    """Among the ``k_c`` Euclidean-nearest nodes, the one with the lowest averaged TTR."""
    candidates = sorted(tree.k_nearest(x_rnd.x, x_rnd.y, k_c))

    best, best_ttr = None, math.inf
    for node_id in candidates:
        node = tree[node_id]
        ttr = avg_ttr(
            estimator,
            node.state,
            x_rnd,
            grid,
            n_samples,
            half_width,
            rng,
            stack=node.frames,
            lidar=lidar,
        )
        if best is None or ttr < best_ttr:
            best, best_ttr = node, ttr

    return best, best_ttr


def select_nearest_euclidean(tree: Tree, x_rnd: RobotState) -> Node:
    return tree[tree.k_nearest(x_rnd.x, x_rnd.y, 1)[0]]


Selector = Callable[[Tree, RobotState], tuple[Node, float | None]]


def grow_tree(
    name: str,
    grid: OccupancyGrid,
    root_state: RobotState,
    goal: GoalSpec | tuple[float, float],
    policy: LocalPlannerPolicy,
    select: Selector,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
    prune: bool = False,
) -> PlanResult:
    """Sample, select, optionally prune, extend; until the goal is connected or the budget ends."""
    lidar = lidar or LidarConfig()
    dynamics = dynamics or DynamicsParams()

    if not isinstance(goal, GoalSpec):
        goal = GoalSpec(tuple(goal), cfg.goal_radius)
    if policy.robot_kind is not root_state.kind:
        raise PlannerError(f"{policy.robot_kind=} does not match {root_state.kind=}")
    if not point_free(grid, (root_state.x, root_state.y), dynamics.robot_radius):
        logger.error("%s: root (%.2f, %.2f) is in collision", name, root_state.x, root_state.y)
        raise PlannerError(f"Root ({root_state.x:.3f}, {root_state.y:.3f}) is in collision")

    budget = Budget(cfg.time_budget, cfg.max_iterations)
    stats = PlannerStats(unit=budget.unit)
    tree = Tree(root_state, FrameStack([_scan(grid, root_state, lidar, rng)]))
    config = {"name": name, **asdict(cfg)}

    def success(node: Node) -> MotionPlan:
        stats.budget_used = budget.used(stats.iterations)
        stats.time_to_first_solution = stats.budget_used
        stats.tree_size = len(tree)
        logger.debug(
            "%s: goal connected after %d iterations, %d nodes", name, stats.iterations, len(tree)
        )
        return MotionPlan(
            name, cfg.seed, goal, tree.path_to(node.id), cfg.dt_policy, stats, config, tree
        )

    if goal.contains(root_state.x, root_state.y):
        return success(tree.root)

    while not budget.exhausted(stats.iterations):
        stats.iterations += 1

        x_rnd = sample_free_state(
            grid, root_state.kind, rng, goal, cfg.p_goal_bias, dynamics.robot_radius
        )
        stats.samples += 1

        node, ttr = select(tree, x_rnd)
        pruned = (
            prune
            and ttr is not None
            and ttr >= cfg.ttr_threshold
            and rng.random() < cfg.p_prune
        )
        stats.decisions.append(
            Decision(stats.iterations, (x_rnd.x, x_rnd.y), node.id, ttr, pruned)
        )

        if pruned:
            stats.pruned += 1
            logger.debug("%s: pruned sample (%.2f, %.2f), ttr=%.2f", name, x_rnd.x, x_rnd.y, ttr)
            continue

        stats.extensions += 1
        for new in extend(policy, tree, node, x_rnd, grid, cfg, rng, lidar, dynamics, goal):
            if goal.contains(new.state.x, new.state.y):
                return success(new)

    stats.budget_used = budget.used(stats.iterations)
    stats.tree_size = len(tree)
    logger.debug("%s: budget exhausted, %d nodes, %d pruned", name, len(tree), stats.pruned)
    return PlanFailure(name, cfg.seed, goal, stats, config=config, tree=tree)


def rl_rrt(
    grid: OccupancyGrid,
    root_state: RobotState,
    goal: GoalSpec | tuple[float, float],
    policy: LocalPlannerPolicy,
    estimator,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> PlanResult:
    """RRT with a policy as local planner and averaged estimated TTR as distance."""
    if estimator.robot_kind is not root_state.kind:
        raise PlannerError(f"{estimator.robot_kind=} does not match {root_state.kind=}")

    def select(tree: Tree, x_rnd: RobotState):
        return select_nearest_hierarchical(
            tree,
            x_rnd,
            estimator,
            cfg.k_c,
            rng,
            grid,
            cfg.n_ttr_samples,
            cfg.ttr_half_width,
            lidar,
        )

    return grow_tree(
        "RL-RRT", grid, root_state, goal, policy, select, cfg, rng, lidar, dynamics, prune=True
    )


def rl_rrt_euclidean(
    grid: OccupancyGrid,
    root_state: RobotState,
    goal: GoalSpec | tuple[float, float],
    policy: LocalPlannerPolicy,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> PlanResult:
    """RL-RRT with Euclidean nearest neighbor and no pruning."""

    def select(tree: Tree, x_rnd: RobotState):
        return select_nearest_euclidean(tree, x_rnd), None

    return grow_tree(
        "RL-RRT-E", grid, root_state, goal, policy, select, cfg, rng, lidar, dynamics
    )


def rrt_steer_plan(
    grid: OccupancyGrid,
    root_state: RobotState,
    goal: GoalSpec | tuple[float, float],
    enable_clearance: bool,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    lidar: LidarConfig | None = None,
    dynamics: DynamicsParams | None = None,
) -> PlanResult:
    """RRT steered by DWA, with (RRT-DW) or without (RRT-S) the clearance term."""
    if root_state.kind is not RobotKind.DIFF_DRIVE:
        raise PlannerError(f"DWA steering needs a differential drive, got {root_state.kind}")

    lidar = lidar or LidarConfig()
    policy = DwaPolicy(enable_clearance, lidar=lidar)
    name = "RRT-DW" if enable_clearance else "RRT-S"

    def select(tree: Tree, x_rnd: RobotState):
        return select_nearest_euclidean(tree, x_rnd), None

    return grow_tree(name, grid, root_state, goal, policy, select, cfg, rng, lidar, dynamics)
