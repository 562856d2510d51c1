"""Stable sparse RRT: random control propagation with witness-based pruning."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from rlrrt.env.dynamics import (
    DynamicsParams,
    RobotAction,
    RobotKind,
    RobotState,
    action_high,
    action_low,
    propagate,
)
from rlrrt.env.world import GoalSpec, OccupancyGrid, point_free, sample_free_state
from rlrrt.planner.plan import (
    Budget,
    MotionPlan,
    PlanFailure,
    PlannerError,
    PlannerStats,
    PlanResult,
)
from rlrrt.planner.tree import Node, Tree

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SstConfig:
    """Selection and witness radii in meters, propagation durations in seconds."""

    delta_bn: float = 2.0
    delta_s: float = 0.5
    t_prop_min: float = 0.5
    t_prop_max: float = 3.0
    dt_policy: float = 0.1
    p_goal_bias: float = 0.05
    goal_radius: float = 0.5
    time_budget: float = 10.0
    max_iterations: int | None = None
    stop_at_first_solution: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta_s <= self.delta_bn:
            raise ValueError(f"Need 0 < {self.delta_s=} <= {self.delta_bn=}")
        if not 0 < self.t_prop_min <= self.t_prop_max:
            raise ValueError(f"Need 0 < {self.t_prop_min=} <= {self.t_prop_max=}")
        if self.t_prop_min < self.dt_policy:
            raise ValueError(f"{self.t_prop_min=} is shorter than {self.dt_policy=}")
        if not 0.0 <= self.p_goal_bias <= 1.0:
            raise ValueError(f"{self.p_goal_bias=} must be in [0, 1]")

    @property
    def step_range(self) -> tuple[int, int]:
        return round(self.t_prop_min / self.dt_policy), round(self.t_prop_max / self.dt_policy)


class WitnessSet:
    """Witness points, each represented by the cheapest node reaching its neighborhood."""

    def __init__(self):
        self.points: list[tuple[float, float]] = []
        self.representatives: list[int | None] = []

    def __len__(self):
        return len(self.points)

    def nearest(self, x: float, y: float, radius: float) -> int | None:
        if not self.points:
            return None
        xy = np.array(self.points)
        dist = np.hypot(xy[:, 0] - x, xy[:, 1] - y)
        i = int(np.argmin(dist))
        return i if dist[i] <= radius else None

    def add(self, x: float, y: float) -> int:
        self.points.append((x, y))
        self.representatives.append(None)
        return len(self.points) - 1


def best_near(tree: Tree, sample: RobotState, delta_bn: float) -> Node:
    """Lowest-cost active node within ``delta_bn``, else the nearest active node."""
    near = tree.within_radius(sample.x, sample.y, delta_bn, active_only=True)
    if not near:
        return tree[tree.k_nearest(sample.x, sample.y, 1, active_only=True)[0]]
    return min((tree[i] for i in near), key=lambda n: (n.arrival_time, n.id))


def propagate_random(
    node: Node,
    grid: OccupancyGrid,
    cfg: SstConfig,
    rng: np.random.Generator,
    dynamics: DynamicsParams,
) -> tuple[RobotState, list[RobotAction], list[tuple[float, float]]] | None:
    """Constant random control for a random duration; None if it collides."""
    kind = node.state.kind
    lo, hi = cfg.step_range
    n_steps = int(rng.integers(lo, hi + 1))
    action = RobotAction(kind, *rng.uniform(action_low(kind), action_high(kind)))

    state = node.state
    path = []
    for _ in range(n_steps):
        state = propagate(state, action, cfg.dt_policy, dynamics)
        if not point_free(grid, (state.x, state.y), dynamics.robot_radius):
            return None
        path.append((state.x, state.y))

    return state, [action] * n_steps, path


def _prune_branch(tree: Tree, node_id: int):
    """Remove inactive leaves walking up from ``node_id``."""
    node = tree[node_id]
    while node.parent is not None and not node.active and node.n_children == 0:
        parent = node.parent
        tree.remove_leaf(node.id)
        node = tree[parent]


def retire_representative(tree: Tree, node_id: int, best: Node | None):
    """Deactivate a replaced representative and prune its dead branch, keeping the best solution."""
    tree.deactivate(node_id)
    if best is None or node_id != best.id:
        _prune_branch(tree, node_id)


def sst_plan(
    grid: OccupancyGrid,
    root_state: RobotState,
    goal: GoalSpec | tuple[float, float],
    robot_kind: RobotKind,
    cfg: SstConfig,
    rng: np.random.Generator,
    dynamics: DynamicsParams | None = None,
) -> PlanResult:
    """Grow a sparse tree of random motions; return the fastest goal-reaching branch."""
    dynamics = dynamics or DynamicsParams()
    robot_kind = RobotKind(robot_kind)

    if root_state.kind is not robot_kind:
        raise PlannerError(f"{root_state.kind=} does not match {robot_kind=}")
    if not point_free(grid, (root_state.x, root_state.y), dynamics.robot_radius):
        logger.error("SST: root (%.2f, %.2f) is in collision", root_state.x, root_state.y)
        raise PlannerError(f"Root ({root_state.x:.3f}, {root_state.y:.3f}) is in collision")
    if not isinstance(goal, GoalSpec):
        goal = GoalSpec(tuple(goal), cfg.goal_radius)

    budget = Budget(cfg.time_budget, cfg.max_iterations)
    stats = PlannerStats(unit=budget.unit)
    tree = Tree(root_state)
    config = {"name": "SST", **asdict(cfg)}

    witnesses = WitnessSet()
    witnesses.representatives[witnesses.add(root_state.x, root_state.y)] = tree.root.id

    best: Node | None = None
    if goal.contains(root_state.x, root_state.y):
        best = tree.root
        stats.time_to_first_solution = 0.0

    while best is None or not cfg.stop_at_first_solution:
        if budget.exhausted(stats.iterations):
            break
        stats.iterations += 1

        sample = sample_free_state(
            grid, robot_kind, rng, goal, cfg.p_goal_bias, dynamics.robot_radius
        )
        stats.samples += 1

        parent = best_near(tree, sample, cfg.delta_bn)
        motion = propagate_random(parent, grid, cfg, rng, dynamics)
        if motion is None:
            continue
        state, actions, path = motion
        stats.extensions += 1

        cost = parent.arrival_time + len(actions) * cfg.dt_policy
        w = witnesses.nearest(state.x, state.y, cfg.delta_s)
        if w is None:
            w = witnesses.add(state.x, state.y)

        rep = witnesses.representatives[w]
        if rep is not None and cost >= tree[rep].arrival_time:
            continue

        node = tree.add(state, parent.id, None, cost, tuple(actions), tuple(path))
        witnesses.representatives[w] = node.id

        if rep is not None:
            retire_representative(tree, rep, best)

        if goal.contains(state.x, state.y) and (best is None or cost < best.arrival_time):
            if best is None:
                stats.time_to_first_solution = budget.used(stats.iterations)
            best = node
            logger.debug("SST: solution with finish time %.2f s", cost)

    stats.budget_used = budget.used(stats.iterations)
    stats.tree_size = sum(not n.removed for n in tree)

    if best is None:
        logger.debug("SST: budget exhausted with %d nodes", stats.tree_size)
        return PlanFailure("SST", cfg.seed, goal, stats, config=config, tree=tree)

    return MotionPlan(
        "SST", cfg.seed, goal, tree.path_to(best.id), cfg.dt_policy, stats, config, tree
    )
