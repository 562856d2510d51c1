"""Search tree, RL-RRT and its baselines, SST and plan verification."""

import json
import math
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np

from rlrrt.env.dynamics import MAX_SPEED, CarState, DiffDriveState, RobotKind
from rlrrt.env.observation import FrameStack
from rlrrt.env.world import GoalSpec, LidarConfig
from rlrrt.estimator import RolloutOracle, TTRConfig
from rlrrt.planner.plan import Budget, BudgetUnit, MotionPlan, PlanFailure, PlannerError, verify_plan
from rlrrt.planner.rrt import (
    PlannerConfig,
    extend,
    rl_rrt,
    rl_rrt_euclidean,
    rrt_steer_plan,
    select_nearest_euclidean,
    select_nearest_hierarchical,
)
from rlrrt.planner.sst import SstConfig, WitnessSet, retire_representative, sst_plan
from rlrrt.planner.tree import REBUILD_EVERY, Tree, TreeError
from rlrrt.policy.base import ConstantPolicy
from rlrrt.policy.dwa import DwaPolicy
from tests.common_params import EMPTY, ROOM_CENTER, SEALED_ROOM, SLOW

DD = RobotKind.DIFF_DRIVE
LIDAR = LidarConfig(n_beams=16)


class StubEstimator:
    """Anisotropic distance, so selection differs from the Euclidean nearest node."""

    robot_kind = DD
    ttr_threshold = 20.0

    def __init__(self, value: float | None = None):
        self.value = value
        self.query_count = 0

    def ttr(self, state, goal) -> float:
        if self.value is not None:
            return self.value
        return abs(goal[0] - state.x) + 3.0 * abs(goal[1] - state.y)

    def time_to_reach(self, state, stack, goals):
        del stack
        self.query_count += len(goals)
        return np.array([self.ttr(state, g) for g in goals])


def chain_tree(points) -> Tree:
    tree = Tree(DiffDriveState(*points[0]))
    for i, p in enumerate(points[1:]):
        tree.add(DiffDriveState(*p), parent=i, arrival_time=float(i + 1), path=(p,))
    return tree


class TestTree(unittest.TestCase):
    def test_nearest_matches_brute_force(self):
        rng = np.random.default_rng(0)
        tree = Tree(DiffDriveState(10.0, 10.0))
        for _ in range(3 * REBUILD_EVERY + 5):
            x, y = rng.uniform(0.0, 20.0, size=2)
            tree.add(DiffDriveState(x, y), parent=int(rng.integers(len(tree))))

        xy = tree.positions()
        for qx, qy in rng.uniform(0.0, 20.0, size=(20, 2)):
            with self.subTest(query=(qx, qy)):
                dist = np.hypot(xy[:, 0] - qx, xy[:, 1] - qy)
                expected = sorted(range(len(tree)), key=lambda i: (dist[i], i))[:5]
                self.assertEqual(tree.k_nearest(qx, qy, 5), expected)
                self.assertEqual(
                    tree.within_radius(qx, qy, 2.0),
                    sorted(int(i) for i in np.flatnonzero(dist <= 2.0)),
                )

    def test_remove_leaf(self):
        tree = chain_tree([(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)])

        with self.assertRaises(TreeError):
            tree.remove_leaf(1)
        with self.assertRaises(TreeError):
            tree.remove_leaf(0)

        tree.remove_leaf(2)
        tree.check_integrity()
        self.assertEqual(tree.k_nearest(3.0, 1.0, 1), [1])
        self.assertEqual(tree.edges(), [(0, 1)])

    def test_add_rejects_bad_parent(self):
        tree = Tree(DiffDriveState(1.0, 1.0))

        with self.assertRaises(TreeError):
            tree.add(DiffDriveState(2.0, 1.0), parent=3)

    def test_path_to(self):
        tree = chain_tree([(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)])

        self.assertEqual([n.id for n in tree.path_to(2)], [0, 1, 2])

    def test_dump(self):
        tree = chain_tree([(1.0, 1.0), (2.0, 1.0)])

        with tempfile.TemporaryDirectory() as tmp:
            data = json.loads(tree.dump(Path(tmp) / "tree.json").read_text())

        self.assertEqual(data["robot_kind"], "diff_drive")
        self.assertEqual(data["edges"], [[0, 1]])
        self.assertEqual(data["nodes"][1]["state"]["x"], 2.0)


class TestBudget(unittest.TestCase):
    def test_iterations(self):
        budget = Budget(1.0, max_iterations=3)

        self.assertIs(budget.unit, BudgetUnit.ITERATIONS)
        self.assertFalse(budget.exhausted(2))
        self.assertTrue(budget.exhausted(3))
        self.assertEqual(budget.used(2), 2.0)

    def test_invalid(self):
        with self.assertRaises(PlannerError):
            Budget(0.0)
        with self.assertRaises(PlannerError):
            Budget(1.0, max_iterations=-1)


class TestSelection(unittest.TestCase):
    def setUp(self):
        self.tree = chain_tree([(5.0, 5.0), (6.0, 8.0), (9.0, 6.0), (7.5, 7.5), (4.0, 9.0)])
        self.target = DiffDriveState(8.0, 9.0)
        self.rng = np.random.default_rng(0)

    def test_hierarchical_is_exhaustive_when_k_covers_tree(self):
        est = StubEstimator()

        node, ttr = select_nearest_hierarchical(
            self.tree, self.target, est, len(self.tree), self.rng, EMPTY, half_width=0.0, lidar=LIDAR
        )

        goal = (self.target.x, self.target.y)
        expected = min(self.tree, key=lambda n: est.ttr(n.state, goal))
        self.assertEqual(node.id, expected.id)
        self.assertEqual(ttr, est.ttr(expected.state, goal))
        self.assertNotEqual(node.id, select_nearest_euclidean(self.tree, self.target).id)

    def test_random_trees(self):
        est = StubEstimator()
        rng = np.random.default_rng(1)
        frames = FrameStack([np.zeros(LIDAR.n_beams)])

        for trial in range(1000):
            tree = Tree(DiffDriveState(*rng.uniform(1.0, 19.0, size=2)), frames)
            for _ in range(int(rng.integers(0, 30))):
                x, y = rng.uniform(1.0, 19.0, size=2)
                tree.add(DiffDriveState(x, y), int(rng.integers(len(tree))), frames=frames)
            target = DiffDriveState(*rng.uniform(1.0, 19.0, size=2))
            goal = (target.x, target.y)

            node, _ = select_nearest_hierarchical(
                tree, target, est, len(tree), rng, EMPTY, n_samples=1, half_width=0.0
            )

            best = min(est.ttr(n.state, goal) for n in tree)
            with self.subTest(trial=trial):
                self.assertEqual(est.ttr(node.state, goal), best)

    def test_k_of_one_is_euclidean(self):
        node, _ = select_nearest_hierarchical(
            self.tree, self.target, StubEstimator(), 1, self.rng, EMPTY, half_width=0.0, lidar=LIDAR
        )

        self.assertEqual(node.id, select_nearest_euclidean(self.tree, self.target).id)


class TestExtend(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_immediate_collision(self):
        grid = EMPTY.with_box(5.35, 3.0, 6.0, 7.0)
        tree = Tree(DiffDriveState(5.0, 5.0))
        cfg = PlannerConfig()

        new = extend(
            ConstantPolicy(DD, (1.0, 0.0)), tree, tree.root, DiffDriveState(9.0, 5.0), grid, cfg, self.rng, LIDAR
        )

        self.assertEqual(new, [])
        self.assertEqual(len(tree), 1)

    def test_node_cadence(self):
        tree = Tree(DiffDriveState(2.0, 10.0))
        cfg = PlannerConfig(t_max_extend=5.0)

        new = extend(
            ConstantPolicy(DD, (1.0, 0.0)), tree, tree.root, DiffDriveState(18.0, 10.0), EMPTY, cfg, self.rng, LIDAR
        )

        self.assertEqual(len(new), 5)
        times = [n.arrival_time for n in new]
        np.testing.assert_allclose(np.diff([0.0, *times]), 1.0)
        self.assertTrue(all(len(n.action_log) == cfg.steps_per_node for n in new))
        self.assertAlmostEqual(new[-1].state.x, 7.0)
        self.assertEqual([n.parent for n in new], [0, 1, 2, 3, 4])
        tree.check_integrity()

    def test_reaching_target_adds_node(self):
        tree = Tree(DiffDriveState(2.0, 10.0))

        new = extend(
            ConstantPolicy(DD, (1.0, 0.0)), tree, tree.root, DiffDriveState(2.55, 10.0), EMPTY, PlannerConfig(), self.rng, LIDAR
        )

        self.assertEqual(len(new), 1)
        self.assertAlmostEqual(new[0].arrival_time, 0.1)
        self.assertEqual(new[0].target, (2.55, 10.0))

    def test_entering_goal_between_nodes_adds_node(self):
        tree = Tree(DiffDriveState(2.0, 10.0))
        goal = GoalSpec((4.55, 10.0), 0.3)

        new = extend(
            ConstantPolicy(DD, (1.0, 0.0)), tree, tree.root, DiffDriveState(18.0, 10.0), EMPTY, PlannerConfig(), self.rng, LIDAR, goal=goal
        )

        self.assertEqual(len(new), 3)
        self.assertAlmostEqual(new[-1].state.x, 4.3)
        self.assertAlmostEqual(new[-1].arrival_time, 2.3)
        self.assertEqual(len(new[-1].action_log), 3)
        self.assertTrue(goal.contains(new[-1].state.x, new[-1].state.y))


class TestRrt(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_goal_at_root(self):
        result = rl_rrt_euclidean(
            EMPTY, DiffDriveState(10.0, 10.0), (10.0, 10.0), ConstantPolicy(DD), PlannerConfig(max_iterations=5), self.rng, LIDAR
        )

        self.assertIsInstance(result, MotionPlan)
        self.assertEqual(len(result.nodes), 1)
        self.assertEqual(result.finish_time, 0.0)
        self.assertEqual(result.stats.iterations, 0)

    def test_goal_passed_between_nodes_is_connected(self):
        goal = GoalSpec((4.55, 10.0), 0.3)
        cfg = PlannerConfig(max_iterations=3, p_goal_bias=0.0)

        result = rl_rrt_euclidean(
            EMPTY, DiffDriveState(2.0, 10.0), goal, ConstantPolicy(DD, (1.0, 0.0)), cfg, self.rng, LIDAR
        )

        self.assertIsInstance(result, MotionPlan)
        self.assertTrue(goal.contains(*result.positions()[-1]))
        self.assertTrue(verify_plan(result, EMPTY).feasible)

    def test_larger_budget_keeps_solutions(self):
        grid = EMPTY.with_box(7.0, 6.0, 7.2, 14.0)
        start, goal = DiffDriveState(3.0, 10.0), (12.0, 14.0)
        outcomes = {}
        for seed in range(3):
            for iterations in (5, 50):
                cfg = PlannerConfig(max_iterations=iterations, p_goal_bias=0.2, seed=seed)
                outcomes[seed, iterations] = rrt_steer_plan(
                    grid, start, goal, True, cfg, np.random.default_rng(seed), LIDAR
                )

        for seed in range(3):
            short, long = outcomes[seed, 5], outcomes[seed, 50]
            with self.subTest(seed=seed):
                self.assertLessEqual(short.success, long.success)
                if short.success:
                    self.assertEqual(short.stats.time_to_first_solution, long.stats.time_to_first_solution)
                    self.assertEqual(short.finish_time, long.finish_time)

    def test_dwa_plan_on_open_map(self):
        cfg = PlannerConfig(max_iterations=50, p_goal_bias=0.5)
        result = rrt_steer_plan(EMPTY, DiffDriveState(5.0, 10.0), (9.0, 10.0), True, cfg, self.rng, LIDAR)

        self.assertTrue(result.success)
        check = verify_plan(result, EMPTY)
        self.assertTrue(check.feasible)
        self.assertEqual(check.max_error, 0.0)
        self.assertTrue(result.goal.contains(result.final_state.x, result.final_state.y))
        self.assertGreaterEqual(result.finish_time, (4.0 - 0.5) / MAX_SPEED)
        result.tree.check_integrity()

    def test_walled_off_goal(self):
        cfg = PlannerConfig(max_iterations=10, p_goal_bias=0.5)
        result = rrt_steer_plan(SEALED_ROOM, DiffDriveState(3.0, 3.0), ROOM_CENTER, False, cfg, self.rng, LIDAR)

        self.assertIsInstance(result, PlanFailure)
        self.assertEqual(result.stats.iterations, 10)
        self.assertIsNone(result.finish_time)
        result.tree.check_integrity()

    def test_rl_rrt_with_stub_estimator(self):
        est = StubEstimator()
        cfg = PlannerConfig(max_iterations=50, p_goal_bias=0.5, k_c=5, n_ttr_samples=2)
        result = rl_rrt(EMPTY, DiffDriveState(5.0, 10.0), (9.0, 10.0), DwaPolicy(lidar=LIDAR), est, cfg, self.rng, LIDAR)

        self.assertTrue(result.success)
        self.assertTrue(verify_plan(result, EMPTY).feasible)
        self.assertGreater(est.query_count, 0)
        self.assertTrue(all(d.ttr is not None for d in result.stats.decisions))

    def test_everything_pruned(self):
        est = StubEstimator(value=100.0)
        cfg = PlannerConfig(max_iterations=20, p_prune=1.0, n_ttr_samples=1)
        result = rl_rrt(EMPTY, DiffDriveState(5.0, 10.0), (15.0, 10.0), DwaPolicy(lidar=LIDAR), est, cfg, self.rng, LIDAR)

        self.assertFalse(result.success)
        self.assertEqual(result.stats.pruned, 20)
        self.assertEqual(result.stats.extensions, 0)
        self.assertEqual(len(result.tree), 1)

    def test_nothing_pruned_without_probability(self):
        est = StubEstimator(value=100.0)
        cfg = PlannerConfig(max_iterations=5, p_prune=0.0, n_ttr_samples=1)
        result = rl_rrt(EMPTY, DiffDriveState(5.0, 10.0), (15.0, 10.0), DwaPolicy(lidar=LIDAR), est, cfg, self.rng, LIDAR)

        self.assertEqual(result.stats.pruned, 0)
        self.assertEqual(result.stats.extensions, result.stats.iterations)

    def test_euclidean_variant_never_prunes(self):
        cfg = PlannerConfig(max_iterations=5)
        result = rl_rrt_euclidean(EMPTY, DiffDriveState(5.0, 10.0), (15.0, 10.0), DwaPolicy(lidar=LIDAR), cfg, self.rng, LIDAR)

        self.assertEqual(result.stats.pruned, 0)
        self.assertTrue(all(d.ttr is None for d in result.stats.decisions))

    def test_root_in_collision(self):
        with self.assertRaises(PlannerError):
            rrt_steer_plan(EMPTY, DiffDriveState(0.1, 10.0), (5.0, 5.0), True, PlannerConfig(max_iterations=1), self.rng, LIDAR)

    def test_steering_needs_diff_drive(self):
        with self.assertRaises(PlannerError):
            rrt_steer_plan(EMPTY, CarState(5.0, 5.0), (8.0, 5.0), True, PlannerConfig(max_iterations=1), self.rng, LIDAR)

    def test_tampered_plan_fails_replay(self):
        cfg = PlannerConfig(max_iterations=50, p_goal_bias=0.5)
        result = rrt_steer_plan(EMPTY, DiffDriveState(5.0, 10.0), (9.0, 10.0), True, cfg, self.rng, LIDAR)
        node = result.nodes[-1]
        node.state = replace(node.state, x=node.state.x + 1.0)

        check = verify_plan(result, EMPTY)

        self.assertFalse(check.feasible)
        self.assertAlmostEqual(check.max_error, 1.0)

    def test_plan_json(self):
        cfg = PlannerConfig(max_iterations=50, p_goal_bias=0.5)
        result = rrt_steer_plan(EMPTY, DiffDriveState(5.0, 10.0), (9.0, 10.0), True, cfg, self.rng, LIDAR)

        with tempfile.TemporaryDirectory() as tmp:
            data = json.loads(result.to_json(Path(tmp) / "plan.json").read_text())

        self.assertEqual(data["planner"], "RRT-DW")
        self.assertEqual(len(data["actions"]), len(data["positions"]) - 1)
        self.assertEqual(data["stats"]["unit"], "iterations")
        self.assertAlmostEqual(data["finish_time"], len(data["actions"]) * 0.1)


class TestSst(unittest.TestCase):
    def run_sst(self, seed: int = 0, **kwargs):
        cfg = SstConfig(max_iterations=kwargs.pop("max_iterations", 1000), seed=seed, **kwargs)
        return sst_plan(
            EMPTY, DiffDriveState(10.0, 10.0), (11.2, 10.0), DD, cfg, np.random.default_rng(seed)
        )

    def test_deterministic(self):
        a, b = self.run_sst(max_iterations=100), self.run_sst(max_iterations=100)

        self.assertEqual(a.success, b.success)
        self.assertEqual(a.finish_time, b.finish_time)
        self.assertEqual(a.stats.tree_size, b.stats.tree_size)

    def test_finish_time_lower_bound(self):
        result = self.run_sst()

        self.assertTrue(result.success)
        self.assertGreaterEqual(result.finish_time, (1.2 - 0.5) / MAX_SPEED)
        self.assertTrue(verify_plan(result, EMPTY).feasible)
        result.tree.check_integrity()

    def test_huge_witness_radius_keeps_root_only(self):
        result = self.run_sst(max_iterations=50, delta_bn=1e6, delta_s=1e6)

        self.assertIsInstance(result, PlanFailure)
        self.assertEqual(result.stats.tree_size, 1)

    def test_goal_at_root(self):
        cfg = SstConfig(max_iterations=3)
        result = sst_plan(EMPTY, DiffDriveState(10.0, 10.0), (10.0, 10.0), DD, cfg, np.random.default_rng(0))

        self.assertEqual(result.finish_time, 0.0)
        self.assertEqual(result.stats.time_to_first_solution, 0.0)

    def test_retired_solution_node_is_kept(self):
        tree = chain_tree([(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)])
        solution = tree[2]

        retire_representative(tree, solution.id, best=solution)

        self.assertFalse(solution.active)
        self.assertFalse(solution.removed)
        self.assertEqual([n.id for n in tree.path_to(solution.id)], [0, 1, 2])

        retire_representative(tree, solution.id, best=None)

        self.assertTrue(solution.removed)
        tree.check_integrity()

    def test_witness_set(self):
        witnesses = WitnessSet()
        witnesses.add(0.0, 0.0)
        witnesses.add(3.0, 0.0)

        self.assertEqual(witnesses.nearest(2.6, 0.0, 0.5), 1)
        self.assertIsNone(witnesses.nearest(1.5, 0.0, 0.5))

    def test_invalid_config(self):
        with self.assertRaises(ValueError):
            SstConfig(delta_s=3.0, delta_bn=2.0)
        with self.assertRaises(ValueError):
            SstConfig(t_prop_min=0.05)


class TestOraclePruning(unittest.TestCase):
    @SLOW
    def test_pruned_samples_are_truly_unreachable(self):
        """With rollouts as the estimator, only samples the policy cannot reach are pruned."""
        lidar = LidarConfig(n_beams=32, noise_sigma=0.0)
        policy = DwaPolicy(lidar=lidar)
        oracle = RolloutOracle(policy, SEALED_ROOM, TTRConfig(t_horizon=20.0), lidar)
        cfg = PlannerConfig(max_iterations=10, p_prune=1.0, n_ttr_samples=1, ttr_half_width=0.0, k_c=3)

        for seed in range(20):
            rng = np.random.default_rng(seed)
            result = rl_rrt(SEALED_ROOM, DiffDriveState(3.0, 3.0), ROOM_CENTER, policy, oracle, cfg, rng, lidar)

            self.assertFalse(result.success)
            self.assertTrue(math.isfinite(result.stats.budget_used))
            for decision in result.stats.decisions:
                with self.subTest(seed=seed, iteration=decision.iteration):
                    self.assertEqual(decision.pruned, decision.ttr >= cfg.ttr_threshold)
                    if decision.pruned:
                        node = result.tree[decision.node_id]
                        truth = oracle.rollout_ttr(node.state, decision.sample)
                        self.assertGreaterEqual(truth, cfg.ttr_threshold)


if __name__ == "__main__":
    unittest.main()
