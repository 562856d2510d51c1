import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

from rlrrt.cli import build_parser, main
from rlrrt.env.world import OccupancyGrid
from tests.common_params import write_map

# 8 x 8 m
SMALL = OccupancyGrid.empty(32, 32, 0.25)

QUIET = ["--log-level", "ERROR", "--set", "lidar.n_beams=8"]


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.map = str(write_map(SMALL, self.dir / "small.map"))

    def run_cli(self, *argv: str) -> tuple[int, str]:
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            code = main([*argv, *QUIET])
        return code, out.getvalue()

    def test_plan_outputs(self):
        code, _ = self.run_cli(
            "plan",
            "--map", self.map,
            "--planner", "sst",
            "--start", "2,2",
            "--goal", "2,2",
            "--iterations", "3",
            "--out", str(self.dir / "plan.json"),
            "--tree", str(self.dir / "tree.json"),
            "--svg", str(self.dir / "plan.svg"),
        )  # fmt: skip

        self.assertEqual(code, 0)
        plan = json.loads((self.dir / "plan.json").read_text())
        self.assertEqual(plan["finish_time"], 0.0)
        self.assertEqual(plan["positions"], [[2.0, 2.0]])
        self.assertTrue((self.dir / "tree.json").exists())
        self.assertTrue((self.dir / "plan.svg").read_text().rstrip().endswith("</svg>"))

    def test_plan_then_render(self):
        code, _ = self.run_cli(
            "plan",
            "--map", self.map,
            "--planner", "rrt_dw",
            "--start", "2,4",
            "--goal", "5,4",
            "--iterations", "30",
            "--out", str(self.dir / "plan.json"),
            "--tree", str(self.dir / "tree.json"),
        )  # fmt: skip
        self.assertEqual(code, 0)

        code, _ = self.run_cli(
            "render",
            "--map", self.map,
            "--tree", f"rrt_dw={self.dir / 'tree.json'}",
            "--plan", f"rrt_dw={self.dir / 'plan.json'}",
            "--start", "2,4",
            "--goal", "5,4",
            "--out", str(self.dir / "render.svg"),
        )  # fmt: skip

        self.assertEqual(code, 0)
        self.assertTrue((self.dir / "render.svg").exists())

    def test_rl_rrt_needs_estimator(self):
        code, _ = self.run_cli(
            "plan", "--map", self.map, "--start", "2,2", "--goal", "6,6", "--iterations", "3",
            "--out", str(self.dir / "plan.json"),
        )  # fmt: skip

        self.assertEqual(code, 1)
        self.assertFalse((self.dir / "plan.json").exists())

    def test_undertrained_policy_is_saved_and_fails(self):
        out = self.dir / "policy"
        code, _ = self.run_cli(
            "train-policy",
            "--map", self.map,
            "--episodes", "0",
            "--out", str(out),
            "--set", "actor_critic.actor_hidden=8",
            "--set", "actor_critic.critic_hidden=8",
            "--set", "actor_critic.eval_episodes=2",
            "--set", "actor_critic.success_margin=0.9",
            "--set", "episode.max_episode_time=1.0",
        )  # fmt: skip

        self.assertEqual(code, 1)
        self.assertTrue((out / "training_curve.json").exists())
        self.assertEqual(json.loads((out / "training_curve.json").read_text())["returns"], [])

    def test_bad_override(self):
        code, _ = self.run_cli("plan", "--map", self.map, "--set", "planner.k_nearest=3")

        self.assertEqual(code, 1)

    def test_missing_map(self):
        code, _ = self.run_cli("p2p-eval", "--map", str(self.dir / "missing.map"))

        self.assertEqual(code, 1)

    def test_ttr_pipeline(self):
        data = self.dir / "data.npz"
        est = self.dir / "est.npz"

        code, _ = self.run_cli(
            "collect-ttr", "--map", self.map, "--policy", "zero", "--episodes", "2",
            "--out", str(data), "--set", "ttr.t_horizon=2",
        )  # fmt: skip
        self.assertEqual(code, 0)

        code, out = self.run_cli(
            "train-estimator", "--dataset", str(data), "--epochs", "2", "--holdout", "0.5",
            "--out", str(est),
        )  # fmt: skip
        self.assertEqual(code, 0)
        self.assertIn("Mean signed error", out)

        code, out = self.run_cli(
            "contour", "--map", self.map, "--estimator", str(est), "--goal", "4,4",
            "--step", "2", "--out", str(self.dir / "contour.csv"),
        )  # fmt: skip
        self.assertEqual(code, 0)
        self.assertIn("free points above 2 s", out)

    def test_p2p_eval(self):
        code, out = self.run_cli(
            "p2p-eval", "--map", self.map, "--policy", "zero", "--bins", "0,0.5", "--trials", "2",
        )  # fmt: skip

        self.assertEqual(code, 0)
        self.assertIn("1.00", out)

    def test_parser_defaults(self):
        args = build_parser().parse_args(["plan"])

        self.assertEqual(args.planner, "rl_rrt")
        self.assertEqual(args.robot, "diff_drive")
        self.assertEqual(str(args.map), "maps/office.map")


if __name__ == "__main__":
    unittest.main()
