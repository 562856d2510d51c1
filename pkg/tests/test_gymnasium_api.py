import unittest

import numpy as np
from gymnasium.utils.env_checker import check_env

from rlrrt import navigation_v0
from rlrrt.env.dynamics import DiffDriveState
from rlrrt.env.env import EpisodeConfig, Outcome
from tests.common_params import PARAM_SETS, WALL


class TestGymnasiumAPI(unittest.TestCase):
    def test_api_compliance(self):
        """Test that the environment complies with the Gymnasium API."""
        for params in PARAM_SETS:
            with self.subTest(params=params):
                check_env(navigation_v0.raw_env(**params), skip_render_check=True)

    def test_seed_consistency(self):
        """Test that the environment produces consistent results with the same seed."""
        for params in PARAM_SETS:
            with self.subTest(params=params):
                runs = []
                for _ in range(2):
                    env = navigation_v0.env(**params)
                    obs, _ = env.reset(seed=7)
                    env.action_space.seed(7)
                    trace = [obs]
                    for _ in range(20):
                        obs, reward, terminated, truncated, _ = env.step(env.action_space.sample())
                        trace.append(np.append(obs, reward))
                        if terminated or truncated:
                            break
                    runs.append(np.concatenate(trace))

                np.testing.assert_array_equal(runs[0], runs[1])

    def test_render(self):
        env = navigation_v0.env(**PARAM_SETS[0])
        env.reset(seed=0, options={"start": DiffDriveState(5.0, 5.0), "goal": (8.0, 5.0)})

        out = env.render()

        self.assertIn("Step 0", out)
        self.assertIn("R", out)
        self.assertIn("G", out)

    def test_step_after_end(self):
        env = navigation_v0.env(WALL, episode=EpisodeConfig(max_episode_time=0.2))
        env.reset(seed=0, options={"start": DiffDriveState(9.65, 5.0), "goal": (2.0, 5.0)})

        _, _, terminated, truncated, info = env.step(np.array([1.0, 0.0]))

        self.assertTrue(terminated)
        self.assertFalse(truncated)
        self.assertIs(info["outcome"], Outcome.COLLIDED)
        with self.assertRaises(RuntimeError):
            env.step(np.array([0.0, 0.0]))

    def test_timeout_truncates(self):
        env = navigation_v0.env(episode=EpisodeConfig(max_episode_time=0.2))
        env.reset(seed=0, options={"start": DiffDriveState(5.0, 5.0), "goal": (15.0, 5.0)})

        env.step(np.zeros(2))
        _, _, terminated, truncated, info = env.step(np.zeros(2))

        self.assertFalse(terminated)
        self.assertTrue(truncated)
        self.assertIs(info["outcome"], Outcome.TIMEOUT)

    def test_unused_options_warn(self):
        env = navigation_v0.env(**PARAM_SETS[0])

        with self.assertLogs("rlrrt.env.env", "WARNING"):
            env.reset(seed=0, options={"speed": 2.0})

    def test_observation_in_space(self):
        for params in PARAM_SETS:
            with self.subTest(params=params):
                env = navigation_v0.env(**params)
                obs, _ = env.reset(seed=3)

                self.assertTrue(env.observation_space.contains(obs))


if __name__ == "__main__":
    unittest.main()
