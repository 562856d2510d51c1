"""Robot models, action clamping and propagation."""

import math
import unittest

import numpy as np

from rlrrt.env.dynamics import (
    MAX_SPEED,
    AsteroidState,
    CarState,
    DiffDriveState,
    DynamicsError,
    DynamicsParams,
    RobotAction,
    RobotKind,
    clamp_action,
    propagate,
    state_at_rest,
    state_distance_euclidean,
    state_from_array,
    step_count,
    wrap_angle,
)


class TestPropagate(unittest.TestCase):
    def test_diff_drive_straight_line(self):
        """Full speed ahead for one second moves one meter along x."""
        out = propagate(DiffDriveState(0.0, 0.0), RobotAction(RobotKind.DIFF_DRIVE, 1.0, 0.0), 1.0)

        self.assertAlmostEqual(out.x, 1.0, places=9)
        self.assertAlmostEqual(out.y, 0.0, places=9)
        self.assertAlmostEqual(out.theta, 0.0, places=9)
        self.assertEqual(out.v, 1.0)

    def test_diff_drive_turn_in_place(self):
        out = propagate(
            DiffDriveState(1.0, 2.0), RobotAction(RobotKind.DIFF_DRIVE, 0.0, 1.0), 0.5
        )

        self.assertEqual((out.x, out.y), (1.0, 2.0))
        self.assertAlmostEqual(out.theta, 0.5, places=9)

    def test_asteroid_drag_decay(self):
        """With zero thrust the speed decays as exp(-kappa t)."""
        start = AsteroidState(0.0, 0.0, xdot=1.0)
        coast = RobotAction(RobotKind.ASTEROID, 0.0, 0.0)

        for t in (0.5, 1.0, 2.0):
            with self.subTest(t=t):
                out = propagate(start, coast, t)
                self.assertAlmostEqual(out.xdot, math.exp(-t), delta=1e-3)
                self.assertEqual(out.ydot, 0.0)

    def test_asteroid_terminal_speed(self):
        """Constant thrust settles at thrust / kappa."""
        out = propagate(AsteroidState(0.0, 0.0), RobotAction(RobotKind.ASTEROID, 1.0, 0.0), 7.0)

        self.assertAlmostEqual(out.speed, 1.0, delta=0.01)
        self.assertLessEqual(out.speed, MAX_SPEED)

    def test_asteroid_kappa(self):
        params = DynamicsParams(kappa=2.0)
        out = propagate(
            AsteroidState(0.0, 0.0, xdot=1.0), RobotAction(RobotKind.ASTEROID), 1.0, params
        )

        self.assertAlmostEqual(out.xdot, math.exp(-2.0), delta=1e-3)

    def test_car_cannot_reverse(self):
        out = propagate(CarState(5.0, 5.0, v=0.2), RobotAction(RobotKind.CAR, -1.0, 0.0), 1.0)

        self.assertEqual(out.v, 0.0)

    def test_car_steer_saturates(self):
        out = propagate(CarState(5.0, 5.0), RobotAction(RobotKind.CAR, 0.0, 1.0), 2.0)

        self.assertAlmostEqual(out.steer, math.pi / 6)

    def test_semigroup(self):
        """Two half-second propagations equal one full second."""
        cases = [
            (DiffDriveState(1.0, 1.0, 0.3), RobotAction(RobotKind.DIFF_DRIVE, 0.7, -1.2)),
            (CarState(1.0, 1.0, 0.3, v=0.5), RobotAction(RobotKind.CAR, 0.4, 0.6)),
            (AsteroidState(1.0, 1.0, 0.2, -0.1, 0.3), RobotAction(RobotKind.ASTEROID, 0.8, 0.2)),
        ]
        for state, action in cases:
            with self.subTest(kind=state.kind):
                halves = propagate(propagate(state, action, 0.5), action, 0.5)
                whole = propagate(state, action, 1.0)
                np.testing.assert_allclose(halves.as_array(), whole.as_array(), atol=1e-12)

    def test_heading_stays_wrapped(self):
        out = propagate(DiffDriveState(0.0, 0.0), RobotAction(RobotKind.DIFF_DRIVE, 0.0, 2.0), 3.0)

        self.assertGreater(out.theta, -math.pi)
        self.assertLessEqual(out.theta, math.pi)

    def test_invalid_duration(self):
        state = DiffDriveState(0.0, 0.0)
        action = RobotAction(RobotKind.DIFF_DRIVE)

        for duration in (0.0, -1.0, 0.015):
            with self.subTest(duration=duration), self.assertRaises(DynamicsError):
                propagate(state, action, duration)

    def test_kind_mismatch(self):
        with self.assertRaises(DynamicsError):
            propagate(DiffDriveState(0.0, 0.0), RobotAction(RobotKind.CAR), 0.1)

    def test_step_count(self):
        self.assertEqual(step_count(0.1, 0.01), 10)
        self.assertEqual(step_count(1.0, 0.01), 100)


class TestActions(unittest.TestCase):
    def test_clamp_examples(self):
        cases = [
            (RobotKind.DIFF_DRIVE, (5.0, -5.0), (1.0, -2.0)),
            (RobotKind.DIFF_DRIVE, (0.3, 0.4), (0.3, 0.4)),
            (RobotKind.CAR, (0.5, 3.0), (0.5, 1.0)),
            (RobotKind.ASTEROID, (-2.0, 0.1), (-0.5, 0.1)),
            (RobotKind.ASTEROID, (2.0, -2.0), (1.0, -0.5)),
        ]
        for kind, raw, expected in cases:
            with self.subTest(kind=kind, raw=raw):
                action = clamp_action(raw, kind)
                self.assertEqual((action.u0, action.u1), expected)

    def test_repr_names_components(self):
        self.assertIn("v_cmd", repr(RobotAction(RobotKind.DIFF_DRIVE, 0.5, 0.0)))


class TestStates(unittest.TestCase):
    def test_distance(self):
        a, b = DiffDriveState(0.0, 0.0), DiffDriveState(3.0, 4.0, theta=1.0)

        self.assertEqual(state_distance_euclidean(a, b), 5.0)
        self.assertEqual(state_distance_euclidean(b, a), 5.0)

    def test_distance_kind_mismatch(self):
        with self.assertRaises(DynamicsError):
            state_distance_euclidean(DiffDriveState(0.0, 0.0), CarState(0.0, 0.0))

    def test_array_round_trip(self):
        for kind in RobotKind:
            with self.subTest(kind=kind):
                state = state_at_rest(kind, 1.5, 2.5, 0.25)
                self.assertEqual(state_from_array(kind, state.as_array()), state)

    def test_wrap_angle(self):
        self.assertAlmostEqual(wrap_angle(1.5 * math.pi), -0.5 * math.pi)
        self.assertEqual(wrap_angle(-math.pi), math.pi)
        self.assertEqual(wrap_angle(0.0), 0.0)

    def test_invalid_params(self):
        for kwargs in ({"kappa": 0.0}, {"wheelbase": -1.0}, {"dt_integrate": 0.0}):
            with self.subTest(kwargs=kwargs), self.assertRaises(ValueError):
                DynamicsParams(**kwargs)


if __name__ == "__main__":
    unittest.main()
