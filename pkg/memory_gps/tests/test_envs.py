from unittest import TestCase

import numpy as np

from memory_gps.envs import (
    NAV_HORIZON,
    CostSpec,
    EnvSpec,
    NavigationTask,
    PegSortTask,
    evaluate_metric,
    goal_weight_schedule,
    nav_cost,
    nav_observe,
    nav_step,
    pegsort_observe,
    pegsort_step,
    rollout,
)
from memory_gps.exceptions import DimensionMismatch, ImproperlyConfigured
from memory_gps.utils import make_rng


class TestNavigation(TestCase):
    def setUp(self):
        self.task = NavigationTask()

    def test_step(self):
        np.testing.assert_array_equal(nav_step([0.0, 0.0], [0.0, 0.0]), [0.0, 0.0])
        np.testing.assert_allclose(nav_step([1.0, 2.0], [1.0, -1.0], dt=0.1), [1.1, 1.9])
        x, u = np.array([0.3, -0.7]), np.array([2.0, 0.5])
        np.testing.assert_array_equal(self.task.step(x, u, 3), x + 0.05 * u)

    def test_observe_position_only(self):
        np.testing.assert_array_equal(nav_observe([3.0, 4.0], 1), [3.0, 4.0])
        np.testing.assert_array_equal(nav_observe([3.0, 4.0], NAV_HORIZON), [3.0, 4.0])

    def test_conditions(self):
        self.assertEqual(self.task.num_conditions, 4)
        for condition in range(4):
            origin = self.task.initial_state(condition)
            self.assertAlmostEqual(np.linalg.norm(origin - self.task.target), 0.4 * np.sqrt(2))
            self.assertTrue(np.all((origin >= 0.0) & (origin <= 1.0)))

    def test_cost(self):
        target = self.task.target
        origin = self.task.initial_state(2)
        self.assertEqual(nav_cost(target, [0.0, 0.0], 1, target, origin), 0.0)
        self.assertEqual(nav_cost(origin, [0.0, 0.0], NAV_HORIZON, target, origin), 0.0)
        with self.subTest('weighted squared distances'):
            x, u = np.array([0.2, 0.1]), np.array([1.0, -2.0])
            half = NAV_HORIZON // 2
            cases = [
                (1, target, 1.0),
                (half, target, 10.0),
                (half + 1, origin, 1.0),
                (NAV_HORIZON, origin, 10.0),
            ]
            for t, goal, weight in cases:
                expected = weight * np.sum((x - goal) ** 2) + 1e-3 * np.sum(u ** 2)
                self.assertAlmostEqual(self.task.cost(x, u, t, 2), expected, places=12)
        with self.subTest('time outside the episode'):
            with self.assertRaises(DimensionMismatch):
                self.task.cost(x, u, 0, 2)

    def test_goal_weights(self):
        weights = goal_weight_schedule(40)
        self.assertEqual(weights[39], 10.0)
        self.assertEqual(weights[19], 10.0)
        self.assertEqual(np.sum(weights == 1.0), 38)
        self.assertEqual(np.sum(goal_weight_schedule(30, waypoint=False) == 10.0), 1)

    def test_cost_derivatives(self):
        x, u = np.array([0.2, 0.1]), np.array([1.0, -2.0])
        l, lx, lu, lxx, luu, lux = self.task.cost_derivatives(x, u, 25, 1)
        origin = self.task.initial_state(1)
        self.assertEqual(l, self.task.cost(x, u, 25, 1))
        np.testing.assert_allclose(lx, 2.0 * (x - origin))
        np.testing.assert_allclose(lu, 2e-3 * u)
        np.testing.assert_allclose(lxx, 2.0 * np.eye(2))
        np.testing.assert_allclose(luu, 2e-3 * np.eye(2))
        self.assertFalse(np.any(lux))

    def test_metric(self):
        half = NAV_HORIZON // 2
        for condition in range(4):
            origin = self.task.initial_state(condition)
            with self.subTest('pinned at target then origin', condition=condition):
                states = np.vstack([np.tile(self.task.target, (half, 1)), np.tile(origin, (half, 1))])
                self.assertEqual(self.task.metric(states, condition), 0.0)
            with self.subTest('pinned at origin', condition=condition):
                states = np.tile(origin, (NAV_HORIZON, 1))
                self.assertAlmostEqual(
                    self.task.metric(states, condition), np.linalg.norm(origin - self.task.target)
                )

    def test_metric_scan(self):
        rng = make_rng(2)
        states = rng.uniform(0.0, 1.0, size=(NAV_HORIZON, 2))
        origin = self.task.initial_state(0)
        to_target = min(np.linalg.norm(states[t] - self.task.target) for t in range(NAV_HORIZON // 2))
        to_origin = min(
            np.linalg.norm(states[t] - origin) for t in range(NAV_HORIZON // 2, NAV_HORIZON)
        )
        self.assertAlmostEqual(self.task.metric(states, 0), max(to_target, to_origin), places=12)

    def test_zero_action_rollout(self):
        for condition in range(4):
            sample = rollout(self.task, condition, np.zeros((NAV_HORIZON, 2)))
            origin = self.task.initial_state(condition)
            self.assertTrue(np.all(sample.x == origin))
            self.assertAlmostEqual(
                evaluate_metric(sample, self.task, condition),
                np.linalg.norm(origin - self.task.target),
            )

    def test_rollout_shape_check(self):
        with self.assertRaises(DimensionMismatch):
            rollout(self.task, 0, np.zeros((NAV_HORIZON - 1, 2)))

    def test_invalid_definitions(self):
        with self.subTest('horizon'):
            with self.assertRaises(ImproperlyConfigured):
                EnvSpec(d_x=2, d_u=2, d_o=2, horizon=1, dt=0.05)
        with self.subTest('negative weight'):
            with self.assertRaises(ImproperlyConfigured):
                CostSpec(goal_weights=(1.0, -1.0), action_weight=1e-3, targets=())


class TestPegSort(TestCase):
    def setUp(self):
        self.task = PegSortTask()

    def test_step(self):
        x = np.array([0.3, -0.1])
        np.testing.assert_array_equal(pegsort_step(x, [5.0, 5.0], 1), x)
        np.testing.assert_allclose(pegsort_step([0.0, 0.0], [1.0, 0.0], 2, dt=0.1), [0.1, 0.0])

    def test_observe_cue_only_first_step(self):
        np.testing.assert_array_equal(pegsort_observe([0.0, 0.0], 1, [1.0, -1.0]), [0.0, 0.0, 1.0, -1.0])
        np.testing.assert_array_equal(pegsort_observe([0.2, 0.3], 2, [1.0, -1.0]), [0.2, 0.3, 0.0, 0.0])
        for condition in range(self.task.num_conditions):
            o = self.task.observe(self.task.initial_state(condition), 1, condition)
            np.testing.assert_array_equal(o[2:], self.task.cost_spec.targets[condition])

    def test_conditions_share_start(self):
        self.assertEqual(self.task.num_conditions, 2)
        np.testing.assert_array_equal(self.task.initial_state(0), self.task.initial_state(1))
        self.assertEqual(self.task.spec.d_o, 4)

    def test_metric_final_quarter(self):
        horizon = self.task.spec.horizon
        target = self.task.cost_spec.targets[1]
        states = np.zeros((horizon, 2))
        # at the hole only before the final quarter
        states[10] = target
        self.assertAlmostEqual(self.task.metric(states, 1), np.linalg.norm(target))
        states[horizon - 1] = target
        self.assertEqual(self.task.metric(states, 1), 0.0)
