"""
Partially observed benchmark tasks. Every task exposes the true state to
the trajectory controllers while ``observe`` restricts what the policy sees.
Time ``t`` counts from 1 to T in this module.
"""
import abc
import logging
from dataclasses import dataclass, field

import numpy as np

from memory_gps.core import TrajectorySample
from memory_gps.exceptions import DimensionMismatch, ImproperlyConfigured

logger = logging.getLogger(__name__)

NAV_HORIZON = 40
NAV_DT = 0.05
NAV_TARGET = (0.5, 0.5)
NAV_SQUARE_SIDE = 0.8
PEGSORT_HORIZON = 30
PEGSORT_DT = 0.05
PEGSORT_START = (0.0, 0.0)
PEGSORT_TARGETS = ((0.5, -0.5), (-0.5, -0.5))
GOAL_WEIGHT = 1.0
WAYPOINT_WEIGHT = 10.0
ACTION_WEIGHT = 1e-3


@dataclass(frozen=True, eq=False)
class EnvSpec:
    d_x: int
    d_u: int
    d_o: int
    horizon: int
    dt: float
    conditions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.horizon < 2:
            raise ImproperlyConfigured(
                f'horizon must be at least 2, got {self.horizon}', field='horizon'
            )
        conditions = tuple(np.asarray(c, dtype=float) for c in self.conditions)
        for c in conditions:
            if c.shape != (self.d_x,):
                raise DimensionMismatch(
                    f'condition of shape {c.shape} does not match d_x={self.d_x}'
                )
        object.__setattr__(self, 'conditions', conditions)


@dataclass(frozen=True, eq=False)
class CostSpec:
    """
    ``goal_weights[t - 1] * ||x - goal||^2 + action_weight * ||u||^2``.
    """

    goal_weights: tuple
    action_weight: float
    targets: tuple

    def __post_init__(self):
        goal_weights = np.asarray(self.goal_weights, dtype=float)
        if np.any(goal_weights < 0) or self.action_weight < 0:
            raise ImproperlyConfigured('cost weights must be non-negative', field='goal_weights')
        object.__setattr__(self, 'goal_weights', goal_weights)
        object.__setattr__(
            self, 'targets', tuple(np.asarray(t, dtype=float) for t in self.targets)
        )


def goal_weight_schedule(horizon, waypoint=True):
    weights = np.full(horizon, GOAL_WEIGHT)
    weights[horizon - 1] = WAYPOINT_WEIGHT
    if waypoint:
        weights[horizon // 2 - 1] = WAYPOINT_WEIGHT
    return weights


def _check_time(t, horizon):
    if not 1 <= t <= horizon:
        raise DimensionMismatch(f't={t} is outside 1..{horizon}')


def quadratic_goal_cost(x, u, goal, goal_weight, action_weight):
    diff = np.asarray(x, dtype=float) - goal
    u = np.asarray(u, dtype=float)
    return float(goal_weight * diff @ diff + action_weight * u @ u)


# navigation-and-return
def nav_step(x, u, dt=NAV_DT):
    return np.asarray(x, dtype=float) + dt * np.asarray(u, dtype=float)


def nav_cost(x, u, t, target, origin, horizon=NAV_HORIZON, goal_weights=None,
             action_weight=ACTION_WEIGHT):
    """
    Distance to ``target`` during the first half of the episode and to the
    condition's ``origin`` afterwards, plus control effort.
    """
    _check_time(t, horizon)
    if goal_weights is None:
        goal_weights = goal_weight_schedule(horizon)
    goal = np.asarray(target if t <= horizon // 2 else origin, dtype=float)
    return quadratic_goal_cost(x, u, goal, goal_weights[t - 1], action_weight)


def nav_observe(x, t):
    # only the current position: neither origin nor phase
    return np.array(x, dtype=float)


# peg sorting (point-mass analog)
def pegsort_step(x, u, t, dt=PEGSORT_DT):
    x = np.asarray(x, dtype=float)
    if t == 1:
        return x.copy()
    return x + dt * np.asarray(u, dtype=float)


def pegsort_observe(x, t, cue):
    cue = np.asarray(cue, dtype=float) if t == 1 else np.zeros(len(cue))
    return np.concatenate([np.asarray(x, dtype=float), cue])


class Task(abc.ABC):
    """
    A task bundles its EnvSpec and CostSpec with step/observe/cost and the
    evaluation metric. ``condition`` is always the index of a training
    condition.
    """

    name = None
    success_threshold = None

    def __init__(self, spec, cost_spec):
        self.spec = spec
        self.cost_spec = cost_spec

    @property
    def num_conditions(self):
        return len(self.spec.conditions)

    def initial_state(self, condition):
        return self.spec.conditions[condition].copy()

    @abc.abstractmethod
    def step(self, x, u, t):
        pass

    @abc.abstractmethod
    def observe(self, x, t, condition):
        pass

    @abc.abstractmethod
    def goal(self, t, condition):
        pass

    @abc.abstractmethod
    def metric(self, states, condition):
        pass

    def cost(self, x, u, t, condition):
        _check_time(t, self.spec.horizon)
        return quadratic_goal_cost(
            x,
            u,
            self.goal(t, condition),
            self.cost_spec.goal_weights[t - 1],
            self.cost_spec.action_weight,
        )

    def cost_derivatives(self, x, u, t, condition):
        """
        Exact (l, lx, lu, lxx, luu, lux) of the quadratic stage cost.
        """
        d_x, d_u = self.spec.d_x, self.spec.d_u
        w_g = self.cost_spec.goal_weights[t - 1]
        w_u = self.cost_spec.action_weight
        x, u = np.asarray(x, dtype=float), np.asarray(u, dtype=float)
        diff = x - self.goal(t, condition)
        return (
            self.cost(x, u, t, condition),
            2.0 * w_g * diff,
            2.0 * w_u * u,
            2.0 * w_g * np.eye(d_x),
            2.0 * w_u * np.eye(d_u),
            np.zeros((d_u, d_x)),
        )


class NavigationTask(Task):
    name = 'nav'
    success_threshold = 0.10

    def __init__(self, horizon=NAV_HORIZON, dt=NAV_DT, target=NAV_TARGET,
                 side=NAV_SQUARE_SIDE):
        target = np.asarray(target, dtype=float)
        half = side / 2.0
        corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
        spec = EnvSpec(
            d_x=2,
            d_u=2,
            d_o=2,
            horizon=horizon,
            dt=dt,
            conditions=tuple(target + np.array(c) for c in corners),
        )
        cost_spec = CostSpec(
            goal_weights=goal_weight_schedule(horizon, waypoint=True),
            action_weight=ACTION_WEIGHT,
            targets=(target,),
        )
        super().__init__(spec, cost_spec)
        self.target = target

    def step(self, x, u, t):
        return nav_step(x, u, self.spec.dt)

    def observe(self, x, t, condition):
        return nav_observe(x, t)

    def goal(self, t, condition):
        if t <= self.spec.horizon // 2:
            return self.target
        return self.spec.conditions[condition]

    def metric(self, states, condition):
        half = self.spec.horizon // 2
        states = np.asarray(states, dtype=float)
        origin = self.spec.conditions[condition]
        to_target = np.linalg.norm(states[:half] - self.target, axis=1).min()
        to_origin = np.linalg.norm(states[half:] - origin, axis=1).min()
        return float(max(to_target, to_origin))


class PegSortTask(Task):
    name = 'pegsort'
    success_threshold = 0.05

    def __init__(self, horizon=PEGSORT_HORIZON, dt=PEGSORT_DT, start=PEGSORT_START,
                 targets=PEGSORT_TARGETS):
        start = np.asarray(start, dtype=float)
        spec = EnvSpec(
            d_x=2,
            d_u=2,
            d_o=4,
            horizon=horizon,
            dt=dt,
            conditions=tuple(start for _ in targets),
        )
        cost_spec = CostSpec(
            goal_weights=goal_weight_schedule(horizon, waypoint=False),
            action_weight=ACTION_WEIGHT,
            targets=targets,
        )
        super().__init__(spec, cost_spec)

    def step(self, x, u, t):
        return pegsort_step(x, u, t, self.spec.dt)

    def observe(self, x, t, condition):
        return pegsort_observe(x, t, self.cost_spec.targets[condition])

    def goal(self, t, condition):
        return self.cost_spec.targets[condition]

    def metric(self, states, condition):
        states = np.asarray(states, dtype=float)
        times = np.arange(1, len(states) + 1)
        final = states[times > 0.75 * self.spec.horizon]
        target = self.cost_spec.targets[condition]
        return float(np.linalg.norm(final - target, axis=1).min())


def evaluate_metric(rollout, task, condition):
    """
    Per-condition success distance of a rollout (physical states are the
    first d_x coordinates of ``rollout.x``).
    """
    states = rollout.x[:, : task.spec.d_x]
    if len(states) != task.spec.horizon:
        raise DimensionMismatch(
            f'rollout has {len(states)} steps, task horizon is {task.spec.horizon}'
        )
    return task.metric(states, condition)


def rollout(task, condition, actions):
    """
    Deterministic rollout of ``actions`` (T, d_u) from the condition's
    initial state.
    """
    actions = np.asarray(actions, dtype=float)
    horizon = task.spec.horizon
    if actions.shape != (horizon, task.spec.d_u):
        raise DimensionMismatch(f'actions must have shape {(horizon, task.spec.d_u)}')
    xs = np.zeros((horizon, task.spec.d_x))
    os = np.zeros((horizon, task.spec.d_o))
    costs = np.zeros(horizon)
    x = task.initial_state(condition)
    for step in range(horizon):
        t = step + 1
        xs[step] = x
        os[step] = task.observe(x, t, condition)
        costs[step] = task.cost(x, actions[step], t, condition)
        x = task.step(x, actions[step], t)
    return TrajectorySample(x=xs, o=os, u=actions, cost=costs)
