"""
Memory-state augmentation: x~ = [x; h], o~ = [o; h], u~ = [u; m] with
memory dynamics h' = h + m + N(0, sigma2 I).
"""
import logging
from dataclasses import dataclass

import numpy as np

from memory_gps import settings as app_settings
from memory_gps.core import TimeVaryingController, TrajectorySample
from memory_gps.exceptions import DimensionMismatch, ImproperlyConfigured, NonFiniteValue

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AugmentedSpec:
    base: object
    d_h: int = 4
    sigma2: float = app_settings.MEMORY_NOISE_VARIANCE

    def __post_init__(self):
        if self.d_h < 0:
            raise ImproperlyConfigured(
                f'memory dimension must be non-negative, got {self.d_h}', field='memory.memory_dim'
            )
        if self.sigma2 <= 0:
            raise ImproperlyConfigured(
                f'memory noise variance must be positive, got {self.sigma2}',
                field='memory.noise_variance',
            )

    @property
    def horizon(self):
        return self.base.horizon

    @property
    def d_x(self):
        return self.base.d_x + self.d_h

    @property
    def d_o(self):
        return self.base.d_o + self.d_h

    @property
    def d_u(self):
        return self.base.d_u + self.d_h


def memory_step(h, m, sigma2=app_settings.MEMORY_NOISE_VARIANCE, noise=None):
    """
    ``h + m`` plus ``sqrt(sigma2) * noise`` when a standard-normal ``noise``
    draw is given.
    """
    h, m = np.asarray(h, dtype=float), np.asarray(m, dtype=float)
    if h.shape != m.shape:
        raise DimensionMismatch(f'memory {h.shape} and write {m.shape} differ')
    h_next = h + m
    if noise is not None:
        h_next = h_next + np.sqrt(sigma2) * np.asarray(noise, dtype=float)
    return h_next


def _check_actor(actor, aug):
    if isinstance(actor, TimeVaryingController):
        if actor.d_x != aug.d_x or actor.d_u != aug.d_u:
            raise DimensionMismatch(
                f'controller maps {actor.d_x} -> {actor.d_u}, '
                f'augmented spec needs {aug.d_x} -> {aug.d_u}'
            )
        if actor.horizon != aug.horizon:
            raise DimensionMismatch('controller horizon differs from the task horizon')
    elif actor.d_input != aug.d_o or actor.d_output != aug.d_u:
        raise DimensionMismatch(
            f'policy maps {actor.d_input} -> {actor.d_output}, '
            f'augmented spec needs {aug.d_o} -> {aug.d_u}'
        )


def augment_rollout(task, aug, actor, condition, rng=None, explore=True,
                    memory_noise=True):
    """
    Rolls ``actor`` (a TimeVaryingController acting on x~ or a policy acting
    on o~) through the augmented system. With ``rng=None`` the rollout uses
    mean actions and noise-free memory. Per step the stream is consumed as
    action noise (d_u~ draws) then memory noise (d_h draws).
    """
    _check_actor(actor, aug)
    if rng is None:
        explore = memory_noise = False
    d_u, d_h = aug.base.d_u, aug.d_h
    horizon = aug.horizon
    is_controller = isinstance(actor, TimeVaryingController)
    xs = np.zeros((horizon, aug.d_x))
    os = np.zeros((horizon, aug.d_o))
    us = np.zeros((horizon, aug.d_u))
    costs = np.zeros(horizon)
    x, h = task.initial_state(condition), np.zeros(d_h)
    for step in range(horizon):
        t = step + 1
        x_aug = np.concatenate([x, h])
        o_aug = np.concatenate([task.observe(x, t, condition), h])
        if is_controller:
            if explore:
                u_aug = actor.sample_action(step, x_aug, rng)
            else:
                u_aug = actor.mean_action(step, x_aug)
        elif explore:
            u_aug = actor.policy_sample(o_aug, rng)
        else:
            u_aug = actor.policy_mean(o_aug)
        if not np.all(np.isfinite(u_aug)) or not np.all(np.isfinite(x_aug)):
            raise NonFiniteValue(
                f'non-finite state or action at t={t} of condition {condition}: '
                f'x~={x_aug}, u~={u_aug}'
            )
        xs[step], os[step], us[step] = x_aug, o_aug, u_aug
        u, m = u_aug[:d_u], u_aug[d_u:]
        costs[step] = task.cost(x, u, t, condition)
        noise = rng.standard_normal(d_h) if memory_noise else None
        x = task.step(x, u, t)
        h = memory_step(h, m, aug.sigma2, noise)
    return TrajectorySample(x=xs, o=os, u=us, cost=costs)


def rnn_view(policy):
    """
    Reads a memory policy as a recurrent network: phi(o, h) -> u is the
    physical head, psi(o, h) -> h' adds the memory head to h.
    """
    d_u = policy.d_output - policy.d_h

    def phi(o, h):
        return policy.policy_mean(np.concatenate([o, h]))[:d_u]

    def psi(o, h):
        return h + policy.policy_mean(np.concatenate([o, h]))[d_u:]

    return phi, psi


def rnn_rollout(task, policy, condition):
    """
    Iterates (u, h') = (phi(o, h), psi(o, h)) from h = 0. Returns the trace
    in augmented coordinates with m = h' - h.
    """
    phi, psi = rnn_view(policy)
    horizon, d_h = task.spec.horizon, policy.d_h
    d_x, d_o, d_u = task.spec.d_x, task.spec.d_o, task.spec.d_u
    xs = np.zeros((horizon, d_x + d_h))
    os = np.zeros((horizon, d_o + d_h))
    us = np.zeros((horizon, d_u + d_h))
    costs = np.zeros(horizon)
    x, h = task.initial_state(condition), np.zeros(d_h)
    for step in range(horizon):
        t = step + 1
        o = task.observe(x, t, condition)
        u, h_next = phi(o, h), psi(o, h)
        xs[step] = np.concatenate([x, h])
        os[step] = np.concatenate([o, h])
        us[step] = np.concatenate([u, h_next - h])
        costs[step] = task.cost(x, u, t, condition)
        x, h = task.step(x, u, t), h_next
    return TrajectorySample(x=xs, o=os, u=us, cost=costs)
