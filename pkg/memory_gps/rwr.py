"""
Reward-weighted regression baseline with a linear policy over augmented
observations.
"""
import logging
from dataclasses import dataclass

import numpy as np

from memory_gps import settings as app_settings
from memory_gps.exceptions import EmptySampleSet, IterationFailed, MemoryGPSException
from memory_gps.gps import SAMPLING, IterationMetrics, evaluate
from memory_gps.memory import AugmentedSpec, augment_rollout
from memory_gps.policy import LinearPolicy
from memory_gps.types import resolve_architecture
from memory_gps.utils import make_rng, symmetrize

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RWRRun:
    task: object
    aug: AugmentedSpec
    policy: LinearPolicy
    config: dict
    seed: int
    method: str = 'rwr'
    iteration: int = 0
    previous_cost: float = None

    runner = 'rwr'

    @property
    def num_conditions(self):
        return self.task.num_conditions

    def checkpoint_sections(self):
        return {
            'previous_cost': [np.nan if self.previous_cost is None else self.previous_cost]
        }

    @classmethod
    def from_checkpoint(cls, task, aug, policy, config, meta, sections):
        previous_cost = float(sections['previous_cost'][0, 0])
        return cls(
            task=task,
            aug=aug,
            policy=policy,
            config=config,
            seed=int(meta['seed']),
            method=meta['method'],
            iteration=int(meta['iteration']),
            previous_cost=None if np.isnan(previous_cost) else previous_cost,
        )


def initialize_rwr(task, config, seed=None):
    experiment = config['experiment']
    seed = experiment['seed'] if seed is None else seed
    d_h, _ = resolve_architecture(config)
    aug = AugmentedSpec(task.spec, d_h, config['memory']['noise_variance'])
    variance = config['rwr']['initial_variance']
    policy = LinearPolicy(aug.d_o, aug.d_u, d_h, covariance=variance * np.eye(aug.d_u))
    logger.info('initialized rwr on %s: d_h=%d, linear policy', task.name, d_h)
    return RWRRun(
        task=task, aug=aug, policy=policy, config=config, seed=int(seed), method=experiment['method']
    )


def effective_sample_size(weights):
    weights = np.asarray(weights, dtype=float)
    return float(weights.sum() ** 2 / np.sum(weights ** 2))


def rwr_weights(costs, beta=None):
    """
    Normalized ``exp(-beta * cost)`` weights. Without ``beta`` the
    temperature is chosen by bisection so that the effective sample size
    lies in ``[N/3, N/2]``; identical costs give uniform weights.
    Returns ``(weights, beta)``.
    """
    costs = np.asarray(costs, dtype=float)
    count = costs.size
    if count == 0:
        raise EmptySampleSet('cannot weight an empty set of costs')
    shifted = costs - costs.min()

    def weigh(b):
        w = np.exp(-b * shifted)
        return w / w.sum()

    if beta is not None:
        return weigh(beta), beta
    spread = shifted.max()
    if spread == 0.0:
        return np.full(count, 1.0 / count), 0.0
    lower, upper = count / 3.0, count / 2.0
    lo, hi = 0.0, 1.0 / spread
    for _ in range(app_settings.RWR_MAX_EXPANSIONS):
        if effective_sample_size(weigh(hi)) <= upper:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(app_settings.RWR_MAX_BISECTIONS):
        if lower <= effective_sample_size(weigh(hi)) <= upper:
            break
        mid = 0.5 * (lo + hi)
        ess = effective_sample_size(weigh(mid))
        if ess > upper:
            lo = mid
        else:
            hi = mid
    else:
        logger.debug('rwr temperature search ended outside the target band at beta=%.3e', hi)
    return weigh(hi), hi


def weighted_affine_fit(inputs, targets, weights, reg=None):
    """
    Weighted least squares ``targets ~ W inputs + b`` with a small ridge on
    ``W``. Returns ``(W, b, residual covariance)``.
    """
    if reg is None:
        reg = app_settings.RWR_REGULARIZATION
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    count, d_in = inputs.shape
    design = np.hstack([inputs, np.ones((count, 1))])
    root = np.sqrt(weights)[:, None]
    lhs = root * design
    rhs = root * targets
    if reg > 0:
        ridge = np.hstack([np.sqrt(reg) * np.eye(d_in), np.zeros((d_in, 1))])
        lhs = np.vstack([lhs, ridge])
        rhs = np.vstack([rhs, np.zeros((d_in, targets.shape[1]))])
    coef = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    residual = targets - design @ coef
    cov = symmetrize((weights[:, None] * residual).T @ residual / weights.sum())
    return coef[:-1].T, coef[-1], cov


def rwr_iteration(run):
    """
    Rolls out ``N`` samples round-robin over the conditions, reweights them
    by total cost and refits the linear policy; the exploration covariance
    moves toward the weighted residual covariance.
    """
    iteration = run.iteration + 1
    rwr_config = run.config['rwr']
    task, aug, policy = run.task, run.aug, run.policy
    count = rwr_config['samples']
    if count < 2:
        raise EmptySampleSet(f'rwr needs at least 2 samples per iteration, got {count}')
    try:
        samples = []
        for index in range(count):
            condition = index % run.num_conditions
            rng = make_rng(run.seed, iteration, index, SAMPLING)
            samples.append(augment_rollout(task, aug, policy, condition, rng))
        costs = np.array([s.total_cost for s in samples])
        weights, beta = rwr_weights(costs)
        horizon = aug.horizon
        W, b, residual = weighted_affine_fit(
            np.concatenate([s.o for s in samples]),
            np.concatenate([s.u for s in samples]),
            np.repeat(weights, horizon),
        )
        shrink = rwr_config['covariance_shrink']
        covariance = (1.0 - shrink) * policy.covariance + shrink * residual
        covariance += app_settings.RWR_COVARIANCE_FLOOR * np.eye(aug.d_u)
        policy.W, policy.b = W, b
        policy.set_covariance(covariance)
        distances = evaluate(policy, task, aug)
    except MemoryGPSException as e:
        raise IterationFailed(str(e), iteration) from e
    mean_cost = float(costs.mean())
    run.previous_cost = mean_cost
    run.iteration = iteration
    metrics = IterationMetrics(
        iteration=iteration,
        samples=iteration * count,
        distances=distances,
        mean_cost=mean_cost,
        epsilon=float('nan'),
        nu=float('nan'),
        eta=[beta],
    )
    logger.info(
        'rwr iteration %d: %d samples, mean cost %.4g, beta %.3g, ess %.2f, distances %s',
        iteration,
        metrics.samples,
        mean_cost,
        beta,
        effective_sample_size(weights),
        ' '.join(f'{d:.4f}' for d in distances),
    )
    return metrics
