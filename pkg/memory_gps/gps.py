"""
Outer loop of guided policy search with memory states: sampling, dynamics
fitting, alternating controller (C-step) and supervised policy (S-step)
updates, and the dual/penalty schedules.
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from memory_gps import settings as app_settings
from memory_gps.core import TimeVaryingController, inverse_with_logdet, linearize_policy
from memory_gps.dynfit import augment_fit, build_prior, fit_dynamics, fit_initial_state
from memory_gps.envs import evaluate_metric
from memory_gps.exceptions import (
    CheckpointError,
    ImproperlyConfigured,
    IterationFailed,
    MemoryGPSException,
    NonFiniteValue,
    SingularCovariance,
)
from memory_gps.memory import AugmentedSpec, augment_rollout
from memory_gps.policy import (
    MemoryPolicy,
    SupervisedDataset,
    policy_from_sections,
    policy_sections,
    train_supervised,
)
from memory_gps.trajopt import (
    add_control_effort,
    add_policy_terms,
    augment_expansion,
    kl_constrained_solve,
    task_expansion,
    traj_kl,
)
from memory_gps.types import make_task, resolve_architecture
from memory_gps.utils import make_rng, read_matrices, write_matrices

logger = logging.getLogger(__name__)

# random stream purposes, the last element of every make_rng key
SAMPLING = 0
TRAINING = 1
INITIALIZATION = 2


@dataclass(eq=False)
class IterationMetrics:
    iteration: int
    samples: int
    distances: list
    mean_cost: float
    epsilon: float
    nu: float
    eta: list = field(default_factory=list)
    agreement: float = float('nan')


@dataclass(eq=False)
class GPSRun:
    task: object
    aug: AugmentedSpec
    policy: MemoryPolicy
    controllers: list
    lambdas: list
    nu: np.ndarray
    epsilon: float
    config: dict
    seed: int
    method: str = 'memgps'
    iteration: int = 0
    previous_cost: float = None

    runner = 'gps'

    @property
    def num_conditions(self):
        return self.task.num_conditions

    def checkpoint_sections(self):
        sections = {
            'nu': self.nu,
            'epsilon': [self.epsilon],
            'previous_cost': [np.nan if self.previous_cost is None else self.previous_cost],
        }
        for condition, (ctrl, lam) in enumerate(zip(self.controllers, self.lambdas)):
            sections[f'K{condition}'] = ctrl.K
            sections[f'k{condition}'] = ctrl.k
            sections[f'C{condition}'] = ctrl.C
            sections[f'lambda{condition}'] = lam
        return sections

    @classmethod
    def from_checkpoint(cls, task, aug, policy, config, meta, sections):
        horizon, d_x, d_u = aug.horizon, aug.d_x, aug.d_u
        controllers, lambdas = [], []
        for condition in range(task.num_conditions):
            controllers.append(
                TimeVaryingController(
                    K=sections[f'K{condition}'].reshape(horizon, d_u, d_x),
                    k=sections[f'k{condition}'],
                    C=sections[f'C{condition}'].reshape(horizon, d_u, d_u),
                )
            )
            lambdas.append(sections[f'lambda{condition}'].copy())
        previous_cost = float(sections['previous_cost'][0, 0])
        return cls(
            task=task,
            aug=aug,
            policy=policy,
            controllers=controllers,
            lambdas=lambdas,
            nu=sections['nu'][0].copy(),
            epsilon=float(sections['epsilon'][0, 0]),
            config=config,
            seed=int(meta['seed']),
            method=meta['method'],
            iteration=int(meta['iteration']),
            previous_cost=None if np.isnan(previous_cost) else previous_cost,
        )


def initialize_run(task, config, seed=None):
    """
    Zero-mean exploratory controllers, zero multipliers and a freshly
    initialized policy over the augmented spaces.
    """
    experiment = config['experiment']
    seed = experiment['seed'] if seed is None else seed
    d_h, hidden = resolve_architecture(config)
    aug = AugmentedSpec(task.spec, d_h, config['memory']['noise_variance'])
    variance = config['trajopt']['initial_variance']
    policy = MemoryPolicy(
        (aug.d_o, *hidden, aug.d_u),
        d_h,
        rng=make_rng(seed, 0, 0, INITIALIZATION),
        covariance=variance * np.eye(aug.d_u),
    )
    controllers = [
        TimeVaryingController.initial(aug.horizon, aug.d_x, aug.d_u, variance)
        for _ in range(task.num_conditions)
    ]
    lambdas = [np.zeros((aug.horizon, aug.d_u)) for _ in range(task.num_conditions)]
    nu = np.full(aug.horizon, float(config['gps']['nu_initial']))
    logger.info(
        'initialized %s on %s: d_h=%d, policy %s, %d conditions',
        experiment['method'],
        task.name,
        d_h,
        policy.layer_sizes,
        task.num_conditions,
    )
    return GPSRun(
        task=task,
        aug=aug,
        policy=policy,
        controllers=controllers,
        lambdas=lambdas,
        nu=nu,
        epsilon=float(config['trajopt']['epsilon']),
        config=config,
        seed=int(seed),
        method=experiment['method'],
    )


def collect_samples(task, aug, controller, condition, count, rng):
    """
    ``count`` exploratory rollouts of ``controller`` from ``condition``.
    """
    samples = []
    for index in range(count):
        try:
            samples.append(augment_rollout(task, aug, controller, condition, rng))
        except NonFiniteValue as e:
            logger.error('aborting sample %d of condition %d: %s', index, condition, e)
            raise
    return samples


def evaluate(policy, task, aug):
    """
    Per-condition metric of mean-action, noise-free rollouts of ``policy``.
    """
    return [
        evaluate_metric(augment_rollout(task, aug, policy, condition), task, condition)
        for condition in range(task.num_conditions)
    ]


def controller_targets(controller, samples):
    """
    Controller means ``K x~ + k`` at the sampled augmented states, (N, T, d_u~).
    """
    X = np.stack([s.x for s in samples])
    return np.einsum('tij,ntj->nti', controller.K, X) + controller.k


def build_dataset(samples_by_condition, controllers, nu, lambdas):
    """
    Supervised tuples of every condition, in condition order.
    """
    datasets = []
    for samples, ctrl, lam in zip(samples_by_condition, controllers, lambdas):
        count, horizon = len(samples), ctrl.horizon
        precision = np.stack(
            [
                inverse_with_logdet(C, f'controller covariance at step {step}')[0]
                for step, C in enumerate(ctrl.C)
            ]
        )
        datasets.append(
            SupervisedDataset(
                obs=np.concatenate([s.o for s in samples]),
                targets=controller_targets(ctrl, samples).reshape(count * horizon, -1),
                precision=np.tile(precision, (count, 1, 1)),
                nu=np.tile(nu, count),
                lam=np.tile(lam, (count, 1)),
            )
        )
    return SupervisedDataset.concatenate(datasets)


def dual_update(lam, nu, samples, controller, policy, step_size=0.1):
    """
    ``lam + step_size * nu * mean(policy mean - controller mean)`` per step.
    """
    O = np.stack([s.o for s in samples])
    count, horizon, d_o = O.shape
    policy_means = policy.policy_mean(O.reshape(count * horizon, d_o)).reshape(count, horizon, -1)
    disagreement = np.mean(policy_means - controller_targets(controller, samples), axis=0)
    return lam + step_size * np.asarray(nu)[:, None] * disagreement


def nu_schedule(nu, factor=2.0, cap=10.0):
    return np.minimum(np.asarray(nu) * factor, cap)


def adapt_epsilon(epsilon, previous_cost, current_cost, trajopt_config):
    """
    Widens the trust region after an improving iteration, narrows it
    otherwise.
    """
    if previous_cost is None:
        return epsilon
    if current_cost < previous_cost:
        epsilon *= trajopt_config['epsilon_increase']
    else:
        epsilon *= trajopt_config['epsilon_decrease']
    return float(np.clip(epsilon, trajopt_config['epsilon_min'], trajopt_config['epsilon_max']))


def cost_expansion(run, condition, samples):
    """
    Augmented, effort-regularized and scaled task-cost expansion about the
    sample mean trajectory. ``outer_iteration`` multiplies ``nu`` and the
    multipliers by the same ``cost_scale``.
    """
    d_x, d_u = run.task.spec.d_x, run.task.spec.d_u
    xs = np.mean([s.x[:, :d_x] for s in samples], axis=0)
    us = np.mean([s.u[:, :d_u] for s in samples], axis=0)
    trajopt_config = run.config['trajopt']
    exp = augment_expansion(task_expansion(run.task, condition, xs, us), run.aug.d_h)
    exp = add_control_effort(exp, trajopt_config['control_effort'])
    return exp * trajopt_config['cost_scale']


def agreement(run, samples_by_condition, dynamics, inits):
    """
    Mean over conditions of the trajectory KL between each controller and
    the policy linearized at its samples.
    """
    values = []
    for condition, samples in enumerate(samples_by_condition):
        try:
            pi_lin = linearize_policy(samples, run.policy)
            values.append(
                traj_kl(run.controllers[condition], pi_lin, dynamics[condition], inits[condition])
            )
        except SingularCovariance:
            values.append(np.inf)
    return float(np.mean(values))


def outer_iteration(run):
    """
    Samples every condition, refits the dynamics and alternates ``L`` C-steps
    and S-steps, then updates the multipliers, ``nu`` and ``epsilon``.
    Returns the iteration's ``IterationMetrics``.
    """
    iteration = run.iteration + 1
    gps_config = run.config['gps']
    policy_config = run.config['policy']
    task, aug, policy = run.task, run.aug, run.policy
    count = gps_config['samples']
    d_x, d_u = task.spec.d_x, task.spec.d_u
    condition = None
    try:
        samples = []
        for condition in range(run.num_conditions):
            rng = make_rng(run.seed, iteration, condition, SAMPLING)
            samples.append(
                collect_samples(task, aug, run.controllers[condition], condition, count, rng)
            )
        condition = None
        if not policy.normalized:
            policy.fit_normalization(np.concatenate([s.o for group in samples for s in group]))
        mean_cost = float(np.mean([s.total_cost for group in samples for s in group]))

        prior = build_prior(
            [s for group in samples for s in group],
            d_x,
            d_u,
            run.config['dynfit']['prior_strength'],
        )
        dynamics, inits, expansions = [], [], []
        for condition, group in enumerate(samples):
            physical = fit_dynamics(group, d_x, d_u, prior)
            dynamics.append(augment_fit(physical, aug.d_h, aug.sigma2))
            inits.append(fit_initial_state(group))
            expansions.append(cost_expansion(run, condition, group))

        # the penalty is scaled with the task cost
        scale = run.config['trajopt']['cost_scale']
        nu = run.nu * scale
        reference = list(run.controllers)
        duals = [None] * run.num_conditions
        for inner in range(gps_config['inner_iterations']):
            for condition, group in enumerate(samples):
                pi_lin = linearize_policy(group, policy)
                exp = add_policy_terms(
                    expansions[condition], pi_lin, nu, run.lambdas[condition] * scale
                )
                run.controllers[condition], duals[condition] = kl_constrained_solve(
                    reference[condition],
                    dynamics[condition],
                    exp,
                    run.epsilon,
                    inits[condition],
                    entropy_weight=1.0 + nu,
                )
            condition = None
            data = build_dataset(samples, run.controllers, run.nu, run.lambdas)
            losses = train_supervised(
                data,
                policy,
                make_rng(run.seed, iteration, inner, TRAINING),
                learning_rate=policy_config['learning_rate'],
                batch_size=policy_config['batch_size'],
                steps=policy_config['steps'],
            )
            logger.debug('S-step %d of iteration %d: loss %.6g', inner + 1, iteration, losses[-1])

        for condition, group in enumerate(samples):
            run.lambdas[condition] = dual_update(
                run.lambdas[condition],
                run.nu,
                group,
                run.controllers[condition],
                policy,
                gps_config['dual_step'],
            )
        condition = None
        kl_agreement = agreement(run, samples, dynamics, inits)
        distances = evaluate(policy, task, aug)
    except MemoryGPSException as e:
        raise IterationFailed(str(e), iteration, condition) from e

    metrics = IterationMetrics(
        iteration=iteration,
        samples=iteration * count * run.num_conditions,
        distances=distances,
        mean_cost=mean_cost,
        epsilon=run.epsilon,
        nu=float(run.nu[0]),
        eta=[dual.eta for dual in duals],
        agreement=kl_agreement,
    )
    run.nu = nu_schedule(run.nu, gps_config['nu_factor'], gps_config['nu_max'])
    run.epsilon = adapt_epsilon(run.epsilon, run.previous_cost, mean_cost, run.config['trajopt'])
    run.previous_cost = mean_cost
    run.iteration = iteration
    logger.info(
        'iteration %d: %d samples, mean cost %.4g, epsilon %.3g, nu %.3g, agreement %.4g, distances %s',
        iteration,
        metrics.samples,
        mean_cost,
        metrics.epsilon,
        metrics.nu,
        kl_agreement,
        ' '.join(f'{d:.4f}' for d in distances),
    )
    return metrics


# checkpoints
def save_checkpoint(run, path):
    """
    Writes the run state next to ``path`` first and moves it in place, so
    an interrupted write keeps the previous checkpoint.
    """
    meta = {
        'runner': run.runner,
        'task': run.task.name,
        'method': run.method,
        'seed': run.seed,
        'iteration': run.iteration,
        'd_h': run.aug.d_h,
    }
    sections = run.checkpoint_sections()
    pmeta, psections = policy_sections(run.policy)
    meta.update({f'policy_{key}': value for key, value in pmeta.items()})
    sections.update({f'policy.{name}': value for name, value in psections.items()})
    tmp_path = f'{path}.tmp'
    write_matrices(tmp_path, app_settings.CHECKPOINT_HEADER, sections, meta)
    os.replace(tmp_path, path)


def load_checkpoint(path, config=None):
    """
    Rebuilds a run from ``path``. Without ``config`` the defaults for the
    stored task, method and seed are used.
    """
    meta, sections = read_matrices(path, app_settings.CHECKPOINT_HEADER)
    try:
        if config is None:
            config = app_settings.get_config(
                {'experiment': {k: meta[k] for k in ('task', 'method')}}
            )
            config['experiment']['seed'] = int(meta['seed'])
        task = make_task(meta['task'])
        aug = AugmentedSpec(task.spec, int(meta['d_h']), config['memory']['noise_variance'])
        pmeta = {k[len('policy_') :]: v for k, v in meta.items() if k.startswith('policy_')}
        psections = {
            k[len('policy.') :]: v for k, v in sections.items() if k.startswith('policy.')
        }
        policy = policy_from_sections(pmeta, psections)
        if meta['runner'] == 'rwr':
            from memory_gps.rwr import RWRRun

            cls = RWRRun
        else:
            cls = GPSRun
        return cls.from_checkpoint(task, aug, policy, config, meta, sections)
    except (KeyError, ValueError, ImproperlyConfigured) as e:
        raise CheckpointError(f'{path} is not a complete checkpoint: {e}') from e
