"""
Gaussian and time-varying linear-Gaussian value types shared by every
other module, plus the distribution arithmetic built on them.

Time indices stored in arrays are zero-based (``step``); the environment
API in ``memory_gps.envs`` counts ``t`` from 1.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from memory_gps import settings as app_settings
from memory_gps.exceptions import (
    DimensionMismatch,
    EmptySampleSet,
    SingularCovariance,
)
from memory_gps.utils import check_finite, chol_inverse, psd_factor, symmetrize

logger = logging.getLogger(__name__)


def _frozen(array, ndim=None, name='array'):
    array = np.array(array, dtype=float)
    if ndim is not None and array.ndim != ndim:
        raise DimensionMismatch(f'{name} must have {ndim} dimensions, got {array.ndim}')
    array.flags.writeable = False
    return array


def _check_psd(name, covs):
    """
    ``covs`` is a (..., d, d) stack; every slice must be symmetric and
    positive semidefinite up to round-off.
    """
    if covs.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(covs))))
    asym = np.max(np.abs(covs - np.swapaxes(covs, -1, -2)))
    if asym > app_settings.SYMMETRY_TOLERANCE * scale:
        raise SingularCovariance(f'{name} is not symmetric (max asymmetry {asym:.3e})')
    min_eig = np.min(np.linalg.eigvalsh(covs))
    if min_eig < -app_settings.PSD_TOLERANCE * scale:
        raise SingularCovariance(f'{name} is not positive semidefinite (eigenvalue {min_eig:.3e})')


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, 1, 'mean')
        cov = _frozen(self.cov, 2, 'cov')
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimensionMismatch(
                f'cov shape {cov.shape} does not match mean dimension {mean.shape[0]}'
            )
        _check_psd('Gaussian covariance', cov)
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'cov', cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    def sample(self, rng, size=None):
        factor = psd_factor(self.cov)
        shape = (self.dim,) if size is None else (size, self.dim)
        z = rng.standard_normal(shape)
        return self.mean + z @ factor.T


@dataclass(frozen=True, eq=False)
class TimeVaryingController:
    """
    Per-step affine-Gaussian law ``u ~ N(K[s] x + k[s], C[s])``.
    """

    K: np.ndarray
    k: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        K = _frozen(self.K, 3, 'K')
        k = _frozen(self.k, 2, 'k')
        C = _frozen(self.C, 3, 'C')
        horizon, d_u, _ = K.shape
        if horizon < 1:
            raise DimensionMismatch('controller horizon must be positive')
        if k.shape != (horizon, d_u) or C.shape != (horizon, d_u, d_u):
            raise DimensionMismatch(
                f'inconsistent controller shapes K{K.shape} k{k.shape} C{C.shape}'
            )
        _check_psd('controller covariance', C)
        object.__setattr__(self, 'K', K)
        object.__setattr__(self, 'k', k)
        object.__setattr__(self, 'C', C)

    @property
    def horizon(self):
        return self.K.shape[0]

    @property
    def d_u(self):
        return self.K.shape[1]

    @property
    def d_x(self):
        return self.K.shape[2]

    @cached_property
    def noise_factor(self):
        return np.stack([psd_factor(C) for C in self.C])

    @classmethod
    def initial(cls, horizon, d_x, d_u, variance):
        return cls(
            K=np.zeros((horizon, d_u, d_x)),
            k=np.zeros((horizon, d_u)),
            C=np.tile(variance * np.eye(d_u), (horizon, 1, 1)),
        )

    def mean_action(self, step, x):
        return self.K[step] @ x + self.k[step]

    def sample_action(self, step, x, rng):
        z = rng.standard_normal(self.d_u)
        return self.mean_action(step, x) + self.noise_factor[step] @ z

    def mean_trajectory(self, dyn, x1):
        """
        Noise-free rollout of the mean law under ``dyn``; returns (xs, us).
        """
        xs = np.zeros((self.horizon, self.d_x))
        us = np.zeros((self.horizon, self.d_u))
        xs[0] = x1
        for step in range(self.horizon):
            us[step] = self.mean_action(step, xs[step])
            if step + 1 < self.horizon:
                xs[step + 1] = (
                    dyn.fx[step] @ xs[step] + dyn.fu[step] @ us[step] + dyn.fc[step]
                )
        return xs, us


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """
    ``x[s+1] ~ N(fx[s] x[s] + fu[s] u[s] + fc[s], F[s])`` for s < T - 1.
    """

    fx: np.ndarray
    fu: np.ndarray
    fc: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        fx = _frozen(self.fx, 3, 'fx')
        fu = _frozen(self.fu, 3, 'fu')
        fc = _frozen(self.fc, 2, 'fc')
        F = _frozen(self.F, 3, 'F')
        steps, d_x, _ = fx.shape
        if (
            fx.shape != (steps, d_x, d_x)
            or fu.shape[:2] != (steps, d_x)
            or fc.shape != (steps, d_x)
            or F.shape != (steps, d_x, d_x)
        ):
            raise DimensionMismatch(
                f'inconsistent dynamics shapes fx{fx.shape} fu{fu.shape} '
                f'fc{fc.shape} F{F.shape}'
            )
        _check_psd('dynamics noise covariance', F)
        object.__setattr__(self, 'fx', fx)
        object.__setattr__(self, 'fu', fu)
        object.__setattr__(self, 'fc', fc)
        object.__setattr__(self, 'F', F)

    @property
    def horizon(self):
        """
        Number of states the model spans (transitions + 1).
        """
        return self.fx.shape[0] + 1

    @property
    def d_x(self):
        return self.fx.shape[1]

    @property
    def d_u(self):
        return self.fu.shape[2]


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    x: np.ndarray
    o: np.ndarray
    u: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x, 2, 'x')
        o = _frozen(self.o, 2, 'o')
        u = _frozen(self.u, 2, 'u')
        cost = _frozen(self.cost, 1, 'cost')
        horizon = x.shape[0]
        if not (o.shape[0] == u.shape[0] == cost.shape[0] == horizon):
            raise DimensionMismatch('sample sequences must share the horizon')
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'o', o)
        object.__setattr__(self, 'u', u)
        object.__setattr__(self, 'cost', cost)

    @property
    def horizon(self):
        return self.x.shape[0]

    @property
    def total_cost(self):
        return float(np.sum(self.cost))


def inverse_with_logdet(cov, what):
    """
    Inverse and log-determinant of a covariance that must be invertible.
    """
    try:
        factor = linalg.cholesky(symmetrize(cov), lower=True)
    except linalg.LinAlgError:
        raise SingularCovariance(f'{what} is singular', np.linalg.cond(cov))
    if np.min(np.diag(factor)) ** 2 < 1e-14 * max(1.0, np.max(np.diag(cov))):
        raise SingularCovariance(f'{what} is singular', np.linalg.cond(cov))
    return chol_inverse(factor), 2.0 * np.sum(np.log(np.diag(factor)))


def gaussian_kl(p, q):
    """
    Closed-form KL(p || q) in nats.
    """
    if p.dim != q.dim:
        raise DimensionMismatch(f'cannot compare dimensions {p.dim} and {q.dim}')
    q_inv, q_logdet = inverse_with_logdet(q.cov, 'q covariance')
    sign, p_logdet = np.linalg.slogdet(p.cov) if p.dim else (1.0, 0.0)
    if sign <= 0:
        return np.inf
    diff = q.mean - p.mean
    kl = 0.5 * (
        np.trace(q_inv @ p.cov) + diff @ q_inv @ diff - p.dim + q_logdet - p_logdet
    )
    return max(float(kl), 0.0)


def propagate(dyn, ctrl, mean, cov):
    """
    Array form of ``forward_marginals``. Returns state means (T, d_x),
    state covariances (T, d_x, d_x), joint means (T, d_x + d_u) and joint
    covariances.
    """
    if dyn.horizon != ctrl.horizon:
        raise DimensionMismatch(
            f'dynamics span {dyn.horizon} steps, controller {ctrl.horizon}'
        )
    if dyn.d_x != ctrl.d_x or dyn.d_u != ctrl.d_u or mean.shape[0] != ctrl.d_x:
        raise DimensionMismatch('dynamics, controller and initial state disagree')
    horizon, d_x, d_u = ctrl.horizon, ctrl.d_x, ctrl.d_u
    state_mu = np.zeros((horizon, d_x))
    state_sigma = np.zeros((horizon, d_x, d_x))
    joint_mu = np.zeros((horizon, d_x + d_u))
    joint_sigma = np.zeros((horizon, d_x + d_u, d_x + d_u))
    mu, sigma = np.asarray(mean, dtype=float), np.asarray(cov, dtype=float)
    for step in range(horizon):
        K = ctrl.K[step]
        state_mu[step], state_sigma[step] = mu, sigma
        joint_mu[step, :d_x] = mu
        joint_mu[step, d_x:] = K @ mu + ctrl.k[step]
        joint_sigma[step, :d_x, :d_x] = sigma
        joint_sigma[step, :d_x, d_x:] = sigma @ K.T
        joint_sigma[step, d_x:, :d_x] = K @ sigma
        joint_sigma[step, d_x:, d_x:] = K @ sigma @ K.T + ctrl.C[step]
        joint_sigma[step] = symmetrize(joint_sigma[step])
        if step + 1 < horizon:
            f = np.hstack([dyn.fx[step], dyn.fu[step]])
            mu = f @ joint_mu[step] + dyn.fc[step]
            sigma = symmetrize(f @ joint_sigma[step] @ f.T + dyn.F[step])
    return state_mu, state_sigma, joint_mu, joint_sigma


def forward_marginals(dyn, ctrl, init):
    """
    State marginals and joint state-action marginals induced by ``ctrl``
    under ``dyn`` from ``init``; two lists of ``Gaussian`` of length T.
    """
    state_mu, state_sigma, joint_mu, joint_sigma = propagate(
        dyn, ctrl, init.mean, init.cov
    )
    states = [Gaussian(m, s) for m, s in zip(state_mu, state_sigma)]
    joints = [Gaussian(m, s) for m, s in zip(joint_mu, joint_sigma)]
    return states, joints


def linearize_policy(samples, policy, reg=None):
    """
    Per-step least-squares affine fit of the policy mean, as a function of
    the sampled (augmented) states. The covariance is the policy's own.
    """
    if reg is None:
        reg = app_settings.POLICY_LINEARIZATION_REG
    if not samples:
        raise EmptySampleSet('cannot linearize a policy on an empty sample set')
    X = np.stack([s.x for s in samples], axis=1)
    O = np.stack([s.o for s in samples], axis=1)
    check_finite('policy linearization inputs', X, O)
    horizon, count, d_x = X.shape
    d_u = policy.d_output
    K = np.zeros((horizon, d_u, d_x))
    k = np.zeros((horizon, d_u))
    for step in range(horizon):
        U = policy.policy_mean(O[step])
        x_mean, u_mean = X[step].mean(axis=0), U.mean(axis=0)
        design = X[step] - x_mean
        target = U - u_mean
        if reg > 0:
            design = np.vstack([design, np.sqrt(reg) * np.eye(d_x)])
            target = np.vstack([target, np.zeros((d_x, d_u))])
        solution = np.linalg.lstsq(design, target, rcond=None)[0]
        K[step] = solution.T
        k[step] = u_mean - K[step] @ x_mean
    C = np.tile(policy.covariance, (horizon, 1, 1))
    return TimeVaryingController(K=K, k=k, C=C)
