"""
Time-varying linear-Gaussian dynamics from samples, regularized by a
normal-inverse-Wishart prior pooled over every transition of the current
iteration, and the exact block structure of the memory dynamics.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from memory_gps import settings as app_settings
from memory_gps.core import Gaussian, LinearDynamics
from memory_gps.exceptions import DimensionMismatch, EmptySampleSet
from memory_gps.utils import check_finite, project_psd, stable_cholesky, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DynamicsPrior:
    mu0: np.ndarray
    Phi: np.ndarray
    m: float
    n0: float


def _transitions(samples, d_x, d_u):
    """
    (T - 1, N, d_x + d_u + d_x) array of [x_t, u_t, x_t+1] tuples over the
    physical coordinates.
    """
    horizons = {s.horizon for s in samples}
    if len(horizons) != 1:
        raise DimensionMismatch(f'samples have different horizons: {sorted(horizons)}')
    X = np.stack([s.x[:, :d_x] for s in samples], axis=1)
    U = np.stack([s.u[:, :d_u] for s in samples], axis=1)
    check_finite('dynamics samples', X, U)
    return np.concatenate([X[:-1], U[:-1], X[1:]], axis=2)


def _physical_dims(samples, d_x, d_u):
    if d_x is None:
        d_x = samples[0].x.shape[1]
    if d_u is None:
        d_u = samples[0].u.shape[1]
    return d_x, d_u


def build_prior(samples, d_x=None, d_u=None, strength=None):
    """
    Single-Gaussian prior over (x, u, x') pooling every transition of
    ``samples`` across time steps; ``strength`` is its weight in effective
    samples.
    """
    if strength is None:
        strength = app_settings.DYNAMICS_PRIOR_STRENGTH
    if not samples:
        raise EmptySampleSet('cannot build a dynamics prior without samples')
    d_x, d_u = _physical_dims(samples, d_x, d_u)
    points = _transitions(samples, d_x, d_u).reshape(-1, 2 * d_x + d_u)
    mu0 = points.mean(axis=0)
    diff = points - mu0
    empsig = symmetrize(diff.T @ diff / points.shape[0])
    return DynamicsPrior(mu0=mu0, Phi=strength * empsig, m=strength, n0=strength)


def _fit_step(points, prior, d_xu):
    count = points.shape[0]
    empmu = points.mean(axis=0)
    diff = points - empmu
    empsig = diff.T @ diff / count
    shift = empmu - prior.mu0
    sigma = (
        count * empsig
        + prior.Phi
        + (count * prior.m) / (count + prior.m) * np.outer(shift, shift)
    ) / (count + prior.n0)
    sigma = symmetrize(sigma)
    factor, _ = stable_cholesky(sigma[:d_xu, :d_xu])
    fd = linalg.cho_solve((factor, True), sigma[:d_xu, d_xu:]).T
    fc = empmu[d_xu:] - fd @ empmu[:d_xu]
    dynsig = sigma[d_xu:, d_xu:] - fd @ sigma[:d_xu, :d_xu] @ fd.T
    return fd, fc, project_psd(dynsig, app_settings.DYNAMICS_EIGEN_FLOOR)


def fit_dynamics(samples, d_x=None, d_u=None, prior=None, prior_strength=None):
    """
    Per-step regression of x_t+1 on (x_t, u_t) over the first ``d_x`` state
    and ``d_u`` action coordinates of ``samples``. Without an explicit
    ``prior`` the pooled prior of the same samples is used.
    """
    if len(samples) < 2:
        raise EmptySampleSet(f'dynamics fitting needs at least 2 samples, got {len(samples)}')
    d_x, d_u = _physical_dims(samples, d_x, d_u)
    data = _transitions(samples, d_x, d_u)
    if prior is None:
        prior = build_prior(samples, d_x, d_u, prior_strength)
    steps = data.shape[0]
    fx = np.zeros((steps, d_x, d_x))
    fu = np.zeros((steps, d_x, d_u))
    fc = np.zeros((steps, d_x))
    F = np.zeros((steps, d_x, d_x))
    for step in range(steps):
        fd, fc[step], F[step] = _fit_step(data[step], prior, d_x + d_u)
        fx[step], fu[step] = fd[:, :d_x], fd[:, d_x:]
    return LinearDynamics(fx=fx, fu=fu, fc=fc, F=F)


def augment_fit(physical, d_h, sigma2=app_settings.MEMORY_NOISE_VARIANCE):
    """
    Extends a physical fit with the known memory dynamics:
    fx~ = [[fx, 0], [0, I]], fu~ = [[fu, 0], [0, I]], fc~ = [fc; 0] and
    F~ = blockdiag(F, sigma2 I). Memory blocks are set, never estimated.
    """
    steps, d_x, d_u = physical.fx.shape[0], physical.d_x, physical.d_u
    n_x, n_u = d_x + d_h, d_u + d_h
    fx = np.zeros((steps, n_x, n_x))
    fu = np.zeros((steps, n_x, n_u))
    fc = np.zeros((steps, n_x))
    F = np.zeros((steps, n_x, n_x))
    fx[:, :d_x, :d_x] = physical.fx
    fu[:, :d_x, :d_u] = physical.fu
    fc[:, :d_x] = physical.fc
    F[:, :d_x, :d_x] = physical.F
    fx[:, d_x:, d_x:] = np.eye(d_h)
    fu[:, d_x:, d_u:] = np.eye(d_h)
    F[:, d_x:, d_x:] = sigma2 * np.eye(d_h)
    return LinearDynamics(fx=fx, fu=fu, fc=fc, F=F)


def fit_initial_state(samples, variance=None):
    """
    Gaussian over the first (augmented) state of ``samples``; the
    covariance gets a diagonal floor so identical starts stay regular.
    """
    if variance is None:
        variance = app_settings.INITIAL_STATE_VARIANCE
    if not samples:
        raise EmptySampleSet('cannot fit an initial state without samples')
    x1 = np.stack([s.x[0] for s in samples])
    mean = x1.mean(axis=0)
    diff = x1 - mean
    cov = symmetrize(diff.T @ diff / len(samples)) + variance * np.eye(len(mean))
    return Gaussian(mean, cov)


def prediction_error(dyn, samples, d_x=None, d_u=None):
    """
    Mean squared one-step prediction error of ``dyn`` on ``samples``.
    """
    d_x, d_u = _physical_dims(samples, d_x, d_u)
    data = _transitions(samples, d_x, d_u)
    xu, target = data[..., : d_x + d_u], data[..., d_x + d_u :]
    fd = np.concatenate([dyn.fx, dyn.fu], axis=2)
    predicted = np.einsum('sij,snj->sni', fd, xu) + dyn.fc[:, None, :]
    return float(np.mean(np.sum((predicted - target) ** 2, axis=-1)))
