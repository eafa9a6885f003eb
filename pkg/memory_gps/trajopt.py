"""
KL-constrained maximum-entropy LQR over quadratic cost expansions.

Expansions are stored in absolute coordinates, the stage cost is
approximated as
``1/2 x'lxx x + 1/2 u'luu u + u'lux x + lx'x + lu'u + l0``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from memory_gps import settings as app_settings
from memory_gps.core import TimeVaryingController, inverse_with_logdet, propagate
from memory_gps.exceptions import (
    DimensionMismatch,
    DualSearchError,
    ImproperlyConfigured,
    NonFiniteValue,
    SingularCovariance,
    TrajOptError,
)
from memory_gps.utils import chol_inverse, stable_cholesky, symmetrize

logger = logging.getLogger(__name__)


def _per_step(value, horizon, name):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return np.full(horizon, float(value))
    if value.shape != (horizon,):
        raise DimensionMismatch(f'{name} must be a scalar or have shape ({horizon},)')
    return value


@dataclass(frozen=True, eq=False)
class QuadCostExpansion:
    lxx: np.ndarray
    luu: np.ndarray
    lux: np.ndarray
    lx: np.ndarray
    lu: np.ndarray
    l0: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ('lxx', 'luu', 'lux', 'lx', 'lu', 'l0'):
            arrays[name] = np.array(getattr(self, name), dtype=float)
        horizon, d_x = arrays['lx'].shape
        d_u = arrays['lu'].shape[1]
        expected = {
            'lxx': (horizon, d_x, d_x),
            'luu': (horizon, d_u, d_u),
            'lux': (horizon, d_u, d_x),
            'lu': (horizon, d_u),
            'l0': (horizon,),
        }
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise DimensionMismatch(
                    f'{name} has shape {arrays[name].shape}, expected {shape}'
                )
        arrays['lxx'] = symmetrize(arrays['lxx'])
        arrays['luu'] = symmetrize(arrays['luu'])
        for name, array in arrays.items():
            array.flags.writeable = False
            object.__setattr__(self, name, array)

    @classmethod
    def zeros(cls, horizon, d_x, d_u):
        return cls(
            lxx=np.zeros((horizon, d_x, d_x)),
            luu=np.zeros((horizon, d_u, d_u)),
            lux=np.zeros((horizon, d_u, d_x)),
            lx=np.zeros((horizon, d_x)),
            lu=np.zeros((horizon, d_u)),
            l0=np.zeros(horizon),
        )

    @property
    def horizon(self):
        return self.lx.shape[0]

    @property
    def d_x(self):
        return self.lx.shape[1]

    @property
    def d_u(self):
        return self.lu.shape[1]

    def _fields(self):
        return (self.lxx, self.luu, self.lux, self.lx, self.lu, self.l0)

    def __add__(self, other):
        if not isinstance(other, QuadCostExpansion):
            return NotImplemented
        if (other.horizon, other.d_x, other.d_u) != (self.horizon, self.d_x, self.d_u):
            raise DimensionMismatch('cannot add expansions of different dimensions')
        return QuadCostExpansion(*(a + b for a, b in zip(self._fields(), other._fields())))

    def scale(self, weight):
        """
        Multiplies every block of step ``s`` by ``weight[s]`` (or a scalar).
        """
        weight = _per_step(weight, self.horizon, 'weight')
        return QuadCostExpansion(
            lxx=self.lxx * weight[:, None, None],
            luu=self.luu * weight[:, None, None],
            lux=self.lux * weight[:, None, None],
            lx=self.lx * weight[:, None],
            lu=self.lu * weight[:, None],
            l0=self.l0 * weight,
        )

    def __mul__(self, weight):
        return self.scale(weight)

    __rmul__ = __mul__

    def evaluate(self, step, x, u):
        x, u = np.asarray(x, dtype=float), np.asarray(u, dtype=float)
        return float(
            0.5 * x @ self.lxx[step] @ x
            + 0.5 * u @ self.luu[step] @ u
            + u @ self.lux[step] @ x
            + self.lx[step] @ x
            + self.lu[step] @ u
            + self.l0[step]
        )


# expansions
def _finite_difference(cost, x, u):
    """
    Central-difference value, gradient and Hessian of ``cost(v)`` over the
    stacked vector ``v = [x; u]``.
    """
    v0 = np.concatenate([x, u])
    dim = v0.shape[0]
    grad_step = app_settings.FD_GRADIENT_STEP * (1.0 + np.abs(v0))
    hess_step = app_settings.FD_HESSIAN_STEP * (1.0 + np.abs(v0))
    value = cost(v0)
    grad = np.zeros(dim)
    hess = np.zeros((dim, dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = grad_step[i]
        grad[i] = (cost(v0 + e) - cost(v0 - e)) / (2.0 * grad_step[i])
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = hess_step[i]
        for j in range(i, dim):
            ej = np.zeros(dim)
            ej[j] = hess_step[j]
            hess[i, j] = hess[j, i] = (
                cost(v0 + ei + ej)
                - cost(v0 + ei - ej)
                - cost(v0 - ei + ej)
                + cost(v0 - ei - ej)
            ) / (4.0 * hess_step[i] * hess_step[j])
    return value, grad, symmetrize(hess)


def quadratize(cost, xs, us, derivatives=None):
    """
    Second-order expansion of ``cost(x, u, step)`` about the nominal
    trajectory ``(xs, us)``. ``derivatives(x, u, step)`` returning
    ``(l, lx, lu, lxx, luu, lux)`` is used when given; otherwise the
    derivatives come from central finite differences.
    """
    xs, us = np.asarray(xs, dtype=float), np.asarray(us, dtype=float)
    horizon, d_x = xs.shape
    d_u = us.shape[1]
    if us.shape[0] != horizon:
        raise DimensionMismatch('nominal states and actions differ in length')
    blocks = {
        'lxx': np.zeros((horizon, d_x, d_x)),
        'luu': np.zeros((horizon, d_u, d_u)),
        'lux': np.zeros((horizon, d_u, d_x)),
        'lx': np.zeros((horizon, d_x)),
        'lu': np.zeros((horizon, d_u)),
        'l0': np.zeros(horizon),
    }
    for step in range(horizon):
        x_bar, u_bar = xs[step], us[step]
        if derivatives is not None:
            value, gx, gu, hxx, huu, hux = derivatives(x_bar, u_bar, step)
        else:

            def stacked(v, step=step):
                return cost(v[:d_x], v[d_x:], step)

            value, grad, hess = _finite_difference(stacked, x_bar, u_bar)
            gx, gu = grad[:d_x], grad[d_x:]
            hxx, huu, hux = hess[:d_x, :d_x], hess[d_x:, d_x:], hess[d_x:, :d_x]
        if not all(np.all(np.isfinite(a)) for a in (value, gx, gu, hxx, huu, hux)):
            raise NonFiniteValue(f'cost expansion is not finite at step {step}')
        blocks['lxx'][step] = hxx
        blocks['luu'][step] = huu
        blocks['lux'][step] = hux
        blocks['lx'][step] = gx - hxx @ x_bar - hux.T @ u_bar
        blocks['lu'][step] = gu - huu @ u_bar - hux @ x_bar
        blocks['l0'][step] = (
            value
            - gx @ x_bar
            - gu @ u_bar
            + 0.5 * x_bar @ hxx @ x_bar
            + 0.5 * u_bar @ huu @ u_bar
            + u_bar @ hux @ x_bar
        )
    return QuadCostExpansion(**blocks)


def task_expansion(task, condition, xs, us):
    """
    Exact expansion of a task's stage cost along physical ``(xs, us)``.
    """

    def derivatives(x, u, step):
        return task.cost_derivatives(x, u, step + 1, condition)

    return quadratize(None, xs, us, derivatives=derivatives)


def augment_expansion(exp, d_h):
    """
    Embeds a physical expansion into augmented coordinates; memory states
    and memory actions carry no cost.
    """
    horizon, d_x, d_u = exp.horizon, exp.d_x, exp.d_u
    out = QuadCostExpansion.zeros(horizon, d_x + d_h, d_u + d_h)
    lxx, luu, lux = out.lxx.copy(), out.luu.copy(), out.lux.copy()
    lx, lu = out.lx.copy(), out.lu.copy()
    lxx[:, :d_x, :d_x] = exp.lxx
    luu[:, :d_u, :d_u] = exp.luu
    lux[:, :d_u, :d_x] = exp.lux
    lx[:, :d_x] = exp.lx
    lu[:, :d_u] = exp.lu
    return QuadCostExpansion(lxx=lxx, luu=luu, lux=lux, lx=lx, lu=lu, l0=exp.l0)


def add_control_effort(exp, weight):
    """
    Adds ``weight * ||u||^2`` over the full (augmented) action.
    """
    effort = QuadCostExpansion.zeros(exp.horizon, exp.d_x, exp.d_u)
    luu = np.tile(2.0 * weight * np.eye(exp.d_u), (exp.horizon, 1, 1))
    return exp + QuadCostExpansion(
        lxx=effort.lxx, luu=luu, lux=effort.lux, lx=effort.lx, lu=effort.lu, l0=effort.l0
    )


def policy_log_expansion(ctrl, weight=1.0):
    """
    Exact quadratic form of ``-weight * log ctrl(u | x)``.
    """
    weight = _per_step(weight, ctrl.horizon, 'weight')
    horizon, d_x, d_u = ctrl.horizon, ctrl.d_x, ctrl.d_u
    lxx = np.zeros((horizon, d_x, d_x))
    luu = np.zeros((horizon, d_u, d_u))
    lux = np.zeros((horizon, d_u, d_x))
    lx = np.zeros((horizon, d_x))
    lu = np.zeros((horizon, d_u))
    l0 = np.zeros(horizon)
    log_2pi = d_u * np.log(2.0 * np.pi)
    for step in range(horizon):
        P, logdet = inverse_with_logdet(ctrl.C[step], f'action covariance at step {step}')
        K, k, w = ctrl.K[step], ctrl.k[step], weight[step]
        luu[step] = w * P
        lux[step] = -w * P @ K
        lxx[step] = w * K.T @ P @ K
        lu[step] = -w * P @ k
        lx[step] = w * K.T @ P @ k
        l0[step] = w * (0.5 * k @ P @ k + 0.5 * (logdet + log_2pi))
    return QuadCostExpansion(lxx=lxx, luu=luu, lux=lux, lx=lx, lu=lu, l0=l0)


def add_policy_terms(exp, pi_lin, nu, lam):
    """
    Adds ``nu_t * (-log pi_lin(u | x))`` and ``-u' lam_t`` to ``exp``; the
    entropy half of ``nu_t KL(p || pi_lin)`` is carried by the
    ``entropy_weight`` of ``kl_constrained_solve``.
    """
    nu = _per_step(nu, exp.horizon, 'nu')
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (exp.horizon, exp.d_u):
        raise DimensionMismatch(
            f'lambda has shape {lam.shape}, expected {(exp.horizon, exp.d_u)}'
        )
    if (pi_lin.horizon, pi_lin.d_x, pi_lin.d_u) != (exp.horizon, exp.d_x, exp.d_u):
        raise DimensionMismatch('linearized policy does not match the expansion')
    out = exp
    if np.any(nu != 0):
        out = out + policy_log_expansion(pi_lin, nu)
    if np.any(lam != 0):
        out = QuadCostExpansion(
            lxx=out.lxx, luu=out.luu, lux=out.lux, lx=out.lx, lu=out.lu - lam, l0=out.l0
        )
    return out


# solvers
def maxent_lqr(dyn, exp):
    """
    Backward Riccati pass; returns ``K = -Quu^-1 Qux``, ``k = -Quu^-1 qu``
    and ``C = Quu^-1`` per step.
    """
    horizon, d_x, d_u = exp.horizon, exp.d_x, exp.d_u
    if dyn.horizon != horizon or dyn.d_x != d_x or dyn.d_u != d_u:
        raise DimensionMismatch(
            f'dynamics ({dyn.horizon}, {dyn.d_x}, {dyn.d_u}) and expansion '
            f'({horizon}, {d_x}, {d_u}) disagree'
        )
    K = np.zeros((horizon, d_u, d_x))
    k = np.zeros((horizon, d_u))
    C = np.zeros((horizon, d_u, d_u))
    V = np.zeros((d_x, d_x))
    v = np.zeros(d_x)
    for step in reversed(range(horizon)):
        Qxx, Quu, Qux = exp.lxx[step], exp.luu[step], exp.lux[step]
        qx, qu = exp.lx[step], exp.lu[step]
        if step < horizon - 1:
            fx, fu, fc = dyn.fx[step], dyn.fu[step], dyn.fc[step]
            drift = V @ fc + v
            Qxx = Qxx + fx.T @ V @ fx
            Quu = Quu + fu.T @ V @ fu
            Qux = Qux + fu.T @ V @ fx
            qx = qx + fx.T @ drift
            qu = qu + fu.T @ drift
        Quu = symmetrize(Quu)
        try:
            factor, _ = stable_cholesky(Quu)
        except SingularCovariance:
            raise TrajOptError(
                'Q_uu is not positive definite', step + 1, float(np.linalg.eigvalsh(Quu).min())
            )
        C[step] = symmetrize(chol_inverse(factor))
        K[step] = -C[step] @ Qux
        k[step] = -C[step] @ qu
        V = symmetrize(Qxx + Qux.T @ K[step])
        v = qx + Qux.T @ k[step]
    return TimeVaryingController(K=K, k=k, C=C)


def expected_cost(dyn, ctrl, init, exp):
    """
    Expected total cost of ``exp`` under the marginals of ``ctrl``.
    """
    _, _, joint_mu, joint_sigma = propagate(dyn, ctrl, init.mean, init.cov)
    total = 0.0
    for step in range(exp.horizon):
        H = np.block([[exp.lxx[step], exp.lux[step].T], [exp.lux[step], exp.luu[step]]])
        g = np.concatenate([exp.lx[step], exp.lu[step]])
        mu, sigma = joint_mu[step], joint_sigma[step]
        total += 0.5 * mu @ H @ mu + 0.5 * np.trace(H @ sigma) + g @ mu + exp.l0[step]
    return float(total)


def traj_kl(p, p_bar, dyn, init):
    """
    Sum over steps of ``E_x[KL(p(u|x) || p_bar(u|x))]`` with x distributed
    by the marginals of ``p``.
    """
    if (p.horizon, p.d_x, p.d_u) != (p_bar.horizon, p_bar.d_x, p_bar.d_u):
        raise DimensionMismatch('controllers differ in horizon or dimensions')
    state_mu, state_sigma, _, _ = propagate(dyn, p, init.mean, init.cov)
    total = 0.0
    for step in range(p.horizon):
        P_bar, logdet_bar = inverse_with_logdet(
            p_bar.C[step], f'reference action covariance at step {step}'
        )
        sign, logdet = np.linalg.slogdet(p.C[step])
        if sign <= 0:
            return np.inf
        dK = p.K[step] - p_bar.K[step]
        shift = dK @ state_mu[step] + p.k[step] - p_bar.k[step]
        kl = 0.5 * (
            np.trace(P_bar @ p.C[step])
            - p.d_u
            + logdet_bar
            - logdet
            + shift @ P_bar @ shift
            + np.trace(dK.T @ P_bar @ dK @ state_sigma[step])
        )
        total += max(float(kl), 0.0)
    return total


@dataclass(eq=False)
class DualState:
    eta: float
    epsilon: float
    lower: float = app_settings.ETA_MIN
    upper: float = app_settings.ETA_MAX
    kl: float = 0.0
    active: bool = True
    trace: list = field(default_factory=list)


def surrogate_expansion(exp, p_bar, eta, entropy_weight=1.0):
    """
    ``exp / (w + eta) + eta / (w + eta) * (-log p_bar)`` with ``w`` the
    per-step ``entropy_weight``.
    """
    temperature = _per_step(entropy_weight, exp.horizon, 'entropy_weight') + eta
    return exp * (1.0 / temperature) + policy_log_expansion(p_bar, eta / temperature)


def kl_constrained_solve(p_bar, dyn, exp, epsilon, init, entropy_weight=1.0):
    """
    Minimizes the expected cost of ``exp`` subject to
    ``traj_kl(p, p_bar) <= epsilon``. ``entropy_weight`` is the weight of
    ``-H(p)`` that the objective already owns: 1 for a bare cost, ``1 + nu_t``
    once ``add_policy_terms`` has put ``nu_t KL(p || pi)`` into ``exp``.
    The dual variable is bracketed by tenfold expansion and refined by
    bisection in log space until the KL lands in
    ``[0.5 epsilon, epsilon]``. Returns ``(controller, DualState)``.
    """
    if not epsilon > 0:
        raise ImproperlyConfigured(f'epsilon must be positive, got {epsilon}', field='trajopt.epsilon')
    trace = []

    def solve(eta):
        ctrl = maxent_lqr(dyn, surrogate_expansion(exp, p_bar, eta, entropy_weight))
        kl = traj_kl(ctrl, p_bar, dyn, init)
        trace.append((eta, kl))
        logger.debug('dual search eta=%.6e kl=%.6g (epsilon %.6g)', eta, kl, epsilon)
        return ctrl, kl

    lower_band = app_settings.DUAL_ACCEPT_LOWER * epsilon
    eta_min, eta_max = app_settings.ETA_MIN, app_settings.ETA_MAX
    ctrl, kl = solve(eta_min)
    if kl <= epsilon:
        return ctrl, DualState(eta_min, epsilon, eta_min, eta_min, kl, False, trace)

    lo, hi = eta_min, 1.0
    ctrl_hi, kl_hi = solve(hi)
    expansions = 0
    while kl_hi > epsilon:
        expansions += 1
        if expansions > app_settings.DUAL_MAX_EXPANSIONS or hi * 10.0 > eta_max:
            raise DualSearchError('could not bracket the KL constraint', kl_hi, hi)
        lo, hi = hi, hi * 10.0
        ctrl_hi, kl_hi = solve(hi)
    if kl_hi >= lower_band:
        return ctrl_hi, DualState(hi, epsilon, lo, hi, kl_hi, True, trace)

    for _ in range(app_settings.DUAL_MAX_BISECTIONS):
        eta = np.sqrt(lo * hi)
        ctrl, kl = solve(eta)
        if lower_band <= kl <= epsilon:
            return ctrl, DualState(eta, epsilon, lo, hi, kl, True, trace)
        if kl > epsilon:
            lo = eta
        else:
            hi, ctrl_hi, kl_hi = eta, ctrl, kl
    logger.warning(
        'dual search did not reach [%.3g, %.3g]; using eta=%.3e with KL %.6g',
        lower_band,
        epsilon,
        hi,
        kl_hi,
    )
    return ctrl_hi, DualState(hi, epsilon, lo, hi, kl_hi, True, trace)
