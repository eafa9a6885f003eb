"""
Conditional-Gaussian policies over augmented observations and their
supervised training against the trajectory controllers.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from memory_gps import settings as app_settings
from memory_gps.core import inverse_with_logdet
from memory_gps.exceptions import (
    CheckpointError,
    DimensionMismatch,
    EmptySampleSet,
    ImproperlyConfigured,
)
from memory_gps.utils import (
    check_finite,
    make_rng,
    psd_factor,
    read_matrices,
    symmetrize,
    write_matrices,
)

logger = logging.getLogger(__name__)


class GaussianPolicyMixin:
    """
    Shared sampling and covariance handling; subclasses provide
    ``policy_mean``, ``d_input`` and ``d_output``.
    """

    def _init_covariance(self, covariance):
        if covariance is None:
            covariance = np.eye(self.d_output)
        self.set_covariance(covariance)

    def set_covariance(self, covariance):
        covariance = symmetrize(np.asarray(covariance, dtype=float))
        if covariance.shape != (self.d_output, self.d_output):
            raise DimensionMismatch(
                f'covariance must be {self.d_output}x{self.d_output}, got {covariance.shape}'
            )
        self.covariance = covariance
        self._noise_factor = psd_factor(covariance)

    def _check_input(self, obs):
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.d_input:
            raise DimensionMismatch(
                f'policy expects {self.d_input} inputs, got {obs.shape[-1]}'
            )
        return obs

    def policy_sample(self, obs, rng):
        mean = self.policy_mean(obs)
        z = rng.standard_normal(mean.shape)
        return mean + z @ self._noise_factor.T


class MemoryPolicy(GaussianPolicyMixin):
    """
    Multilayer perceptron with rectified linear hidden units. Inputs are
    standardized with the frozen ``obs_mean``/``obs_scale``; the last
    ``d_h`` outputs are the memory write.
    """

    kind = 'mlp'

    def __init__(self, layer_sizes, d_h=0, rng=None, covariance=None):
        layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ImproperlyConfigured(f'invalid layer sizes {layer_sizes}', field='policy.hidden_layers')
        if d_h < 0 or layer_sizes[-1] <= d_h:
            raise DimensionMismatch(
                f'output dimension {layer_sizes[-1]} cannot hold {d_h} memory actions'
            )
        if rng is None:
            rng = make_rng(0)
        self.layer_sizes = layer_sizes
        self.d_h = d_h
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.obs_mean = np.zeros(self.d_input)
        self.obs_scale = np.ones(self.d_input)
        self.normalized = False
        self._init_covariance(covariance)

    def __repr__(self):
        return f'<MemoryPolicy layers={self.layer_sizes} d_h={self.d_h}>'

    @property
    def d_input(self):
        return self.layer_sizes[0]

    @property
    def d_output(self):
        return self.layer_sizes[-1]

    @property
    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def get_flat_params(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=float)
        offset = 0
        for param in self.params:
            param[...] = flat[offset : offset + param.size].reshape(param.shape)
            offset += param.size
        if offset != flat.size:
            raise DimensionMismatch(f'expected {offset} parameters, got {flat.size}')

    def fit_normalization(self, observations):
        """
        Freezes input standardization to the statistics of ``observations``.
        """
        observations = self._check_input(np.atleast_2d(observations))
        check_finite('normalization data', observations)
        self.obs_mean = observations.mean(axis=0)
        self.obs_scale = np.maximum(
            observations.std(axis=0), app_settings.NORMALIZATION_MIN_SCALE
        )
        self.normalized = True

    def _forward(self, obs):
        z = (obs - self.obs_mean) / self.obs_scale
        activations = [z]
        last = len(self.weights) - 1
        for index, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = z @ W + b
            z = a if index == last else np.maximum(a, 0.0)
            activations.append(z)
        return activations

    def policy_mean(self, obs):
        obs = self._check_input(obs)
        return self._forward(obs)[-1]

    def backward(self, obs, output_grad):
        """
        Gradients of ``sum(output_grad * policy_mean(obs))`` w.r.t. the
        parameters, in the order of ``params``.
        """
        obs = self._check_input(np.atleast_2d(obs))
        activations = self._forward(obs)
        delta = np.atleast_2d(output_grad)
        grads = []
        for index in reversed(range(len(self.weights))):
            grads.append(delta.sum(axis=0))
            grads.append(activations[index].T @ delta)
            if index > 0:
                delta = (delta @ self.weights[index].T) * (activations[index] > 0.0)
        grads.reverse()
        return grads


class LinearPolicy(GaussianPolicyMixin):
    """
    Affine-Gaussian policy ``u ~ N(W o + b, covariance)``.
    """

    kind = 'linear'

    def __init__(self, d_input, d_output, d_h=0, W=None, b=None, covariance=None):
        self.d_input = int(d_input)
        self.d_output = int(d_output)
        self.d_h = d_h
        self.W = np.zeros((self.d_output, self.d_input)) if W is None else np.array(W, dtype=float)
        self.b = np.zeros(self.d_output) if b is None else np.array(b, dtype=float)
        if self.W.shape != (self.d_output, self.d_input) or self.b.shape != (self.d_output,):
            raise DimensionMismatch('linear policy parameters do not match its dimensions')
        self._init_covariance(covariance)

    def __repr__(self):
        return f'<LinearPolicy {self.d_input}->{self.d_output} d_h={self.d_h}>'

    def policy_mean(self, obs):
        obs = self._check_input(obs)
        return obs @ self.W.T + self.b


# supervised training
@dataclass(frozen=True, eq=False)
class SupervisedDataset:
    """
    Flattened ``(o~, mu_p(x~), C^-1, nu, lambda)`` tuples.
    """

    obs: np.ndarray
    targets: np.ndarray
    precision: np.ndarray
    nu: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        count = len(self.obs)
        if count == 0:
            raise EmptySampleSet('supervised dataset is empty')
        for name in ('targets', 'precision', 'nu', 'lam'):
            if len(getattr(self, name)) != count:
                raise DimensionMismatch(f'{name} has {len(getattr(self, name))} rows, expected {count}')

    def __len__(self):
        return len(self.obs)

    def subset(self, index):
        return SupervisedDataset(
            self.obs[index], self.targets[index], self.precision[index], self.nu[index], self.lam[index]
        )

    @classmethod
    def from_covariances(cls, obs, targets, covariances, nu, lam):
        covariances = np.asarray(covariances, dtype=float)
        precision = np.stack(
            [inverse_with_logdet(c, 'controller action covariance')[0] for c in covariances]
        )
        return cls(
            np.asarray(obs, dtype=float),
            np.asarray(targets, dtype=float),
            precision,
            np.asarray(nu, dtype=float),
            np.asarray(lam, dtype=float),
        )

    @classmethod
    def concatenate(cls, datasets):
        fields = ('obs', 'targets', 'precision', 'nu', 'lam')
        return cls(*(np.concatenate([getattr(d, f) for d in datasets]) for f in fields))


def supervised_objective(means, data):
    """
    Mean over ``data`` of ``1/2 nu (mu - mu_p)' P (mu - mu_p) + mu' lambda``
    and its gradient w.r.t. ``means``.
    """
    diff = means - data.targets
    weighted = np.einsum('nij,nj->ni', data.precision, diff) * data.nu[:, None]
    count = len(data)
    loss = (0.5 * np.sum(diff * weighted) + np.sum(means * data.lam)) / count
    return float(loss), (weighted + data.lam) / count


def loss_and_gradient(policy, data):
    means = policy.policy_mean(data.obs)
    loss, mean_grad = supervised_objective(means, data)
    return loss, policy.backward(data.obs, mean_grad)


def _adam_step(params, grads, state, learning_rate):
    beta1, beta2 = app_settings.ADAM_BETAS
    state['t'] += 1
    t = state['t']
    for param, grad, m, v in zip(params, grads, state['m'], state['v']):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad ** 2
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        param -= learning_rate * m_hat / (np.sqrt(v_hat) + app_settings.ADAM_EPSILON)


def _snapshot(policy, state):
    return (
        policy.get_flat_params(),
        {'t': state['t'], 'm': [m.copy() for m in state['m']], 'v': [v.copy() for v in state['v']]},
    )


def train_supervised(data, policy, rng, learning_rate=1e-3, batch_size=32, steps=2000):
    """
    Adam on ``supervised_objective`` for ``steps`` mini-batch updates.
    Each epoch is checked on the full dataset; an epoch whose loss exceeds
    1e3 times the initial loss is rolled back and retried at half the step
    size, at most three times. The best parameters seen are kept. Afterwards the
    action covariance becomes ``(sum nu C^-1 / sum nu)^-1``.
    Returns the list of end-of-epoch losses.
    """
    count = len(data)
    params = policy.params
    state = {'t': 0, 'm': [np.zeros_like(p) for p in params], 'v': [np.zeros_like(p) for p in params]}
    initial_loss, _ = supervised_objective(policy.policy_mean(data.obs), data)
    best_loss, best_params = initial_loss, policy.get_flat_params()
    previous = initial_loss
    losses = [initial_loss]
    restarts = 0
    done = 0
    batches_per_epoch = max(1, int(np.ceil(count / batch_size)))
    while done < steps:
        saved = _snapshot(policy, state)
        order = rng.permutation(count)
        epoch_steps = min(batches_per_epoch, steps - done)
        for batch in range(epoch_steps):
            index = order[batch * batch_size : (batch + 1) * batch_size]
            _, grads = loss_and_gradient(policy, data.subset(index))
            _adam_step(params, grads, state, learning_rate)
        loss, _ = supervised_objective(policy.policy_mean(data.obs), data)
        diverged = not np.isfinite(loss) or abs(loss) > app_settings.DIVERGENCE_FACTOR * max(
            abs(initial_loss), 1e-12
        )
        if diverged:
            if restarts >= app_settings.MAX_DIVERGENCE_RESTARTS:
                logger.warning('supervised training stopped after %d restarts', restarts)
                break
            restarts += 1
            learning_rate *= 0.5
            policy.set_flat_params(saved[0])
            state = saved[1]
            logger.warning(
                'supervised loss went from %.6g to %.6g; restarting epoch with learning rate %.3e',
                previous,
                loss,
                learning_rate,
            )
            continue
        done += epoch_steps
        previous = loss
        losses.append(loss)
        if loss < best_loss:
            best_loss, best_params = loss, policy.get_flat_params()
        logger.debug('supervised step %d loss %.6g', done, loss)
    policy.set_flat_params(best_params)
    update_policy_covariance(policy, data)
    return losses


def update_policy_covariance(policy, data):
    """
    Sets the action covariance to the inverse of the ``nu``-weighted mean
    of the controller precisions, ``(sum nu C^-1 / sum nu)^-1``; left
    unchanged when every ``nu`` is zero or that average is singular.
    """
    total = float(np.sum(data.nu))
    if total <= 0.0:
        logger.debug('no penalty weight in the data, keeping the policy covariance')
        return
    mean_precision = symmetrize(np.einsum('n,nij->ij', data.nu, data.precision) / total)
    try:
        factor = linalg.cholesky(mean_precision, lower=True)
    except linalg.LinAlgError:
        logger.debug('average precision is singular, keeping the policy covariance')
        return
    policy.set_covariance(linalg.cho_solve((factor, True), np.eye(policy.d_output)))


def gradient_check(policy, data, rng, num_params=None, step=None):
    """
    Largest relative error between the analytic gradient and central
    differences over a random subset of parameters.
    """
    num_params = num_params or app_settings.GRADIENT_CHECK_PARAMS
    step = step or app_settings.GRADIENT_CHECK_STEP
    _, grads = loss_and_gradient(policy, data)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = policy.get_flat_params()
    chosen = rng.choice(flat.size, size=min(num_params, flat.size), replace=False)
    worst = 0.0
    try:
        for index in chosen:
            shifted = flat.copy()
            shifted[index] = flat[index] + step
            policy.set_flat_params(shifted)
            plus = loss_and_gradient(policy, data)[0]
            shifted[index] = flat[index] - step
            policy.set_flat_params(shifted)
            minus = loss_and_gradient(policy, data)[0]
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(analytic[index]), abs(numeric), 1e-6)
            worst = max(worst, abs(analytic[index] - numeric) / denom)
    finally:
        policy.set_flat_params(flat)
    return worst


# checkpoints
def policy_sections(policy):
    """
    ``(meta, sections)`` describing ``policy`` in the matrix text format.
    """
    meta = {'kind': policy.kind, 'd_h': policy.d_h}
    sections = {'covariance': policy.covariance}
    if policy.kind == 'mlp':
        meta['layers'] = ','.join(str(n) for n in policy.layer_sizes)
        meta['normalized'] = int(policy.normalized)
        for index, (W, b) in enumerate(zip(policy.weights, policy.biases)):
            sections[f'W{index}'] = W
            sections[f'b{index}'] = b
        sections['obs_mean'] = policy.obs_mean
        sections['obs_scale'] = policy.obs_scale
    else:
        meta['layers'] = f'{policy.d_input},{policy.d_output}'
        sections['W'] = policy.W
        sections['b'] = policy.b
    return meta, sections


def policy_from_sections(meta, sections):
    try:
        kind = meta['kind']
        d_h = int(meta['d_h'])
        layers = tuple(int(n) for n in meta['layers'].split(','))
        covariance = sections['covariance']
        if kind == 'linear':
            return LinearPolicy(
                layers[0], layers[-1], d_h, W=sections['W'], b=sections['b'][0], covariance=covariance
            )
        if kind != 'mlp':
            raise CheckpointError(f'unknown policy kind {kind!r}')
        policy = MemoryPolicy(layers, d_h, covariance=covariance)
        for index in range(len(layers) - 1):
            policy.weights[index][...] = sections[f'W{index}']
            policy.biases[index][...] = sections[f'b{index}'][0]
        policy.obs_mean = sections['obs_mean'][0]
        policy.obs_scale = sections['obs_scale'][0]
        policy.normalized = bool(int(meta.get('normalized', 1)))
    except (KeyError, ValueError, ImproperlyConfigured) as e:
        raise CheckpointError(f'incomplete policy description: {e}') from e
    return policy


def save_policy(policy, path):
    meta, sections = policy_sections(policy)
    write_matrices(path, app_settings.POLICY_HEADER, sections, meta)


def load_policy(path):
    meta, sections = read_matrices(path, app_settings.POLICY_HEADER)
    return policy_from_sections(meta, sections)
