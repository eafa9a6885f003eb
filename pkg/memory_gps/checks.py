from dataclasses import dataclass

from memory_gps.exceptions import ImproperlyConfigured
from memory_gps.types import METHOD_TYPES, TASK_TYPES, resolve_architecture

DEBUG = 'debug'
INFO = 'info'
WARNING = 'warning'
ERROR = 'error'

REGISTERED_CHECKS = []


@dataclass(frozen=True)
class CheckMessage:
    level: str
    msg: str
    hint: str = None
    obj: str = None

    def is_serious(self):
        return self.level == ERROR

    def __str__(self):
        obj = f'{self.obj}: ' if self.obj else ''
        hint = f'\n\tHINT: {self.hint}' if self.hint else ''
        return f'{obj}({self.level}) {self.msg}{hint}'


def Warning(msg, hint=None, obj=None):
    return CheckMessage(WARNING, msg, hint, obj)


def Error(msg, hint=None, obj=None):
    return CheckMessage(ERROR, msg, hint, obj)


def register(check):
    REGISTERED_CHECKS.append(check)
    return check


def run_checks(config):
    messages = []
    for check in REGISTERED_CHECKS:
        messages.extend(check(config))
    return messages


@register
def check_experiment(config):
    errors = []
    experiment = config['experiment']
    if experiment['task'] not in TASK_TYPES:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint=f'unknown task "{experiment["task"]}", choose one of {sorted(TASK_TYPES)}',
                obj='experiment.task',
            )
        )
    if experiment['method'] not in METHOD_TYPES:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint=f'unknown method "{experiment["method"]}", choose one of {sorted(METHOD_TYPES)}',
                obj='experiment.method',
            )
        )
    if experiment['iters'] < 1:
        errors.append(
            Error(msg='Improperly Configured', hint='iters should be at least 1', obj='experiment.iters')
        )
    if not 0 <= experiment['seed'] < 2 ** 64:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='seed should be an unsigned 64 bit integer',
                obj='experiment.seed',
            )
        )
    return errors


@register
def check_sample_counts(config):
    errors = []
    if config['gps']['samples'] < 2:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='dynamics fitting needs at least 2 samples per condition',
                obj='gps.samples',
            )
        )
    if config['gps']['inner_iterations'] < 1:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='inner_iterations should be at least 1',
                obj='gps.inner_iterations',
            )
        )
    if config['rwr']['samples'] < 2:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='rwr needs at least 2 samples per iteration',
                obj='rwr.samples',
            )
        )
    return errors


@register
def check_trust_region(config):
    errors = []
    trajopt = config['trajopt']
    if not 0 < trajopt['epsilon_min'] <= trajopt['epsilon'] <= trajopt['epsilon_max']:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='expected 0 < epsilon_min <= epsilon <= epsilon_max',
                obj='trajopt.epsilon',
            )
        )
    if trajopt['epsilon_increase'] < 1 or not 0 < trajopt['epsilon_decrease'] <= 1:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='epsilon_increase should be >= 1 and epsilon_decrease in (0, 1]',
                obj='trajopt.epsilon_increase',
            )
        )
    for key in ('cost_scale', 'initial_variance'):
        if trajopt[key] <= 0:
            errors.append(
                Error(msg='Improperly Configured', hint=f'{key} should be positive', obj=f'trajopt.{key}')
            )
    if trajopt['control_effort'] < 0:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='control_effort should not be negative',
                obj='trajopt.control_effort',
            )
        )
    return errors


@register
def check_architecture(config):
    errors = []
    if config['memory']['noise_variance'] <= 0:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='memory noise variance should be positive',
                obj='memory.noise_variance',
            )
        )
    try:
        memory_dim, hidden = resolve_architecture(config)
    except ImproperlyConfigured as e:
        # unknown task or method is reported by check_experiment
        if e.field not in ('task', 'method'):
            errors.append(Error(msg='Improperly Configured', hint=str(e), obj=e.field))
        return errors
    if memory_dim < 0:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='memory_dim should not be negative',
                obj='memory.memory_dim',
            )
        )
    if any(size < 1 for size in hidden):
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='hidden layer sizes should be positive',
                obj='policy.hidden_layers',
            )
        )
    method = config['experiment']['method']
    if (
        method in METHOD_TYPES
        and not METHOD_TYPES[method]['memory']
        and str(config['memory']['memory_dim']) not in ('auto', '0')
    ):
        errors.append(
            Warning(
                msg='Ignored setting',
                hint=f'method "{method}" runs without memory, memory_dim is ignored',
                obj='memory.memory_dim',
            )
        )
    return errors


@register
def check_policy_training(config):
    errors = []
    policy = config['policy']
    if policy['learning_rate'] <= 0:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='learning_rate should be positive',
                obj='policy.learning_rate',
            )
        )
    if policy['batch_size'] < 1:
        errors.append(
            Error(
                msg='Improperly Configured',
                hint='batch_size should be at least 1',
                obj='policy.batch_size',
            )
        )
    if policy['steps'] < 0:
        errors.append(
            Error(msg='Improperly Configured', hint='steps should not be negative', obj='policy.steps')
        )
    return errors
