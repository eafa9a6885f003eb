from configparser import ConfigParser, Error as ConfigParserError
from copy import deepcopy

from memory_gps.exceptions import ImproperlyConfigured

# numerics
CHOLESKY_JITTER_SCALE = 1e-10
CHOLESKY_JITTER_GROWTH = 10.0
CHOLESKY_MAX_RETRIES = 5
SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10
MATRIX_FORMAT = '%.17g'

# memory states
MEMORY_NOISE_VARIANCE = 1e-6

# dynamics fitting
DYNAMICS_PRIOR_STRENGTH = 1.0
DYNAMICS_EIGEN_FLOOR = 1e-8
INITIAL_STATE_VARIANCE = 1e-6

# trajectory optimization
ETA_MIN = 1e-8
ETA_MAX = 1e16
DUAL_MAX_EXPANSIONS = 50
DUAL_MAX_BISECTIONS = 20
DUAL_ACCEPT_LOWER = 0.5
FD_GRADIENT_STEP = 1e-6
FD_HESSIAN_STEP = 1e-4
POLICY_LINEARIZATION_REG = 1e-6

# reward-weighted regression
RWR_MAX_EXPANSIONS = 60
RWR_MAX_BISECTIONS = 100
RWR_REGULARIZATION = 1e-6
RWR_COVARIANCE_FLOOR = 1e-6

# supervised policy training
GRADIENT_CHECK_STEP = 1e-5
GRADIENT_CHECK_PARAMS = 200
DIVERGENCE_FACTOR = 1e3
MAX_DIVERGENCE_RESTARTS = 3
NORMALIZATION_MIN_SCALE = 1e-2
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8

CHECKPOINT_VERSION = 1
POLICY_HEADER = 'memory-gps-policy'
CHECKPOINT_HEADER = 'memory-gps-checkpoint'

METRICS_CSV_HEADER = ('iter', 'samples', 'condition', 'distance')

CONFIG_DEFAULTS = {
    'experiment': {
        'task': 'nav',
        'method': 'memgps',
        'seed': 0,
        'iters': 30,
        'out': 'runs',
    },
    'memory': {
        # 'auto' picks the task default, see types.TASK_TYPES
        'memory_dim': 'auto',
        'noise_variance': MEMORY_NOISE_VARIANCE,
    },
    'gps': {
        'samples': 5,
        'inner_iterations': 4,
        'dual_step': 0.1,
        'nu_initial': 0.01,
        'nu_factor': 2.0,
        'nu_max': 10.0,
    },
    'trajopt': {
        'epsilon': 1.0,
        'epsilon_min': 0.1,
        'epsilon_max': 10.0,
        'epsilon_increase': 1.5,
        'epsilon_decrease': 0.5,
        'cost_scale': 1000.0,
        'control_effort': 1e-4,
        'initial_variance': 0.1,
    },
    'dynfit': {
        'prior_strength': DYNAMICS_PRIOR_STRENGTH,
    },
    'policy': {
        'hidden_layers': 'auto',
        'learning_rate': 1e-3,
        'batch_size': 32,
        'steps': 2000,
    },
    'rwr': {
        'samples': 25,
        'covariance_shrink': 0.5,
        'initial_variance': 0.1,
    },
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {'format': '%(asctime)s %(levelname)s %(name)s: %(message)s'}
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        }
    },
    'loggers': {
        'memory_gps': {'handlers': ['console'], 'level': 'INFO', 'propagate': False},
        'py.warnings': {'handlers': ['console'], 'propagate': False},
    },
}


def get_config(user_config=None):
    config = deepcopy(CONFIG_DEFAULTS)
    for section, values in (user_config or {}).items():
        config.setdefault(section, {}).update(values)
    return config


def _coerce(value, default, field):
    if isinstance(default, bool):
        lowered = value.strip().lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise ImproperlyConfigured(f'{field} should be a boolean, got {value!r}', field=field)
    if isinstance(default, (int, float)):
        try:
            return type(default)(value)
        except ValueError:
            raise ImproperlyConfigured(
                f'{field} should be {type(default).__name__}, got {value!r}', field=field
            )
    return value.strip()


def read_config_file(path):
    """
    Parses an INI file into a user config, coercing every value to the
    type of its default. Unknown sections and keys are rejected.
    """
    parser = ConfigParser()
    try:
        with open(path) as f:
            parser.read_file(f)
    except (OSError, ConfigParserError) as e:
        raise ImproperlyConfigured(f'cannot read config file {path}: {e}', field='config')
    user_config = {}
    for section in parser.sections():
        if section not in CONFIG_DEFAULTS:
            raise ImproperlyConfigured(f'unknown config section [{section}]', field=section)
        defaults = CONFIG_DEFAULTS[section]
        values = {}
        for key, value in parser.items(section):
            field = f'{section}.{key}'
            if key not in defaults:
                raise ImproperlyConfigured(f'unknown config key {field}', field=field)
            values[key] = _coerce(value, defaults[key], field)
        user_config[section] = values
    return user_config


def write_config_file(config, path):
    parser = ConfigParser()
    for section, values in config.items():
        parser[section] = {
            key: ','.join(str(v) for v in value) if isinstance(value, (tuple, list)) else str(value)
            for key, value in values.items()
        }
    with open(path, 'w') as f:
        parser.write(f)
