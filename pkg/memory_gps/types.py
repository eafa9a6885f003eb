from memory_gps.envs import NavigationTask, PegSortTask, Task
from memory_gps.exceptions import ImproperlyConfigured

TASK_TYPES = {
    'nav': {
        'class': NavigationTask,
        'verbose_name': 'Navigation and return',
        'memory_dim': 4,
        'hidden_layers': (10,),
    },
    'pegsort': {
        'class': PegSortTask,
        'verbose_name': 'Peg sorting (point mass)',
        'memory_dim': 4,
        'hidden_layers': (40, 40),
    },
}

METHOD_TYPES = {
    'memgps': {
        'verbose_name': 'Guided policy search with memory states',
        'runner': 'gps',
        'memory': True,
    },
    'feedforward': {
        'verbose_name': 'Guided policy search without memory',
        'runner': 'gps',
        'memory': False,
    },
    'rwr': {
        'verbose_name': 'Reward-weighted regression, linear policy',
        'runner': 'rwr',
        'memory': True,
    },
}

TASK_CHOICES = [(name, config['verbose_name']) for name, config in TASK_TYPES.items()]
METHOD_CHOICES = [(name, config['verbose_name']) for name, config in METHOD_TYPES.items()]


def get_task_configuration(task_name):
    try:
        return TASK_TYPES[task_name]
    except KeyError:
        raise ImproperlyConfigured(f'No such task type, {task_name}', field='task')


def get_method_configuration(method_name):
    try:
        return METHOD_TYPES[method_name]
    except KeyError:
        raise ImproperlyConfigured(f'No such method, {method_name}', field='method')


def make_task(task_name):
    return get_task_configuration(task_name)['class']()


def _validate_task_type(type_config):
    options = type_config.keys()
    assert 'class' in options
    assert issubclass(type_config['class'], Task)
    assert 'memory_dim' in options
    assert 'hidden_layers' in options
    type_config['hidden_layers'] = tuple(type_config['hidden_layers'])
    if 'verbose_name' not in options:
        type_config['verbose_name'] = type_config['class'].__name__
    return type_config


def register_task_type(type_name, type_config):
    """
    Registers a new task type.
    """
    if not isinstance(type_name, str):
        raise ImproperlyConfigured('Task type name should be type `str`.')
    if not isinstance(type_config, dict):
        raise ImproperlyConfigured('Task type configuration should be type `dict`.')
    if type_name in TASK_TYPES:
        raise ImproperlyConfigured(f'{type_name} is an already registered task type.')
    try:
        validated_type_config = _validate_task_type(type_config)
    except AssertionError:
        raise ImproperlyConfigured(
            f'Task type {type_name} needs a Task subclass, memory_dim and hidden_layers.'
        )
    TASK_TYPES.update({type_name: validated_type_config})
    TASK_CHOICES.append((type_name, validated_type_config['verbose_name']))


def unregister_task_type(type_name):
    if not isinstance(type_name, str):
        raise ImproperlyConfigured('Task type name should be type `str`')
    if type_name not in TASK_TYPES:
        raise ImproperlyConfigured(f'No such task type, {type_name}')
    TASK_TYPES.pop(type_name)
    for index, (key, name) in enumerate(TASK_CHOICES):
        if key == type_name:
            TASK_CHOICES.pop(index)
            return


def resolve_architecture(config):
    """
    ``(memory_dim, hidden_layers)`` for the configured task and method,
    with ``auto`` values taken from the task registry.
    """
    experiment = config['experiment']
    task_config = get_task_configuration(experiment['task'])
    method_config = get_method_configuration(experiment['method'])
    memory_dim = config['memory']['memory_dim']
    if not method_config['memory']:
        memory_dim = 0
    elif memory_dim == 'auto':
        memory_dim = task_config['memory_dim']
    hidden = config['policy']['hidden_layers']
    if hidden == 'auto':
        hidden = task_config['hidden_layers']
    elif isinstance(hidden, str):
        try:
            hidden = tuple(int(n) for n in hidden.replace(' ', '').split(',') if n)
        except ValueError:
            raise ImproperlyConfigured(
                f'hidden_layers should be a comma separated list of sizes, got {hidden!r}',
                field='policy.hidden_layers',
            )
    try:
        memory_dim = int(memory_dim)
    except ValueError:
        raise ImproperlyConfigured(
            f'memory_dim should be an integer or auto, got {memory_dim!r}',
            field='memory.memory_dim',
        )
    return memory_dim, tuple(hidden)
