from unittest import TestCase

from memory_gps import settings as app_settings
from memory_gps.envs import NavigationTask, PegSortTask
from memory_gps.exceptions import ImproperlyConfigured
from memory_gps.types import (
    TASK_CHOICES,
    TASK_TYPES,
    get_method_configuration,
    get_task_configuration,
    make_task,
    register_task_type,
    resolve_architecture,
    unregister_task_type,
)


class ShortNavigation(NavigationTask):
    name = 'shortnav'

    def __init__(self):
        super().__init__(horizon=10)


def _config(**experiment):
    return app_settings.get_config({'experiment': experiment})


class TestTaskTypes(TestCase):
    def tearDown(self):
        if 'shortnav' in TASK_TYPES:
            unregister_task_type('shortnav')

    def test_builtin_tasks(self):
        self.assertIsInstance(make_task('nav'), NavigationTask)
        self.assertIsInstance(make_task('pegsort'), PegSortTask)
        self.assertEqual(make_task('nav').num_conditions, 4)
        self.assertEqual(make_task('pegsort').num_conditions, 2)

    def test_unknown_names(self):
        with self.assertRaises(ImproperlyConfigured) as context:
            make_task('cartpole')
        self.assertEqual(context.exception.field, 'task')
        with self.assertRaises(ImproperlyConfigured) as context:
            get_method_configuration('ppo')
        self.assertEqual(context.exception.field, 'method')

    def test_register_unregister_task_type(self):
        test_type = {'class': ShortNavigation, 'memory_dim': 2, 'hidden_layers': [8]}

        with self.subTest('Registering new task type'):
            register_task_type('shortnav', test_type)
            task = make_task('shortnav')
            self.assertEqual(task.spec.horizon, 10)
            self.assertEqual(get_task_configuration('shortnav')['hidden_layers'], (8,))
            self.assertEqual(resolve_architecture(_config(task='shortnav')), (2, (8,)))

        with self.subTest('Re-registering a task type'):
            with self.assertRaises(ImproperlyConfigured):
                register_task_type('shortnav', test_type)

        with self.subTest('Check registration in TASK_CHOICES'):
            self.assertEqual(TASK_CHOICES[-1], ('shortnav', 'ShortNavigation'))

        with self.subTest('Unregistering task type'):
            unregister_task_type('shortnav')
            self.assertNotIn('shortnav', TASK_TYPES)
            self.assertNotIn('shortnav', [name for name, _ in TASK_CHOICES])
            with self.assertRaises(ImproperlyConfigured):
                make_task('shortnav')

        with self.subTest('Unregistering a task type which does not exist'):
            with self.assertRaises(ImproperlyConfigured):
                unregister_task_type('shortnav')

    def test_task_type_registration_errors(self):
        with self.subTest('Registering with incomplete task configuration'):
            with self.assertRaises(ImproperlyConfigured):
                register_task_type('shortnav', {'class': ShortNavigation})

        with self.subTest('Registering a class that is not a task'):
            with self.assertRaises(ImproperlyConfigured):
                register_task_type('shortnav', {'class': dict, 'memory_dim': 1, 'hidden_layers': ()})

        with self.subTest('Registering with improper task type name'):
            with self.assertRaises(ImproperlyConfigured):
                register_task_type(['shortnav'], {})

        with self.subTest('Registering with improper task configuration'):
            with self.assertRaises(ImproperlyConfigured):
                register_task_type('shortnav', tuple())

        with self.subTest('Unregistering with improper task type name'):
            with self.assertRaises(ImproperlyConfigured):
                unregister_task_type(dict())

        self.assertNotIn('shortnav', TASK_TYPES)


class TestResolveArchitecture(TestCase):
    def test_defaults(self):
        self.assertEqual(resolve_architecture(_config()), (4, (10,)))
        self.assertEqual(resolve_architecture(_config(task='pegsort')), (4, (40, 40)))

    def test_feedforward_drops_memory(self):
        config = _config(method='feedforward')
        config['memory']['memory_dim'] = 6
        self.assertEqual(resolve_architecture(config), (0, (10,)))

    def test_rwr_keeps_memory(self):
        self.assertEqual(resolve_architecture(_config(method='rwr'))[0], 4)

    def test_explicit_values(self):
        config = _config()
        config['memory']['memory_dim'] = '3'
        config['policy']['hidden_layers'] = '20, 5'
        self.assertEqual(resolve_architecture(config), (3, (20, 5)))

    def test_invalid_values(self):
        config = _config()
        config['policy']['hidden_layers'] = '20,x'
        with self.assertRaises(ImproperlyConfigured) as context:
            resolve_architecture(config)
        self.assertEqual(context.exception.field, 'policy.hidden_layers')
        config = _config()
        config['memory']['memory_dim'] = 'many'
        with self.assertRaises(ImproperlyConfigured) as context:
            resolve_architecture(config)
        self.assertEqual(context.exception.field, 'memory.memory_dim')
