from unittest import TestCase

from memory_gps import settings as app_settings
from memory_gps.checks import ERROR, WARNING, CheckMessage, run_checks


class TestChecks(TestCase):
    def _messages(self, **sections):
        return run_checks(app_settings.get_config(sections))

    def _objects(self, messages, level=ERROR):
        return [m.obj for m in messages if m.level == level]

    def test_defaults_pass(self):
        for task in ('nav', 'pegsort'):
            for method in ('memgps', 'feedforward', 'rwr'):
                with self.subTest(task=task, method=method):
                    self.assertEqual(self._messages(experiment={'task': task, 'method': method}), [])

    def test_invalid_settings(self):
        cases = [
            ({'experiment': {'task': 'cartpole'}}, 'experiment.task'),
            ({'experiment': {'iters': 0}}, 'experiment.iters'),
            ({'experiment': {'seed': -1}}, 'experiment.seed'),
            ({'gps': {'samples': 1}}, 'gps.samples'),
            ({'gps': {'inner_iterations': 0}}, 'gps.inner_iterations'),
            ({'rwr': {'samples': 0}}, 'rwr.samples'),
            ({'trajopt': {'epsilon': 20.0}}, 'trajopt.epsilon'),
            ({'trajopt': {'epsilon_min': 0.0}}, 'trajopt.epsilon'),
            ({'trajopt': {'epsilon_decrease': 1.5}}, 'trajopt.epsilon_increase'),
            ({'trajopt': {'cost_scale': 0.0}}, 'trajopt.cost_scale'),
            ({'trajopt': {'control_effort': -1.0}}, 'trajopt.control_effort'),
            ({'memory': {'noise_variance': 0.0}}, 'memory.noise_variance'),
            ({'memory': {'memory_dim': '-1'}}, 'memory.memory_dim'),
            ({'memory': {'memory_dim': 'lots'}}, 'memory.memory_dim'),
            ({'policy': {'hidden_layers': '10,0'}}, 'policy.hidden_layers'),
            ({'policy': {'learning_rate': 0.0}}, 'policy.learning_rate'),
            ({'policy': {'batch_size': 0}}, 'policy.batch_size'),
            ({'policy': {'steps': -1}}, 'policy.steps'),
        ]
        for sections, obj in cases:
            with self.subTest(obj=obj, sections=sections):
                messages = self._messages(**sections)
                self.assertEqual(self._objects(messages), [obj])
                self.assertTrue(all(m.is_serious() for m in messages))

    def test_unknown_method_reported_once(self):
        messages = self._messages(experiment={'method': 'ppo'})
        self.assertEqual(self._objects(messages), ['experiment.method'])

    def test_feedforward_memory_dim_warning(self):
        messages = self._messages(experiment={'method': 'feedforward'}, memory={'memory_dim': '4'})
        self.assertEqual(self._objects(messages), [])
        self.assertEqual(self._objects(messages, WARNING), ['memory.memory_dim'])
        self.assertFalse(messages[0].is_serious())

    def test_message_str(self):
        message = CheckMessage(
            ERROR, 'Improperly Configured', 'iters should be at least 1', 'experiment.iters'
        )
        self.assertEqual(
            str(message),
            'experiment.iters: (error) Improperly Configured\n\tHINT: iters should be at least 1',
        )
        self.assertEqual(str(CheckMessage(WARNING, 'Ignored setting')), '(warning) Ignored setting')
