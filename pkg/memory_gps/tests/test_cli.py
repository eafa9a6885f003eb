import io
import os
import tempfile
from unittest import TestCase
from unittest.mock import patch

from memory_gps import settings as app_settings
from memory_gps.cli import load_config, main, replay
from memory_gps.envs import NavigationTask
from memory_gps.exceptions import ImproperlyConfigured, IterationFailed
from memory_gps.gps import initialize_run, load_checkpoint, outer_iteration
from memory_gps.handlers import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    HISTORY_FILE,
    LEARNING_CURVE_FILE,
    METRICS_FILE,
    TRACES_FILE,
    iteration_handler,
    prepare_run_directory,
    read_metrics,
    run_directory,
    truncate_metrics,
)
from memory_gps.plots import learning_curve_svg, traces_svg
from memory_gps.tests.test_helpers import small_config

SMALL_INI = """\
[gps]
samples = 2
inner_iterations = 1

[policy]
steps = 10
"""


class TempDirMixin:
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def _write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as f:
            f.write(text)
        return path


class TestConfigFiles(TempDirMixin, TestCase):
    def test_values_are_coerced(self):
        path = self._write(
            'c.ini',
            '[experiment]\nseed = 12\n[trajopt]\nepsilon = 2\n[policy]\nhidden_layers = 20, 20\n',
        )
        user_config = app_settings.read_config_file(path)
        self.assertEqual(user_config['experiment'], {'seed': 12})
        self.assertIsInstance(user_config['trajopt']['epsilon'], float)
        self.assertEqual(user_config['policy']['hidden_layers'], '20, 20')

    def test_written_config_reads_back(self):
        config = small_config(experiment={'task': 'pegsort', 'seed': 5})
        path = os.path.join(self.tmp, CONFIG_FILE)
        app_settings.write_config_file(config, path)
        self.assertEqual(app_settings.get_config(app_settings.read_config_file(path)), config)

    def test_invalid_files(self):
        cases = {
            'section': ('[rendering]\nfps = 30\n', 'rendering'),
            'key': ('[gps]\nsamples = 5\nbatch = 3\n', 'gps.batch'),
            'value': ('[gps]\nsamples = five\n', 'gps.samples'),
            'syntax': ('samples = 5\n', 'config'),
        }
        for name, (text, field) in cases.items():
            with self.subTest(name):
                path = self._write(f'{name}.ini', text)
                with self.assertRaises(ImproperlyConfigured) as context:
                    app_settings.read_config_file(path)
                self.assertEqual(context.exception.field, field)

    def test_missing_file(self):
        with self.assertRaises(ImproperlyConfigured):
            app_settings.read_config_file(os.path.join(self.tmp, 'missing.ini'))

    def test_flags_override_file(self):
        path = self._write('c.ini', '[experiment]\nseed = 12\niters = 4\n' + SMALL_INI)
        config = load_config(path, {'seed': 3, 'task': None, 'out': self.tmp})
        self.assertEqual(config['experiment']['seed'], 3)
        self.assertEqual(config['experiment']['iters'], 4)
        self.assertEqual(config['experiment']['task'], 'nav')
        self.assertEqual(config['experiment']['out'], self.tmp)
        self.assertEqual(config['gps']['samples'], 2)
        self.assertEqual(load_config(), app_settings.get_config())


class TestRunDirectory(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.config = small_config(experiment={'out': self.tmp, 'seed': 7})
        self.path = run_directory(self.config)

    def test_layout(self):
        self.assertEqual(self.path, os.path.join(self.tmp, 'nav-memgps-seed7'))
        prepare_run_directory(self.path, self.config)
        for name in (CONFIG_FILE, METRICS_FILE, HISTORY_FILE, 'seed.txt', 'version.txt'):
            self.assertTrue(os.path.exists(os.path.join(self.path, name)), name)
        self.assertEqual(read_metrics(os.path.join(self.path, METRICS_FILE)), [])
        with open(os.path.join(self.path, 'seed.txt')) as f:
            self.assertEqual(f.read(), '7\n')

    def test_iteration_artifacts(self):
        run = initialize_run(NavigationTask(), self.config)
        prepare_run_directory(self.path, self.config)
        for _ in range(2):
            iteration_handler(self.path, run, outer_iteration(run))
        rows = read_metrics(os.path.join(self.path, METRICS_FILE))
        self.assertEqual(len(rows), 8)
        self.assertEqual(rows[0][:3], (1, 12, 0))
        self.assertEqual(rows[-1][:3], (2, 24, 3))
        with open(os.path.join(self.path, HISTORY_FILE)) as f:
            self.assertEqual(len(f.read().splitlines()), 3)
        self.assertEqual(load_checkpoint(os.path.join(self.path, CHECKPOINT_FILE)).iteration, 2)
        for name in (LEARNING_CURVE_FILE, TRACES_FILE):
            with open(os.path.join(self.path, name)) as f:
                self.assertTrue(f.read().startswith('<svg'))

        with self.subTest('Truncating tables for a resumed run'):
            truncate_metrics(self.path, 1)
            rows = read_metrics(os.path.join(self.path, METRICS_FILE))
            self.assertEqual([row[0] for row in rows], [1, 1, 1, 1])
            with open(os.path.join(self.path, HISTORY_FILE)) as f:
                self.assertEqual(len(f.read().splitlines()), 2)

    def test_foreign_table(self):
        path = self._write('other.csv', 'a,b\n1,2\n')
        with self.assertRaises(ValueError):
            read_metrics(path)


class TestPlots(TestCase):
    def test_learning_curve(self):
        rows = [(1, 10, 0, 0.5), (1, 10, 1, 0.4), (2, 20, 0, 0.2), (2, 20, 1, 0.05)]
        svg = learning_curve_svg(rows, 'nav <memgps>', threshold=0.1)
        self.assertTrue(svg.startswith('<svg'))
        self.assertTrue(svg.endswith('</svg>\n'))
        self.assertEqual(svg.count('<polyline'), 2)
        self.assertIn('stroke-dasharray', svg)
        self.assertIn('nav &lt;memgps&gt;', svg)

    def test_empty_learning_curve(self):
        svg = learning_curve_svg([], 'empty')
        self.assertNotIn('<polyline', svg)

    def test_traces(self):
        task = NavigationTask()
        run = initialize_run(task, small_config())
        svg = traces_svg(task, run.aug, run.policy, 'traces')
        self.assertEqual(svg.count('<polyline'), 4)
        self.assertEqual(svg.count('<circle'), 1)


class TestCommandLine(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.ini = self._write('small.ini', SMALL_INI)

    def _run(self, *args, out=None):
        return main(['run', '--config', self.ini, '--out', out or self.tmp, '--seed', '3', *args])

    def _replay(self, *args):
        with patch('sys.stdout', new_callable=io.StringIO) as stdout:
            code = main(['replay', *args])
        return code, stdout.getvalue()

    def test_run_resume_and_replay(self):
        path = os.path.join(self.tmp, 'nav-memgps-seed3')
        checkpoint = os.path.join(path, CHECKPOINT_FILE)
        self.assertEqual(self._run('--iters', '2'), 0)
        self.assertEqual(len(read_metrics(os.path.join(path, METRICS_FILE))), 8)

        with self.subTest('Resuming continues the tables'):
            self.assertEqual(main(['run', '--resume', checkpoint, '--iters', '3']), 0)
            resumed = read_metrics(os.path.join(path, METRICS_FILE))
            self.assertEqual([row[0] for row in resumed[::4]], [1, 2, 3])
            straight_out = os.path.join(self.tmp, 'straight')
            self.assertEqual(self._run('--iters', '3', out=straight_out), 0)
            straight = read_metrics(os.path.join(straight_out, 'nav-memgps-seed3', METRICS_FILE))
            self.assertEqual(resumed, straight)

        with self.subTest('Replay is deterministic'):
            code, first = self._replay(checkpoint, '--condition', '2')
            self.assertEqual(code, 0)
            self.assertEqual(first, self._replay(checkpoint, '--condition', '2')[1])
            lines = first.splitlines()
            self.assertEqual(len(lines), 43)
            self.assertEqual(lines[0], '# nav memgps seed=3 iteration=3 condition=2')
            self.assertTrue(lines[-1].startswith('# distance '))
            self.assertEqual(first, replay(checkpoint, 2, load_config(os.path.join(path, CONFIG_FILE))))

        with self.subTest('Replay of a missing condition'):
            self.assertEqual(self._replay(checkpoint, '--condition', '9')[0], 2)

        with self.subTest('Resuming with another method'):
            self.assertEqual(main(['run', '--resume', checkpoint, '--method', 'feedforward']), 2)

    def test_repeated_runs_write_identical_metrics(self):
        tables = []
        for out in ('first', 'second'):
            self.assertEqual(self._run('--iters', '1', out=os.path.join(self.tmp, out)), 0)
            with open(os.path.join(self.tmp, out, 'nav-memgps-seed3', METRICS_FILE), 'rb') as f:
                tables.append(f.read())
        self.assertEqual(tables[0], tables[1])
        self.assertTrue(tables[0].startswith(b'iter,samples,condition,distance\n'))

    def test_rwr_run(self):
        self.assertEqual(self._run('--method', 'rwr', '--iters', '1'), 0)
        path = os.path.join(self.tmp, 'nav-rwr-seed3')
        self.assertEqual(len(read_metrics(os.path.join(path, METRICS_FILE))), 4)
        code, output = self._replay(os.path.join(path, CHECKPOINT_FILE))
        self.assertEqual(code, 0)
        self.assertIn('rwr seed=3 iteration=1', output)

    def test_invalid_configuration(self):
        self.assertEqual(self._run('--iters', '0'), 2)
        bad = self._write('bad.ini', '[gps]\nsample = 5\n')
        self.assertEqual(main(['run', '--config', bad]), 2)
        self.assertFalse(os.path.exists(os.path.join(self.tmp, 'nav-memgps-seed3')))

    def test_bad_checkpoint(self):
        path = self._write('checkpoint.txt', 'not a checkpoint\n')
        self.assertEqual(self._replay(path)[0], 1)
        self.assertEqual(main(['run', '--resume', path]), 1)

    def test_failed_iteration_keeps_checkpoint(self):
        error = IterationFailed('dual search failed', 1, 0)
        with patch('memory_gps.cli.outer_iteration', side_effect=error):
            self.assertEqual(self._run('--iters', '2'), 1)
        checkpoint = os.path.join(self.tmp, 'nav-memgps-seed3', CHECKPOINT_FILE)
        self.assertEqual(load_checkpoint(checkpoint).iteration, 0)
