import os
import tempfile
from unittest import TestCase
from unittest.mock import patch

import numpy as np

from memory_gps.exceptions import CheckpointError, NonFiniteValue, SingularCovariance
from memory_gps.utils import (
    check_finite,
    chol_inverse,
    chol_logdet,
    embed,
    make_rng,
    project_psd,
    psd_factor,
    read_matrices,
    stable_cholesky,
    write_matrices,
)


class TestRandomStreams(TestCase):
    def test_same_key_same_stream(self):
        a = make_rng(7, 3, 1, 0).standard_normal(5)
        b = make_rng(7, 3, 1, 0).standard_normal(5)
        self.assertTrue(np.array_equal(a, b))

    def test_keys_are_independent(self):
        base = make_rng(7, 3, 1, 0).standard_normal(5)
        for key in [(8, 3, 1, 0), (7, 4, 1, 0), (7, 3, 2, 0), (7, 3, 1, 1)]:
            with self.subTest(key=key):
                self.assertFalse(np.array_equal(base, make_rng(*key).standard_normal(5)))


class TestLinearAlgebra(TestCase):
    def test_cholesky_of_positive_definite(self):
        matrix = np.array([[4.0, 1.0], [1.0, 3.0]])
        factor, jitter = stable_cholesky(matrix)
        self.assertEqual(jitter, 0.0)
        np.testing.assert_allclose(factor @ factor.T, matrix, atol=1e-12)

    def test_cholesky_jitter_escalation(self):
        singular = np.array([[1.0, 1.0], [1.0, 1.0]])
        with self.assertLogs('memory_gps.utils', level='WARNING'):
            factor, jitter = stable_cholesky(singular)
        self.assertGreater(jitter, 0.0)
        self.assertLessEqual(jitter, 1e-10 * 1e5)
        np.testing.assert_allclose(factor @ factor.T, singular + jitter * np.eye(2), atol=1e-12)

    def test_cholesky_gives_up(self):
        with self.assertRaises(SingularCovariance):
            stable_cholesky(np.array([[-1.0]]))

    def test_noise_factor(self):
        with self.subTest('positive definite'):
            matrix = np.array([[4.0, 1.0], [1.0, 3.0]])
            np.testing.assert_allclose(psd_factor(matrix), np.linalg.cholesky(matrix), atol=1e-14)
        with self.subTest('zero covariance'):
            with patch('memory_gps.utils.logger') as logger:
                factor = psd_factor(np.zeros((3, 3)))
            self.assertTrue(np.array_equal(factor, np.zeros((3, 3))))
            logger.warning.assert_not_called()
        with self.subTest('rank deficient'):
            singular = np.array([[1.0, 1.0], [1.0, 1.0]])
            factor = psd_factor(singular)
            np.testing.assert_allclose(factor @ factor.T, singular, atol=1e-12)

    def test_cholesky_helpers(self):
        matrix = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
        factor, _ = stable_cholesky(matrix)
        np.testing.assert_allclose(chol_inverse(factor), np.linalg.inv(matrix), atol=1e-12)
        self.assertAlmostEqual(chol_logdet(factor), np.log(np.linalg.det(matrix)), places=12)

    def test_project_psd(self):
        projected = project_psd(np.diag([1.0, -1.0]), 1e-8)
        np.testing.assert_allclose(projected, np.diag([1.0, 1e-8]), atol=1e-14)
        with self.subTest('floor is relative to the largest eigenvalue'):
            projected = project_psd(np.diag([100.0, -1.0]), 1e-8)
            self.assertAlmostEqual(projected[1, 1], 1e-6, places=14)

    def test_embed(self):
        out = embed(np.ones((2, 1)), (3, 3), rows=1, cols=2)
        expected = np.zeros((3, 3))
        expected[1:, 2] = 1.0
        self.assertTrue(np.array_equal(out, expected))

    def test_check_finite(self):
        check_finite('ok', np.zeros(3), np.ones((2, 2)))
        with self.assertRaises(NonFiniteValue):
            check_finite('bad', np.zeros(3), np.array([1.0, np.nan]))


class TestMatrixCodec(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'matrices.txt')

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_and_read(self):
        rng = make_rng(0)
        stack = rng.standard_normal((3, 2, 2))
        write_matrices(
            self.path,
            'test-kind',
            {'stack': stack, 'vector': [1.0 / 3.0, -2.5], 'scalar': np.pi},
            meta={'seed': 7, 'task': 'nav'},
        )
        meta, sections = read_matrices(self.path, 'test-kind')
        self.assertEqual(meta, {'seed': '7', 'task': 'nav'})
        self.assertTrue(np.array_equal(sections['stack'].reshape(3, 2, 2), stack))
        self.assertEqual(sections['vector'].shape, (1, 2))
        self.assertEqual(sections['vector'][0, 0], 1.0 / 3.0)
        self.assertEqual(sections['scalar'][0, 0], np.pi)

    def test_rejects_other_files(self):
        write_matrices(self.path, 'test-kind', {'a': [1.0]}, version=1)
        with self.subTest('wrong kind'):
            with self.assertRaises(CheckpointError):
                read_matrices(self.path, 'other-kind', version=1)
        with self.subTest('wrong version'):
            with self.assertRaises(CheckpointError):
                read_matrices(self.path, 'test-kind', version=2)
        with self.subTest('truncated section'):
            with open(self.path) as f:
                lines = f.read().splitlines()
            with open(self.path, 'w') as f:
                f.write('\n'.join(lines[:-1] + ['b 2 2', '1 2']) + '\n')
            with self.assertRaises(CheckpointError):
                read_matrices(self.path, 'test-kind', version=1)
