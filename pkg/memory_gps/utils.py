import logging

import numpy as np
from scipy import linalg

from memory_gps import settings as app_settings
from memory_gps.exceptions import CheckpointError, NonFiniteValue, SingularCovariance

logger = logging.getLogger(__name__)


def make_rng(seed, *key):
    """
    Returns a generator keyed by ``seed`` and an optional path of integers
    (iteration, condition, purpose ...). The same key always yields the
    same stream, which makes resumed runs reproduce the original draws.
    """
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def symmetrize(matrix):
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def check_finite(name, *arrays):
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NonFiniteValue(f'{name} contains NaN or infinite values')


def stable_cholesky(matrix, max_retries=None):
    """
    Lower Cholesky factor of ``matrix``; on failure adds
    1e-10 * trace / d to the diagonal, growing tenfold per retry.
    Returns ``(factor, jitter)``; raises ``SingularCovariance`` when the
    retries are exhausted.
    """
    if max_retries is None:
        max_retries = app_settings.CHOLESKY_MAX_RETRIES
    matrix = symmetrize(np.asarray(matrix, dtype=float))
    dim = matrix.shape[0]
    if dim == 0:
        return np.zeros((0, 0)), 0.0
    try:
        return linalg.cholesky(matrix, lower=True), 0.0
    except linalg.LinAlgError:
        pass
    base = abs(np.trace(matrix)) / dim
    if base == 0.0:
        base = 1.0
    jitter = app_settings.CHOLESKY_JITTER_SCALE * base
    for attempt in range(max_retries):
        try:
            factor = linalg.cholesky(matrix + jitter * np.eye(dim), lower=True)
        except linalg.LinAlgError:
            jitter *= app_settings.CHOLESKY_JITTER_GROWTH
            continue
        logger.warning(
            'Cholesky needed jitter %.3e after %d retries', jitter, attempt + 1
        )
        return factor, jitter
    raise SingularCovariance(
        f'matrix not positive definite after {max_retries} jitter retries'
    )


def psd_factor(matrix):
    """
    ``S`` with ``S S^T = matrix`` for drawing Gaussian noise: the Cholesky
    factor of a positive definite ``matrix``, otherwise ``V sqrt(max(w, 0))``
    from its eigendecomposition. No jitter is added, so a zero covariance
    has a zero factor.
    """
    matrix = symmetrize(np.asarray(matrix, dtype=float))
    if not np.any(matrix):
        return np.zeros_like(matrix)
    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError:
        pass
    eigvals, eigvecs = linalg.eigh(matrix)
    return eigvecs * np.sqrt(np.maximum(eigvals, 0.0))


def chol_inverse(factor):
    """
    Inverse of ``L L^T`` given its lower Cholesky factor.
    """
    dim = factor.shape[0]
    return linalg.cho_solve((factor, True), np.eye(dim))


def chol_logdet(factor):
    return 2.0 * np.sum(np.log(np.diag(factor)))


def project_psd(matrix, relative_floor):
    """
    Symmetrizes ``matrix`` and clamps its eigenvalues at
    ``relative_floor * max(largest eigenvalue, 1)``.
    """
    matrix = symmetrize(matrix)
    if matrix.shape[0] == 0:
        return matrix
    eigvals, eigvecs = linalg.eigh(matrix)
    floor = relative_floor * max(eigvals.max(), 1.0)
    eigvals = np.maximum(eigvals, floor)
    return symmetrize((eigvecs * eigvals) @ eigvecs.T)


def embed(matrix, shape, rows=0, cols=0):
    """
    Zero matrix of ``shape`` with ``matrix`` written at (rows, cols).
    """
    out = np.zeros(shape)
    matrix = np.atleast_2d(matrix)
    out[rows : rows + matrix.shape[0], cols : cols + matrix.shape[1]] = matrix
    return out


# text matrix codec
def _format_header(kind, version, meta):
    items = ' '.join(f'{key}={value}' for key, value in meta.items())
    return f'{kind} {version} {items}'.rstrip()


def write_matrices(path, kind, sections, meta=None, version=None):
    """
    Writes ``sections`` (name -> array) as a versioned text file.
    Every array is stored as ``name rows cols`` followed by ``rows``
    lines of row-major values with 17 significant digits. 1-D arrays
    are stored as one row, 3-D arrays as their stack of 2-D slices.
    """
    version = app_settings.CHECKPOINT_VERSION if version is None else version
    fmt = app_settings.MATRIX_FORMAT
    lines = [_format_header(kind, version, meta or {})]
    for name, array in sections.items():
        array = np.asarray(array, dtype=float)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, array.size)
        elif array.ndim > 2:
            array = array.reshape(int(np.prod(array.shape[:-1])), array.shape[-1])
        rows, cols = array.shape
        lines.append(f'{name} {rows} {cols}')
        for row in array:
            lines.append(' '.join(fmt % value for value in row))
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')


def read_matrices(path, kind, version=None):
    """
    Reads a file written by ``write_matrices``; returns ``(meta, sections)``
    with every section as a 2-D array.
    """
    version = app_settings.CHECKPOINT_VERSION if version is None else version
    with open(path) as f:
        lines = f.read().split('\n')
    header = lines[0].split()
    if len(header) < 2 or header[0] != kind:
        raise CheckpointError(f'{path} is not a {kind} file')
    if header[1] != str(version):
        raise CheckpointError(
            f'{path} has version {header[1]}, expected {version}'
        )
    meta = dict(item.split('=', 1) for item in header[2:])
    sections = {}
    index = 1
    while index < len(lines):
        if not lines[index].strip():
            index += 1
            continue
        try:
            name, rows, cols = lines[index].split()
            rows, cols = int(rows), int(cols)
            body = lines[index + 1 : index + 1 + rows]
            values = [[float(v) for v in line.split()] for line in body]
        except ValueError as e:
            raise CheckpointError(f'malformed section at line {index + 1}') from e
        if len(values) != rows or any(len(row) != cols for row in values):
            raise CheckpointError(f'section {name} does not match {rows}x{cols}')
        sections[name] = np.array(values, dtype=float).reshape(rows, cols)
        index += 1 + rows
    return meta, sections
