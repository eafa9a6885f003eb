"""
Per-iteration artifact handlers: metric tables, checkpoints and plots of a
run directory.
"""
import csv
import logging
import os

from memory_gps import get_version
from memory_gps import settings as app_settings
from memory_gps.gps import save_checkpoint
from memory_gps.plots import write_learning_curve, write_traces

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.csv'
HISTORY_FILE = 'history.csv'
CHECKPOINT_FILE = 'checkpoint.txt'
CONFIG_FILE = 'config.ini'
LEARNING_CURVE_FILE = 'learning_curve.svg'
TRACES_FILE = 'traces.svg'
HISTORY_HEADER = ('iter', 'samples', 'mean_cost', 'epsilon', 'nu', 'agreement', 'eta')

ITERATION_HANDLERS = []


def register_iteration_handler(handler):
    ITERATION_HANDLERS.append(handler)
    return handler


def run_directory(config):
    experiment = config['experiment']
    name = f'{experiment["task"]}-{experiment["method"]}-seed{experiment["seed"]}'
    return os.path.join(experiment['out'], name)


def prepare_run_directory(path, config, resume=False):
    """
    Creates ``path`` with the resolved config, seed and version needed to
    reproduce the run; fresh runs start new metric tables.
    """
    os.makedirs(path, exist_ok=True)
    app_settings.write_config_file(config, os.path.join(path, CONFIG_FILE))
    with open(os.path.join(path, 'seed.txt'), 'w') as f:
        f.write(f'{config["experiment"]["seed"]}\n')
    with open(os.path.join(path, 'version.txt'), 'w') as f:
        f.write(f'{get_version()}\n')
    if not resume:
        _write_row(os.path.join(path, METRICS_FILE), app_settings.METRICS_CSV_HEADER, mode='w')
        _write_row(os.path.join(path, HISTORY_FILE), HISTORY_HEADER, mode='w')
    logger.info('writing run artifacts to %s', path)


def _write_row(path, row, mode='a'):
    with open(path, mode, newline='') as f:
        csv.writer(f, lineterminator='\n').writerow(row)


def _fixed(value):
    return f'{value:.6f}'


def read_metrics(path):
    """
    Rows of a metrics table as ``(iter, samples, condition, distance)``.
    """
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != app_settings.METRICS_CSV_HEADER:
            raise ValueError(f'{path} does not have the metrics header')
        return [(int(i), int(s), int(c), float(d)) for i, s, c, d in reader]


def truncate_metrics(path, iteration):
    """
    Drops rows past ``iteration`` so a resumed run continues the table.
    """
    for name in (METRICS_FILE, HISTORY_FILE):
        table = os.path.join(path, name)
        if not os.path.exists(table):
            continue
        with open(table, newline='') as f:
            rows = list(csv.reader(f))
        kept = [rows[0]] + [row for row in rows[1:] if int(row[0]) <= iteration]
        with open(table, 'w', newline='') as f:
            csv.writer(f, lineterminator='\n').writerows(kept)


@register_iteration_handler
def metrics_handler(path, run, metrics):
    for condition, distance in enumerate(metrics.distances):
        _write_row(
            os.path.join(path, METRICS_FILE),
            (metrics.iteration, metrics.samples, condition, _fixed(distance)),
        )
    _write_row(
        os.path.join(path, HISTORY_FILE),
        (
            metrics.iteration,
            metrics.samples,
            _fixed(metrics.mean_cost),
            _fixed(metrics.epsilon),
            _fixed(metrics.nu),
            _fixed(metrics.agreement),
            ' '.join(f'{eta:.6e}' for eta in metrics.eta),
        ),
    )


@register_iteration_handler
def checkpoint_handler(path, run, metrics):
    save_checkpoint(run, os.path.join(path, CHECKPOINT_FILE))


@register_iteration_handler
def plot_handler(path, run, metrics):
    rows = read_metrics(os.path.join(path, METRICS_FILE))
    title = f'{run.task.name} / {run.method} / seed {run.seed}'
    write_learning_curve(
        os.path.join(path, LEARNING_CURVE_FILE), rows, title, run.task.success_threshold
    )
    write_traces(os.path.join(path, TRACES_FILE), run.task, run.aug, run.policy, title)


def iteration_handler(path, run, metrics):
    for handler in ITERATION_HANDLERS:
        handler(path, run, metrics)
