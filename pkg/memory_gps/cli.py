"""
Command line experiment runner.

    memory-gps run --task nav --method memgps --seed 7 --iters 30
    memory-gps run --resume runs/nav-memgps-seed7/checkpoint.txt
    memory-gps replay runs/nav-memgps-seed7/checkpoint.txt --condition 2
"""
import argparse
import logging
import logging.config
import os
import sys

from memory_gps import get_version
from memory_gps import settings as app_settings
from memory_gps.checks import run_checks
from memory_gps.exceptions import CheckpointError, ImproperlyConfigured, MemoryGPSException
from memory_gps.gps import initialize_run, load_checkpoint, outer_iteration, save_checkpoint
from memory_gps.handlers import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    iteration_handler,
    prepare_run_directory,
    run_directory,
    truncate_metrics,
)
from memory_gps.memory import augment_rollout
from memory_gps.rwr import initialize_rwr, rwr_iteration
from memory_gps.types import METHOD_TYPES, TASK_TYPES, get_method_configuration, make_task

logger = logging.getLogger(__name__)

# experiment keys that command line flags override
FLAG_FIELDS = ('task', 'method', 'seed', 'iters', 'out')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='memory-gps', description='Guided policy search with memory states'
    )
    parser.add_argument('--version', action='version', version=get_version())
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    run = subparsers.add_parser('run', help='train a policy and write run artifacts')
    run.add_argument('--task', choices=sorted(TASK_TYPES))
    run.add_argument('--method', choices=sorted(METHOD_TYPES))
    run.add_argument('--seed', type=int)
    run.add_argument('--iters', type=int, help='outer iterations')
    run.add_argument('--out', help='parent directory of run directories')
    run.add_argument('--config', help='INI file, flags override its values')
    run.add_argument('--resume', metavar='CHECKPOINT', help='continue from a checkpoint')

    replay = subparsers.add_parser('replay', help='print a deterministic policy rollout')
    replay.add_argument('checkpoint')
    replay.add_argument('--condition', type=int, default=0)
    replay.add_argument('--config', help='INI file, defaults to the one next to the checkpoint')
    return parser


def load_config(config_path=None, flags=None):
    """
    Defaults, then the config file, then command line flags.
    """
    user_config = app_settings.read_config_file(config_path) if config_path else {}
    config = app_settings.get_config(user_config)
    for key in FLAG_FIELDS:
        value = (flags or {}).get(key)
        if value is not None:
            config['experiment'][key] = value
    return config


def _sibling_config(checkpoint_path):
    path = os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)), CONFIG_FILE)
    return path if os.path.exists(path) else None


def run_experiment(config, resume=None):
    """
    Runs the configured method to ``iters`` outer iterations and returns
    the process exit code.
    """
    messages = run_checks(config)
    for message in messages:
        if message.is_serious():
            logger.error('%s', message)
        else:
            logger.warning('%s', message)
    if any(message.is_serious() for message in messages):
        return 2

    experiment = config['experiment']
    runner = get_method_configuration(experiment['method'])['runner']
    if resume:
        run = load_checkpoint(resume, config)
        if (run.task.name, run.method) != (experiment['task'], experiment['method']):
            raise ImproperlyConfigured(
                f'checkpoint is a {run.task.name}/{run.method} run, config asks for '
                f'{experiment["task"]}/{experiment["method"]}',
                field='resume',
            )
        path = os.path.dirname(os.path.abspath(resume))
        prepare_run_directory(path, config, resume=True)
        truncate_metrics(path, run.iteration)
        logger.info('resuming from iteration %d', run.iteration)
    else:
        task = make_task(experiment['task'])
        if runner == 'rwr':
            run = initialize_rwr(task, config)
        else:
            run = initialize_run(task, config)
        path = run_directory(config)
        prepare_run_directory(path, config)
        save_checkpoint(run, os.path.join(path, CHECKPOINT_FILE))

    step = rwr_iteration if runner == 'rwr' else outer_iteration
    metrics = None
    try:
        while run.iteration < experiment['iters']:
            metrics = step(run)
            iteration_handler(path, run, metrics)
    except MemoryGPSException as e:
        logger.error('run failed: %s (last checkpoint kept in %s)', e, path)
        return 1
    logger.info(
        'finished %d iterations, final distances %s',
        run.iteration,
        ' '.join(f'{d:.4f}' for d in metrics.distances) if metrics else '-',
    )
    return 0


def _vector(values):
    return '[' + ' '.join(f'{v:.6f}' for v in values) + ']'


def replay(checkpoint_path, condition=0, config=None):
    """
    Table of a deterministic rollout of the checkpointed policy, one line
    per step with ``t, x, o, h, u, m, cost``.
    """
    run = load_checkpoint(checkpoint_path, config)
    task, aug = run.task, run.aug
    if not 0 <= condition < task.num_conditions:
        raise ImproperlyConfigured(
            f'condition should be in 0..{task.num_conditions - 1}', field='condition'
        )
    sample = augment_rollout(task, aug, run.policy, condition)
    d_x, d_o, d_u = task.spec.d_x, task.spec.d_o, task.spec.d_u
    lines = [
        f'# {task.name} {run.method} seed={run.seed} iteration={run.iteration} condition={condition}',
        't x o h u m cost',
    ]
    for step in range(aug.horizon):
        x, o, u = sample.x[step], sample.o[step], sample.u[step]
        lines.append(
            ' '.join(
                [
                    str(step + 1),
                    _vector(x[:d_x]),
                    _vector(o[:d_o]),
                    _vector(x[d_x:]),
                    _vector(u[:d_u]),
                    _vector(u[d_u:]),
                    f'{sample.cost[step]:.6f}',
                ]
            )
        )
    distance = task.metric(sample.x[:, :d_x], condition)
    lines.append(f'# distance {distance:.6f} (success below {task.success_threshold})')
    return '\n'.join(lines) + '\n'


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.config.dictConfig(app_settings.LOGGING)
    if args.verbose:
        logging.getLogger('memory_gps').setLevel(logging.DEBUG)
    try:
        if args.command == 'replay':
            config_path = args.config or _sibling_config(args.checkpoint)
            config = load_config(config_path) if config_path else None
            sys.stdout.write(replay(args.checkpoint, args.condition, config))
            return 0
        config_path = args.config
        if args.resume and not config_path:
            config_path = _sibling_config(args.resume)
        flags = {flag: getattr(args, flag) for flag in FLAG_FIELDS}
        return run_experiment(load_config(config_path, flags), resume=args.resume)
    except ImproperlyConfigured as e:
        logger.error('invalid configuration (%s): %s', e.field or 'config', e)
        return 2
    except CheckpointError as e:
        logger.error('%s', e)
        return 1
