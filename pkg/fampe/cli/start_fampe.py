'''
Defines the function that starts a command of the application.

:func:`main` parses the command line, loads the configuration (built-in
defaults, then the ``FAMPE_SEED`` environment variable, then the file given
with ``--config``, then the flags), initialises the logger, logs the
configuration used and runs the command.

Any error of the package (and any OS error) ends the command with the
single line ``error: <code>: <message>`` on stderr and exit status 1;
command line errors print ``error: usage: <message>`` and keep the exit
status 2 of argparse.
'''

import argparse
import os
import sys

import fampe.utils.app_properties as app
from fampe.utils.init_logger import initlogger
from fampe.utils.load_config import loadconfig

from fampe.cli import commands
from fampe.cli.configuration import CONFIG, IG_BASELINES, METHODS, RunConfig, option_sections, resolve_path
from fampe.engine.exceptions import AnyError, ConfigError
from fampe.engine.evaluation import BASELINES
from fampe.engine.attribution import AGGREGATIONS
from fampe.version import version

SEED_VARIABLE = 'FAMPE_SEED'

_ON = 'on'


class CommandLineParser(argparse.ArgumentParser):
    ''' Argument parser reporting its errors on a single ``error: usage:`` line.'''

    def error(self, message):
        self.exit(2, ''.join(('error: usage: ', ' '.join(message.split()), ' (', self.prog, ')\n')))


def _flag(parser, *names, **kwargs):
    ''' Adds an option whose absence leaves the configuration value untouched.'''
    parser.add_argument(*names, default=argparse.SUPPRESS, **kwargs)


def _switch(parser, name, dest, text):
    parser.add_argument(name, dest=dest, action='store_const', const=_ON, default=argparse.SUPPRESS, help=text)


def _common_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--config', default=None, help='configuration file (key = value lines, sections optional)')
    _flag(parser, '--seed', type=int, help='seed of everything random')
    _flag(parser, '--outdir', '--out', dest='outdir', help='output directory')
    _flag(parser, '--dataset', help='dataset directory')
    _flag(parser, '--workers', type=int, help='threads for variants or samples')
    _switch(parser, '--progress', 'progress', 'show progress bars')
    _flag(parser, '--logfilename', help='log file')
    _switch(parser, '--debug', 'debug', 'log DEBUG messages in the log file')
    _flag(parser, '--consolelevel', help='level of the logs sent to stdout, or NONE')
    return parser


def _model_options():
    parser = argparse.ArgumentParser(add_help=False)
    _flag(parser, '--model', help='model description (JSON)')
    _flag(parser, '--weights', help='weights file (FAMW)')
    return parser


def _attribution_options():
    parser = argparse.ArgumentParser(add_help=False)
    _flag(parser, '--method', help='attribution method: ' + ', '.join(METHODS))
    _flag(parser, '--epsilon', type=float, help='additive noise scale, pixel units')
    _flag(parser, '--sigma', type=float, help='multiplicative noise standard deviation')
    _flag(parser, '--eta', type=float, help='step size')
    _flag(parser, '--variants', '--n-variants', dest='variants', type=int, help='variants per step')
    _flag(parser, '--iters', '--n-iters', dest='iters', type=int, help='number of steps')
    _flag(parser, '--alpha', type=float, help='weight of the low-frequency noise')
    _flag(parser, '--tau', type=float, help='energy fraction of the cutoff')
    _switch(parser, '--clip', 'clip', 'clip the path samples to [0,1]')
    _switch(parser, '--shared-noise', 'shared_noise', 'one noise draw under both masks')
    _flag(parser, '--ig-steps', dest='ig_steps', type=int, help='integrated gradients steps')
    _flag(parser, '--ig-baseline', dest='ig_baseline', help='integrated gradients baseline: ' + ', '.join(IG_BASELINES))
    _flag(parser, '--aggregation', help='per-pixel importance rule: ' + ', '.join(AGGREGATIONS))
    _flag(parser, '--steps', type=int, help='insertion/deletion steps')
    _flag(parser, '--baseline', help='insertion/deletion baseline: ' + ', '.join(BASELINES))
    _flag(parser, '--blur-sigma', dest='blur_sigma', type=float, help='width of the blurred baseline')
    return parser


def build_parser():
    ''' The argument parser, one sub-command per command.'''
    common = _common_options()
    model = _model_options()
    attribution = _attribution_options()
    parser = CommandLineParser(prog='fampe', description='Frequency-aware attribution toolkit.')
    parser.add_argument('--version', action='version', version=' '.join(('%(prog)s', version)))
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    synth = subparsers.add_parser('synth', parents=[common], help='write the synthetic shapes dataset')
    _flag(synth, '--size', type=int, help='image side')
    _flag(synth, '--channels', type=int, help='1 (PGM) or 3 (PPM)')
    _flag(synth, '--classes', type=int, help='number of classes')
    _flag(synth, '--samples-per-class', dest='samples_per_class', type=int, help='samples per class')
    _flag(synth, '--noise', type=float, help='pixel noise standard deviation')

    train = subparsers.add_parser('train', parents=[common, model], help='train the model')
    _flag(train, '--epochs', type=int, help='training epochs')
    _flag(train, '--learning-rate', '--lr', dest='learning_rate', type=float, help='SGD step')

    attribute = subparsers.add_parser('attribute', parents=[common, model, attribution],
                                      help='explain one sample')
    _flag(attribute, '--sample', type=int, help='index of the dataset sample')
    _flag(attribute, '--image', help='image file to explain instead of a dataset sample')
    _flag(attribute, '--label', help='class to explain (default: the label or the prediction)')
    _switch(attribute, '--text', 'text', 'also write the map as text')

    evaluate = subparsers.add_parser('evaluate', parents=[common, model, attribution],
                                     help='insertion and deletion scores over the dataset')
    _flag(evaluate, '--limit', type=int, help='number of samples, 0 for all')
    _switch(evaluate, '--discretization-check', 'discretization_check', 'log the discretization gap')

    ablate = subparsers.add_parser('ablate', parents=[common, model, attribution],
                                   help='alpha ablation over the dataset')
    _flag(ablate, '--limit', type=int, help='number of samples, 0 for all')
    _flag(ablate, '--alphas', help='comma separated alpha grid')
    _switch(ablate, '--heatmaps', 'heatmaps', 'write one heatmap per alpha for the first sample')
    return parser


def load_run_config(args):
    ''' Merges defaults, environment, file and flags, initialises the logger.

    Returns:
        RunConfig

    Raises:
        ConfigError: unreadable configuration file or invalid values.
    '''
    app.Properties.init()
    conffilepath = resolve_path(args.config) if args.config else None
    cfg = loadconfig(CONFIG, conffilepath, preset={'RUN': {'seed': os.environ.get(SEED_VARIABLE)}})
    sections = option_sections()
    for option, value in vars(args).items():
        if option in sections: cfg.set(sections[option], option, str(value))

    # Initialise the logger handlers
    logfilename = cfg.get('LOG', 'logfilename')
    logfilepath = resolve_path(logfilename) if logfilename else None
    try: log_debug = cfg.getboolean('LOG', 'debug')
    except ValueError as err: raise ConfigError(''.join(('Option [LOG].debug: ', str(err), '.')))
    initlogger(app.Properties.root_logger, (logfilepath, log_debug, cfg.get('LOG', 'consolelevel')))
    logger = app.Properties.get_logger(__name__)

    # Log the configuration used.
    logger.info(''.join(('=== COMMAND ', args.command.upper(), ' STARTED ===')))
    logger.info('Configuration:')
    for section in cfg.sections():
        for option in cfg.options(section):
            logger.info(''.join(('   [', section, '].', option, ' : <', str(cfg.get(section, option)), '>.')))

    if cfg.has_option('CONFIG', 'error'):
        raise ConfigError(cfg.get('CONFIG', 'error'))
    return RunConfig.from_config(cfg, args.command)


def _fail(code, err):
    message = ' '.join(str(err).split())
    print(''.join(('error: ', code, ': ', message)), file=sys.stderr)
    return 1


def main(argv=None):
    ''' Runs one command.

    Args:
        argv (list of string): the arguments, ``sys.argv[1:]`` if None.

    Returns:
        int: the exit status, 0 on success.
    '''
    args = build_parser().parse_args(argv)
    try:
        run = load_run_config(args)
        commands.COMMANDS[run.command](run)
    except AnyError as err:
        return _fail(err.code, err)
    except OSError as err:
        return _fail('io', err)
    app.Properties.get_logger(__name__).info(''.join(('=== COMMAND ', args.command.upper(), ' DONE ===')))
    return 0
