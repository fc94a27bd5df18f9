'''
The default configuration settings in a single string constant, and their
typed form :class:`RunConfig`.

Given how the configuration loader works, only the sections and options
declared here are considered in an external configuration file; anything
else is ignored.  Option names are unique across sections and are the same
as the long command-line flags (dashes replaced by underscores), so a file
made only of ``key = value`` lines works as well.

Use this declaration as a template configuration file (it is shipped as
``data/fampe.conf``).
'''

import configparser
from dataclasses import dataclass, fields
import os.path
import typing

from fampe.engine.attribution import AGGREGATIONS, DEFAULT_ALPHAS, FampeConfig
from fampe.engine.evaluation import BASELINES, EvaluationConfig
from fampe.engine.exceptions import ConfigError
from fampe.engine.shapes import SyntheticShapesSpec

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

METHODS = ('fampe', 'ig', 'attexplore')
IG_BASELINES = ('black', 'blur', 'input')

CONFIG = '''
[CONFIG]
# Reserved section used by the loader to store the location where
#   the configuration settings are coming from, or to store
#   the error if there was one.

[RUN]
# Seed of everything random: dataset, initial weights, visiting order and
#   attribution noise.  The environment variable FAMPE_SEED overrides this
#   default, the configuration file and the --seed flag override both.
seed: 7

# Output directory of the attribute, evaluate and ablate commands.
outdir: out

# Attribution method: fampe, ig or attexplore.
method: fampe

# Threads used for the variants of a step (one sample) or for the samples
#   (evaluate and ablate).
workers: 1

# Show progress bars on stderr.
progress: off

# attribute: also write the map as text (c h w value lines).
#   ablate: also write one heatmap per alpha for the first sample.
text: off
heatmaps: off

[DATASET]
# Dataset directory: images plus labels.csv (filename,label).
dataset: dataset

# Synthetic shapes (synth command).
size: 32
channels: 1
classes: 4
samples_per_class: 50
noise: 0.05

# Number of samples used by evaluate and ablate, 0 for all of them.
limit: 0

# attribute: index of the dataset sample to explain, or an image file
#   (with its label; leave the label blank to explain the predicted class).
sample: 0
image:
label:

[MODEL]
# Model description (JSON); leave blank for the packaged shapes CNN.
model:

# Weights file (FAMW).
weights: weights.famw

# Training.
epochs: 5
learning_rate: 0.01

[FAMPE]
# Additive noise scale (pixel units, divided by 255), multiplicative noise
#   standard deviation, step size, variants per step and number of steps.
epsilon: 48
sigma: 16
eta: 0.05
variants: 20
iters: 10

# Weight of the low-frequency noise, and the alpha grid of the ablation
#   (comma separated; blank for 0.0, 0.1, ..., 1.0).
alpha: 0.5
alphas:

# Fraction of the spectral energy inside the cutoff radius.
tau: 0.9

# Clip the path samples to [0,1]; use one noise draw under both masks.
clip: off
shared_noise: off

# Integrated gradients: number of steps and baseline (black, blur or input).
ig_steps: 64
ig_baseline: black

# Per-pixel importance used for ranking and heatmaps: sum or abs-sum.
aggregation: sum

[EVALUATION]
# Insertion/deletion steps and baseline (black or blur).
steps: 100
baseline: black
blur_sigma: 5.0

# Log the discretization gap of every sample.
discretization_check: off

[LOG]
# Log file: all WARN level logs and above are sent to stderr.
#   To log levels below that a file location is needed.
#   Leave this option blank to not enable a log file.
logfilename:

# Turn debug 'on' if logging of all DEBUG level messages is required, otherwise its INFO
debug: off

# Console level: use NONE for no console output, otherwise the level wanted.
#   Logs will be directed to stdout.  Levels are the ones from the logging module:
#   CRITICAL, ERROR, WARN or WARNING, INFO and DEBUG.
consolelevel: NONE

#------------------------------------------------------------------------------
# Note on file paths: relative paths, in this file or on the command line,
#   are resolved against the directory the command is run from.
#------------------------------------------------------------------------------
'''


def option_sections(cfg_string=CONFIG):
    ''' ``{option: section}`` for every option of the default configuration.'''
    cfg = configparser.RawConfigParser(allow_no_value=True)
    cfg.read_string(cfg_string)
    return {option: section for section in cfg.sections() if section != 'CONFIG'
            for option in cfg.options(section)}


def parse_alphas(text):
    ''' Comma separated alpha values; blank gives the eleven-point grid.'''
    if not text or not text.strip(): return DEFAULT_ALPHAS
    try: alphas = tuple(float(item) for item in text.split(',') if item.strip())
    except ValueError:
        raise ConfigError(''.join(('Alpha grid <', text, '> is not a comma separated list of numbers.')))
    if not alphas:
        raise ConfigError('The alpha grid is empty.')
    for alpha in alphas:
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError('Alpha grid values must be in [0,1], got {}.'.format(alpha))
    return alphas


@dataclass
class RunConfig:
    ''' Typed view of the merged configuration of one command.'''
    command: str
    seed: int
    outdir: str
    method: str
    workers: int
    progress: bool
    text: bool
    heatmaps: bool
    dataset: str
    size: int
    channels: int
    classes: int
    samples_per_class: int
    noise: float
    limit: int
    sample: int
    image: typing.Optional[str]
    label: typing.Optional[int]
    model: str
    weights: str
    epochs: int
    learning_rate: float
    epsilon: float
    sigma: float
    eta: float
    variants: int
    iters: int
    alpha: float
    alphas: tuple
    tau: float
    clip: bool
    shared_noise: bool
    ig_steps: int
    ig_baseline: str
    aggregation: str
    steps: int
    baseline: str
    blur_sigma: float
    discretization_check: bool

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(''.join(('Unknown method <', str(self.method), '>; expected one of ',
                                       ', '.join(METHODS), '.')))
        if self.ig_baseline not in IG_BASELINES:
            raise ConfigError(''.join(('Unknown integrated gradients baseline <', str(self.ig_baseline), '>.')))
        if self.baseline not in BASELINES:
            raise ConfigError(''.join(('Unknown evaluation baseline <', str(self.baseline), '>.')))
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(''.join(('Unknown aggregation <', str(self.aggregation), '>.')))
        if self.limit < 0 or self.sample < 0:
            raise ConfigError('limit and sample must be >= 0.')
        if self.ig_steps < 1:
            raise ConfigError('ig_steps must be >= 1.')
        if self.workers < 1:
            raise ConfigError('workers must be >= 1.')
        if self.epochs < 0:
            raise ConfigError('epochs must be >= 0.')

    @classmethod
    def from_config(cls, cfg, command):
        ''' Reads and converts every option of the merged configuration.

        Args:
            cfg (configparser.RawConfigParser): the loaded configuration.
            command (string): the command being run.

        Raises:
            ConfigError: a value that does not convert to its type.
        '''
        sections = option_sections()
        values = {'command': command}
        for item in fields(cls):
            if item.name == 'command': continue
            section = sections[item.name]
            try:
                if item.type is int:
                    values[item.name] = cfg.getint(section, item.name)
                elif item.type is float:
                    values[item.name] = cfg.getfloat(section, item.name)
                elif item.type is bool:
                    values[item.name] = cfg.getboolean(section, item.name)
                else:
                    values[item.name] = cfg.get(section, item.name)
            except ValueError as err:
                raise ConfigError(''.join(('Option [', section, '].', item.name, ': ', str(err), '.')))
        values['image'] = values['image'] or None
        if values['label']:
            try: values['label'] = int(values['label'])
            except ValueError:
                raise ConfigError(''.join(('Option label <', values['label'], '> is not an integer.')))
        else:
            values['label'] = None
        values['alphas'] = parse_alphas(values['alphas'])
        values['model'] = values['model'] or app.data_path('shapes_cnn.json')
        for key in ('outdir', 'dataset', 'model', 'weights', 'image'):
            if values[key]: values[key] = resolve_path(values[key])
        return cls(**values)

    def fampe_config(self, **changes):
        ''' Hyperparameters of the path-walking engines.'''
        cfg = FampeConfig(epsilon=self.epsilon, sigma=self.sigma, eta=self.eta, n_variants=self.variants,
                          n_iters=self.iters, alpha=self.alpha, tau=self.tau, seed=self.seed, clip=self.clip,
                          shared_noise=self.shared_noise, workers=self.workers)
        return cfg.replace(**changes) if changes else cfg

    def evaluation_config(self):
        return EvaluationConfig(steps=self.steps, baseline_kind=self.baseline, blur_sigma=self.blur_sigma)

    def shapes_spec(self):
        return SyntheticShapesSpec(size=self.size, channels=self.channels, class_count=self.classes,
                                   samples_per_class=self.samples_per_class, noise=self.noise, seed=self.seed)

    def output_path(self, filename):
        return os.path.join(self.outdir, filename)


def resolve_path(path):
    ''' Absolute path; relative paths are taken from the application directory.'''
    return app.Properties.get_path(path)
