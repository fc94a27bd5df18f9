'''
Synthetic shapes dataset.

Each class draws one kind of shape, bright on a dark background, with a
random position, size and intensity, plus Gaussian pixel noise.  Samples are
interleaved by class (sample ``k`` has class ``k % class_count``) and every
sample comes from its own seeded stream, so the dataset is a deterministic
function of the spec.  Pixel values are rounded to the 8-bit grid so that
writing and reading the images back is lossless.
'''

from dataclasses import dataclass

import numpy as np

from fampe.engine import rng
from fampe.engine.exceptions import ConfigError
from fampe.engine.fileformats import quantise
from fampe.engine.model import LabeledSample

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

CLASS_NAMES = ('disk', 'square', 'cross', 'stripes', 'ring', 'checker')


@dataclass(frozen=True)
class SyntheticShapesSpec:
    ''' Size, channels, classes, samples per class, noise level and seed of the dataset.'''
    size: int = 32
    channels: int = 1
    class_count: int = 4
    samples_per_class: int = 50
    noise: float = 0.05
    seed: int = 7

    def __post_init__(self):
        if self.size < 8:
            raise ConfigError('Synthetic images need size >= 8, got {}.'.format(self.size))
        if not 2 <= self.class_count <= len(CLASS_NAMES):
            raise ConfigError('Synthetic class count must be in [2, {}], got {}.'
                              .format(len(CLASS_NAMES), self.class_count))
        if self.channels not in (1, 3):
            raise ConfigError('Synthetic images have 1 or 3 channels, got {}.'.format(self.channels))
        if self.samples_per_class < 1:
            raise ConfigError('Samples per class must be >= 1.')
        if self.noise < 0:
            raise ConfigError('Noise level must be >= 0.')
        rng.check_seed(self.seed)

    @property
    def extension(self):
        return '.pgm' if self.channels == 1 else '.ppm'

    @property
    def class_names(self):
        return CLASS_NAMES[:self.class_count]


def _grid(size):
    rows, cols = np.mgrid[0:size, 0:size]
    return rows.astype(np.float64), cols.astype(np.float64)


def _disk(size, gen):
    rows, cols = _grid(size)
    radius = gen.uniform(0.18, 0.3) * size
    cy, cx = gen.uniform(radius, size - radius, 2)
    return ((rows - cy) ** 2 + (cols - cx) ** 2 <= radius ** 2).astype(np.float64)


def _square(size, gen):
    rows, cols = _grid(size)
    half = gen.uniform(0.15, 0.28) * size
    cy, cx = gen.uniform(half, size - half, 2)
    return ((np.abs(rows - cy) <= half) & (np.abs(cols - cx) <= half)).astype(np.float64)


def _cross(size, gen):
    rows, cols = _grid(size)
    arm = gen.uniform(0.25, 0.4) * size
    width = max(1.0, gen.uniform(0.05, 0.1) * size)
    cy, cx = gen.uniform(arm, size - arm, 2)
    horizontal = (np.abs(rows - cy) <= width) & (np.abs(cols - cx) <= arm)
    vertical = (np.abs(cols - cx) <= width) & (np.abs(rows - cy) <= arm)
    return (horizontal | vertical).astype(np.float64)


def _stripes(size, gen):
    rows, cols = _grid(size)
    period = gen.integers(4, max(5, size // 4) + 1)
    phase = gen.uniform(0, period)
    axis = rows if gen.random() < 0.5 else cols
    return (((axis + phase) % period) < period / 2.0).astype(np.float64)


def _ring(size, gen):
    rows, cols = _grid(size)
    outer = gen.uniform(0.22, 0.32) * size
    inner = outer * gen.uniform(0.45, 0.65)
    cy, cx = gen.uniform(outer, size - outer, 2)
    dist2 = (rows - cy) ** 2 + (cols - cx) ** 2
    return ((dist2 <= outer ** 2) & (dist2 >= inner ** 2)).astype(np.float64)


def _checker(size, gen):
    rows, cols = _grid(size)
    cell = gen.integers(3, max(4, size // 6) + 1)
    oy, ox = gen.integers(0, cell, 2)
    return ((((rows + oy) // cell) + ((cols + ox) // cell)) % 2).astype(np.float64)


_DRAWERS = {'disk': _disk, 'square': _square, 'cross': _cross,
            'stripes': _stripes, 'ring': _ring, 'checker': _checker}


def render(spec, label, index):
    ''' The ``index``-th image of class ``label``, C x H x W on the 8-bit grid.'''
    gen = rng.stream(spec.seed, label, index)
    shape = _DRAWERS[CLASS_NAMES[label]](spec.size, gen)
    intensity = gen.uniform(0.6, 1.0)
    background = gen.uniform(0.0, 0.15)
    plane = background + (intensity - background) * shape
    image = np.repeat(plane[np.newaxis], spec.channels, axis=0)
    if spec.channels == 3:
        image = image * gen.uniform(0.7, 1.0, 3)[:, np.newaxis, np.newaxis]
    image = image + gen.normal(0.0, spec.noise, image.shape)
    levels = quantise(np.clip(image, 0.0, 1.0))
    if levels.ndim == 2: levels = levels[np.newaxis]
    else: levels = np.transpose(levels, (2, 0, 1))
    return levels.astype(np.float64) / 255.0


def generate(spec):
    ''' All the samples of the dataset, interleaved by class.

    Returns:
        list of LabeledSample
    '''
    samples = []
    for index in range(spec.samples_per_class):
        for label in range(spec.class_count):
            samples.append(LabeledSample(render(spec, label, index), label))
    _logger.info('Generated %d synthetic samples (%s).', len(samples), ', '.join(spec.class_names))
    return samples
