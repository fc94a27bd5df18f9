'''
Attribution engines.

- :func:`fampe_attribute` walks a non-linear path of sign-gradient steps
  (an untargeted attack that increases the loss).  At every step the gradient
  is averaged over N frequency-aware variants of the current sample, whose
  spectrum is scaled by low-pass and high-pass masked multiplicative noise
  blended by ``alpha``; the attribution accumulates ``step * gradient``.
- :func:`attexplore_attribute` is the same walk with all-pass DCT-domain
  noise variants.
- :func:`ig_attribute` is the straight-line integrated gradients of the
  target logit, midpoint rule.
- :func:`alpha_sweep` runs the frequency-aware engine over a grid of
  ``alpha`` values and keeps the best insertion and deletion scores.

The engines need from a model only ``logits(x)``, ``input_gradient(x, y)``
and ``logit_gradient(x, y)`` (see :class:`GradientModel`).

All noise comes from streams keyed by ``(seed, iteration, variant, channel)``
so results do not depend on scheduling.
'''

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import typing

import numpy as np

from fampe.engine import evaluation, rng
from fampe.engine.exceptions import ConfigError, DegenerateSpectrumError, NonFiniteError, ShapeError, check_finite
from fampe.engine.spectral import (CutoffRadius, Spectrum, dct2d, fft2d, fftshift, gaussian_lowpass_mask,
                                   highpass_mask, idct2d, ifft2d, ifftshift, image_energy_cutoff, max_radius)

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

AGGREGATIONS = ('sum', 'abs-sum')
DEFAULT_ALPHAS = tuple(k / 10.0 for k in range(11))


class GradientModel(typing.Protocol):
    ''' What the engines need from a classifier.'''

    def logits(self, x): ...

    def input_gradient(self, x, y): ...

    def logit_gradient(self, x, y): ...


@dataclass
class AttributionMap:
    ''' Per-feature relevance, same C x H x W shape as the explained image.

    Args:
        values (numpy.ndarray): the relevance.
        channel_aggregation (string): ``sum`` or ``abs-sum``, the rule used to
            turn the map into one importance per pixel.
        cutoff (float): the cutoff radius used, for frequency-aware maps.
        method (string): the engine that produced the map.
    '''
    values: np.ndarray
    channel_aggregation: str = 'sum'
    cutoff: typing.Optional[float] = None
    method: typing.Optional[str] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ShapeError('Attribution map must be C x H x W, got shape {}.'.format(self.values.shape))
        if self.channel_aggregation not in AGGREGATIONS:
            raise ConfigError(''.join(('Unknown channel aggregation <', str(self.channel_aggregation), '>.')))
        check_finite(self.values, 'attribution map')

    @property
    def shape(self):
        return self.values.shape

    def aggregate(self):
        ''' One importance per pixel, H x W.'''
        if self.channel_aggregation == 'abs-sum':
            return np.abs(self.values).sum(axis=0)
        return self.values.sum(axis=0)

    def with_aggregation(self, rule):
        return replace(self, channel_aggregation=rule)


@dataclass(frozen=True)
class FampeConfig:
    ''' Hyperparameters of the path-walking engines.

    Args:
        epsilon (float): additive spatial noise scale, in pixel units (noise is
            ``N(0,1) * epsilon / 255``).
        sigma (float): standard deviation of the multiplicative spectral noise ``N(1, sigma)``.
        eta (float): step size of the sign-gradient steps.
        n_variants (int): N, variants averaged per step.
        n_iters (int): T, number of steps.
        alpha (float): weight of the low-frequency noise, in [0,1].
        tau (float): energy fraction of the cutoff, in (0,1].
        seed (int): base seed of the noise streams.
        clip (bool): clip the path samples to [0,1] (off: unclipped ascent).
        shared_noise (bool): use the same multiplicative draw under both masks.
        workers (int): threads computing the variants of one step.
    '''
    epsilon: float = 48.0
    sigma: float = 16.0
    eta: float = 0.05
    n_variants: int = 20
    n_iters: int = 10
    alpha: float = 0.5
    tau: float = 0.9
    seed: int = 0
    clip: bool = False
    shared_noise: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError('alpha must be in [0,1], got {}.'.format(self.alpha))
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError('tau must be in (0,1], got {}.'.format(self.tau))
        if self.n_variants < 1:
            raise ConfigError('n_variants must be >= 1, got {}.'.format(self.n_variants))
        if self.n_iters < 1:
            raise ConfigError('n_iters must be >= 1, got {}.'.format(self.n_iters))
        if not self.eta > 0.0:
            raise ConfigError('eta must be > 0, got {}.'.format(self.eta))
        if self.epsilon < 0.0 or self.sigma < 0.0:
            raise ConfigError('epsilon and sigma must be >= 0.')
        if self.workers < 1:
            raise ConfigError('workers must be >= 1, got {}.'.format(self.workers))
        rng.check_seed(self.seed)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class PathState:
    ''' One step of the walk: the sample ``x_t`` where the mean gradient was
    taken, the step applied from it and the attribution accumulated so far.'''
    t: int
    x_t: np.ndarray
    accumulated: np.ndarray
    step: typing.Optional[np.ndarray] = None
    gradient: typing.Optional[np.ndarray] = None


def _check_image(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError('Expected a C x H x W image, got shape {}.'.format(x.shape))
    check_finite(x, 'image')
    return x


def resolve_cutoff(x, tau):
    ''' Cutoff of the image, or half the largest radius for a constant image.'''
    x = _check_image(x)
    try:
        return image_energy_cutoff(x, tau)
    except DegenerateSpectrumError:
        fallback = CutoffRadius(max_radius(*x.shape[1:]) / 2.0)
        _logger.warning('Constant image: using the fallback cutoff %.4f.', fallback.value)
        return fallback


def fampe_noise(cfg, low, high, variant, iteration, channel):
    ''' Additive spatial noise and spectral multiplier of one channel of one variant.

    The multiplier is ``alpha * low * n1 + (1 - alpha) * high * n2`` with n1,
    n2 independent ``N(1, sigma)`` fields (the same field if
    ``cfg.shared_noise``).

    Returns:
        (numpy.ndarray, numpy.ndarray): additive noise and multiplier, H x W.
    '''
    generator = rng.variant_stream(cfg.seed, iteration, variant, channel)
    shape = low.shape
    additive = generator.standard_normal(shape) * (cfg.epsilon / 255.0)
    n_low = generator.normal(1.0, cfg.sigma, shape)
    n_high = n_low if cfg.shared_noise else generator.normal(1.0, cfg.sigma, shape)
    return additive, cfg.alpha * low * n_low + (1.0 - cfg.alpha) * high * n_high


def attexplore_noise(cfg, shape, variant, iteration, channel):
    ''' Additive spatial noise and all-pass multiplier ``N(1, sigma)``.

    Reads the same stream as :func:`fampe_noise`, so with a shared draw the
    frequency-aware multiplier at ``alpha = 0.5`` is half this one.
    '''
    generator = rng.variant_stream(cfg.seed, iteration, variant, channel)
    additive = generator.standard_normal(shape) * (cfg.epsilon / 255.0)
    return additive, generator.normal(1.0, cfg.sigma, shape)


def frequency_aware_variant(x_t, cutoff, cfg, variant, iteration):
    ''' The ``variant``-th frequency-aware variant of ``x_t`` at ``iteration``.

    Per channel: add spatial noise, FFT and shift, scale by the masked noise
    multiplier, un-shift, inverse FFT and keep the real part.
    '''
    x_t = np.asarray(x_t, dtype=np.float64)
    height, width = x_t.shape[1:]
    low = gaussian_lowpass_mask(height, width, cutoff).data
    high = highpass_mask(height, width, cutoff).data
    out = np.empty_like(x_t)
    for channel in range(x_t.shape[0]):
        additive, multiplier = fampe_noise(cfg, low, high, variant, iteration, channel)
        spec = fftshift(fft2d(x_t[channel] + additive))
        out[channel] = ifft2d(ifftshift(Spectrum(spec.data * multiplier, shifted=True)))
    return out


def attexplore_variant(x_t, cfg, variant, iteration):
    ''' All-pass variant: ``IDCT(DCT(x + noise) * N(1, sigma))`` per channel.'''
    x_t = np.asarray(x_t, dtype=np.float64)
    out = np.empty_like(x_t)
    for channel in range(x_t.shape[0]):
        additive, multiplier = attexplore_noise(cfg, x_t.shape[1:], variant, iteration, channel)
        out[channel] = idct2d(dct2d(x_t[channel] + additive) * multiplier)
    return out


def _mean_gradient(model, y, variants, n_variants, workers):
    ''' Average of the loss gradients at ``variants(i)``, i < n, summed in index order.'''
    def one(index):
        return model.input_gradient(variants(index), y)
    if workers > 1 and n_variants > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grads = list(pool.map(one, range(n_variants)))
    else:
        grads = [one(index) for index in range(n_variants)]
    total = np.zeros_like(grads[0])
    for grad in grads:
        total += grad
    return total / n_variants


def mean_input_gradient(model, x_t, y, cutoff, cfg, iteration):
    ''' Mean loss gradient over the N frequency-aware variants of ``x_t``.'''
    return _mean_gradient(model, y, lambda i: frequency_aware_variant(x_t, cutoff, cfg, i, iteration),
                          cfg.n_variants, cfg.workers)


def attexplore_mean_gradient(model, x_t, y, cfg, iteration):
    ''' Mean loss gradient over the N all-pass variants of ``x_t``.'''
    return _mean_gradient(model, y, lambda i: attexplore_variant(x_t, cfg, i, iteration),
                          cfg.n_variants, cfg.workers)


def step_direction(g_mean, eta):
    ''' ``eta * sign(g)``, with sign(0) = 0.'''
    return eta * np.sign(g_mean)


def iterate_path(x, cfg, mean_gradient):
    ''' Walks the attack path and yields a :class:`PathState` per step.

    Args:
        x (numpy.ndarray): the starting image.
        cfg (FampeConfig): step size, number of steps, clipping.
        mean_gradient (callable): ``(x_t, t) -> g``.

    Raises:
        NonFiniteError: a gradient or a path sample is not finite; the message
            names the iteration.
    '''
    x_t = _check_image(x).copy()
    accumulated = np.zeros_like(x_t)
    for t in range(cfg.n_iters):
        g = mean_gradient(x_t, t)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError('Non-finite mean gradient at iteration {}.'.format(t))
        step = step_direction(g, cfg.eta)
        accumulated = accumulated + step * g
        _logger.debug('Iteration %d: mean |g| %.6e.', t, float(np.mean(np.abs(g))))
        yield PathState(t, x_t, accumulated, step, g)
        x_t = x_t + step
        if cfg.clip: x_t = np.clip(x_t, 0.0, 1.0)
        if not np.all(np.isfinite(x_t)):
            raise NonFiniteError('Non-finite path sample after iteration {}.'.format(t))


def _walk(states):
    state = None
    for state in states: pass
    return state.accumulated


def fampe_attribute(model, x, y, cfg, cutoff=None):
    ''' Frequency-aware attribution of class ``y`` on image ``x``.

    The cutoff comes from the original image (energy fraction ``cfg.tau``)
    unless given, and stays fixed along the path.

    Returns:
        AttributionMap
    '''
    x = _check_image(x)
    if cutoff is None: cutoff = resolve_cutoff(x, cfg.tau)
    elif not isinstance(cutoff, CutoffRadius): cutoff = CutoffRadius(float(cutoff))
    values = _walk(iterate_path(x, cfg, lambda x_t, t: mean_input_gradient(model, x_t, y, cutoff, cfg, t)))
    return AttributionMap(values, 'sum', cutoff=cutoff.value, method='fampe')


def attexplore_attribute(model, x, y, cfg):
    ''' All-pass baseline: same walk as :func:`fampe_attribute`, DCT-domain variants.'''
    x = _check_image(x)
    values = _walk(iterate_path(x, cfg, lambda x_t, t: attexplore_mean_gradient(model, x_t, y, cfg, t)))
    return AttributionMap(values, 'sum', method='attexplore')


def ig_attribute(model, x, y, baseline=None, steps=64):
    ''' Integrated gradients of the logit of class ``y``, midpoint rule.

    ``(x - x') * mean_k grad f(x' + (k - 0.5)/m * (x - x'))`` for k = 1..m.

    Args:
        baseline (numpy.ndarray): x', zeros if None.
        steps (int): m >= 1.

    Raises:
        ShapeError: baseline and image shapes differ.
    '''
    x = _check_image(x)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ShapeError('Baseline shape {} differs from the image shape {}.'.format(baseline.shape, x.shape))
    if steps < 1:
        raise ConfigError('Integrated gradients need steps >= 1, got {}.'.format(steps))
    delta = x - baseline
    total = np.zeros_like(x)
    for k in range(1, steps + 1):
        total += model.logit_gradient(baseline + ((k - 0.5) / steps) * delta, y)
    return AttributionMap(delta * (total / steps), 'sum', method='ig')


@dataclass
class AlphaSweep:
    ''' Maps and scores of one image over a grid of alpha values.'''
    alphas: tuple
    maps: list
    insertions: list
    deletions: list
    cutoff: float
    best_insertion: float = field(init=False)
    best_deletion: float = field(init=False)
    best_insertion_alpha: float = field(init=False)
    best_deletion_alpha: float = field(init=False)

    def __post_init__(self):
        best = int(np.argmax(self.insertions))
        worst = int(np.argmin(self.deletions))
        self.best_insertion = float(self.insertions[best])
        self.best_deletion = float(self.deletions[worst])
        self.best_insertion_alpha = float(self.alphas[best])
        self.best_deletion_alpha = float(self.alphas[worst])


def alpha_sweep(model, x, y, cfg, alphas=DEFAULT_ALPHAS, eval_cfg=None, aggregation='sum'):
    ''' Frequency-aware attribution and scores for every alpha, same seed.

    Pixels are ranked with the channel ``aggregation`` rule.

    Returns:
        AlphaSweep: per-alpha maps and scores, the largest insertion and the
        smallest deletion with the alpha values reaching them (first one on ties).
    '''
    alphas = tuple(float(alpha) for alpha in alphas)
    if not alphas:
        raise ConfigError('The alpha grid is empty.')
    for alpha in alphas:
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError('alpha must be in [0,1], got {}.'.format(alpha))
    eval_cfg = eval_cfg or evaluation.EvaluationConfig()
    x = _check_image(x)
    cutoff = resolve_cutoff(x, cfg.tau)
    maps, insertions, deletions = [], [], []
    for alpha in alphas:
        amap = fampe_attribute(model, x, y, cfg.replace(alpha=alpha), cutoff=cutoff).with_aggregation(aggregation)
        maps.append(amap)
        insertions.append(evaluation.insertion_score(model, x, y, amap, eval_cfg.steps, eval_cfg.baseline_kind,
                                                     eval_cfg.blur_sigma))
        deletions.append(evaluation.deletion_score(model, x, y, amap, eval_cfg.steps, eval_cfg.baseline_kind,
                                                   eval_cfg.blur_sigma))
        _logger.debug('alpha %.2f: insertion %.6f, deletion %.6f.', alpha, insertions[-1], deletions[-1])
    return AlphaSweep(alphas, maps, insertions, deletions, cutoff.value)
