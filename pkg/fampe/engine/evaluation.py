'''
Insertion and deletion scores, and their aggregation over samples and alpha values.

Protocol:

- pixels are ranked by channel-aggregated importance, descending, ties
  broken by ascending row-major index;
- with P pixels and S steps, ``ceil(P/S)`` whole pixels (all channels) are
  revealed (insertion) or removed (deletion) per step, the last step taking
  what is left;
- the baseline is a black image, or the image blurred by a Gaussian filter;
- the score is the trapezoidal area under the true-class probability over
  the revealed fraction, endpoints 0 and 1 included.
'''

from dataclasses import dataclass
import functools
import math
import typing

import numpy as np
import scipy.integrate
import scipy.ndimage
import scipy.special

from fampe.engine.exceptions import ConfigError, ShapeError

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

BASELINES = ('black', 'blur')


@dataclass(frozen=True)
class EvaluationConfig:
    ''' Steps, baseline kind and blur width of the insertion/deletion protocol.'''
    steps: int = 100
    baseline_kind: str = 'black'
    blur_sigma: float = 5.0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError('Evaluation needs steps >= 1, got {}.'.format(self.steps))
        if self.baseline_kind not in BASELINES:
            raise ConfigError(''.join(('Unknown baseline kind <', str(self.baseline_kind), '>.')))
        if self.blur_sigma <= 0:
            raise ConfigError('Blur sigma must be > 0.')


@dataclass
class PerturbationCurve:
    ''' True-class probability against the fraction of pixels revealed or removed.'''
    fractions: np.ndarray
    probabilities: np.ndarray

    def auc(self):
        area = float(scipy.integrate.trapezoid(self.probabilities, self.fractions))
        return min(max(area, 0.0), 1.0)


def baseline_image(x, kind='black', blur_sigma=5.0):
    ''' The image pixels are replaced with: zeros, or x blurred spatially.'''
    x = np.asarray(x, dtype=np.float64)
    if kind == 'black':
        return np.zeros_like(x)
    if kind == 'blur':
        return scipy.ndimage.gaussian_filter(x, sigma=(0.0, blur_sigma, blur_sigma), mode='reflect')
    raise ConfigError(''.join(('Unknown baseline kind <', str(kind), '>.')))


def rank_pixels(amap):
    ''' Row-major pixel indices, most important first; ties by ascending index.'''
    importance = amap.aggregate().ravel()
    return np.argsort(-importance, kind='stable')


def class_probability(model, x, y):
    return float(scipy.special.softmax(model.logits(x))[y])


def reveal_counts(n_pixels, steps):
    ''' Cumulative pixel counts 0, k, 2k, ..., P with k = ceil(P/S).'''
    per_step = int(math.ceil(n_pixels / steps))
    counts = list(range(0, n_pixels, per_step))
    counts.append(n_pixels)
    return counts


def perturbation_curve(model, x, y, amap, steps, start, fill):
    ''' Probability curve while pixels of ``start`` are replaced by those of ``fill``
    in ranking order.'''
    x = np.asarray(x, dtype=np.float64)
    if amap.shape[1:] != x.shape[1:]:
        raise ShapeError('Map shape {} does not match image shape {}.'.format(amap.shape, x.shape))
    if steps < 1:
        raise ConfigError('Evaluation needs steps >= 1, got {}.'.format(steps))
    width = x.shape[2]
    order = rank_pixels(amap)
    n_pixels = order.size
    counts = reveal_counts(n_pixels, steps)
    image = np.array(start, dtype=np.float64)
    probabilities = []
    done = 0
    for count in counts:
        rows, cols = np.divmod(order[done:count], width)
        image[:, rows, cols] = fill[:, rows, cols]
        done = count
        probabilities.append(class_probability(model, image, y))
    return PerturbationCurve(np.asarray(counts, dtype=np.float64) / n_pixels, np.asarray(probabilities))


def insertion_curve(model, x, y, amap, steps=100, baseline_kind='black', blur_sigma=5.0):
    x = np.asarray(x, dtype=np.float64)
    return perturbation_curve(model, x, y, amap, steps, baseline_image(x, baseline_kind, blur_sigma), x)


def deletion_curve(model, x, y, amap, steps=100, baseline_kind='black', blur_sigma=5.0):
    x = np.asarray(x, dtype=np.float64)
    return perturbation_curve(model, x, y, amap, steps, x, baseline_image(x, baseline_kind, blur_sigma))


def insertion_score(model, x, y, amap, steps=100, baseline_kind='black', blur_sigma=5.0):
    ''' Area under the probability curve as ranked pixels are revealed over the baseline.

    Returns:
        float in [0,1]; higher is better.
    '''
    return insertion_curve(model, x, y, amap, steps, baseline_kind, blur_sigma).auc()


def deletion_score(model, x, y, amap, steps=100, baseline_kind='black', blur_sigma=5.0):
    ''' Area under the probability curve as ranked pixels are replaced by the baseline.

    Returns:
        float in [0,1]; lower is better.
    '''
    return deletion_curve(model, x, y, amap, steps, baseline_kind, blur_sigma).auc()


def discretization_gap(model, x, y, amap, baseline_kind='black', blur_sigma=5.0):
    ''' ``|score(S=P) - score(S=ceil(P/2))|`` for insertion and deletion.

    The one-pixel-per-step score is the reference.
    '''
    n_pixels = int(np.prod(np.shape(x)[1:]))
    half = max(1, int(math.ceil(n_pixels / 2)))
    gaps = []
    for score in (insertion_score, deletion_score):
        fine = score(model, x, y, amap, n_pixels, baseline_kind, blur_sigma)
        coarse = score(model, x, y, amap, half, baseline_kind, blur_sigma)
        gaps.append(abs(fine - coarse))
    return tuple(gaps)


@dataclass(frozen=True)
class ScoreAccumulator:
    ''' Count and sums of insertion and deletion scores; merging is associative
    and commutative.'''
    count: int = 0
    insertion_sum: float = 0.0
    deletion_sum: float = 0.0

    @classmethod
    def of(cls, insertion, deletion):
        return cls(1, float(insertion), float(deletion))

    def merge(self, other):
        return ScoreAccumulator(self.count + other.count, self.insertion_sum + other.insertion_sum,
                                self.deletion_sum + other.deletion_sum)

    @property
    def mean_insertion(self):
        return self.insertion_sum / self.count

    @property
    def mean_deletion(self):
        return self.deletion_sum / self.count


@dataclass
class ScoreReport:
    ''' Per-sample scores, their means and, for an alpha sweep, the per-alpha breakdown.

    Attributes:
        insertions, deletions (list of float): per-sample scores (the best over
            alpha for a sweep: largest insertion, smallest deletion).
        mean_insertion, mean_deletion (float): their means.
        n_samples (int): number of samples.
        alphas (tuple): the alpha grid, or None.
        per_alpha_insertion, per_alpha_deletion (list of float): mean score at each alpha.
        best_insertion_index, best_deletion_index (list of int): per sample,
            index of the alpha with the largest insertion / smallest deletion.
        max_insertion_frequency (list of float): per alpha, percentage of the
            samples reaching their largest insertion at that alpha.
    '''
    insertions: list
    deletions: list
    mean_insertion: float
    mean_deletion: float
    n_samples: int
    alphas: typing.Optional[tuple] = None
    per_alpha_insertion: typing.Optional[list] = None
    per_alpha_deletion: typing.Optional[list] = None
    best_insertion_index: typing.Optional[list] = None
    best_deletion_index: typing.Optional[list] = None
    max_insertion_frequency: typing.Optional[list] = None


def aggregate_report(insertions=None, deletions=None, alphas=None, insertion_matrix=None, deletion_matrix=None):
    ''' Builds a :class:`ScoreReport`.

    Either pass per-sample ``insertions`` and ``deletions``, or an alpha grid
    with ``insertion_matrix`` and ``deletion_matrix`` (samples x alphas); in
    the latter case each sample keeps its largest insertion and its smallest
    deletion over alpha.

    Raises:
        ConfigError: no samples, or inconsistent lengths.
    '''
    report = {}
    if insertion_matrix is not None or deletion_matrix is not None:
        ins = np.asarray(insertion_matrix, dtype=np.float64)
        dels = np.asarray(deletion_matrix, dtype=np.float64)
        alphas = tuple(float(alpha) for alpha in alphas)
        if ins.ndim != 2 or ins.shape != dels.shape or ins.shape[1] != len(alphas):
            raise ConfigError('Score matrices must be samples x alphas with matching shapes.')
        if ins.shape[0] == 0:
            raise ConfigError('No samples to aggregate.')
        best_ins = np.argmax(ins, axis=1)
        best_del = np.argmin(dels, axis=1)
        insertions = [float(value) for value in ins[np.arange(ins.shape[0]), best_ins]]
        deletions = [float(value) for value in dels[np.arange(dels.shape[0]), best_del]]
        counts = np.bincount(best_ins, minlength=len(alphas))
        report = {'alphas': alphas,
                  'per_alpha_insertion': [float(v) for v in ins.mean(axis=0)],
                  'per_alpha_deletion': [float(v) for v in dels.mean(axis=0)],
                  'best_insertion_index': [int(i) for i in best_ins],
                  'best_deletion_index': [int(i) for i in best_del],
                  'max_insertion_frequency': [100.0 * int(c) / ins.shape[0] for c in counts]}
    if not insertions:
        raise ConfigError('No samples to aggregate.')
    if deletions is None or len(deletions) != len(insertions):
        raise ConfigError('Insertion and deletion lists differ in length.')
    total = functools.reduce(ScoreAccumulator.merge,
                             (ScoreAccumulator.of(i, d) for i, d in zip(insertions, deletions)))
    return ScoreReport(list(insertions), list(deletions), total.mean_insertion, total.mean_deletion,
                       total.count, **report)


def emit_cutoff_alpha_scatter(pairs):
    ''' ``c_f alpha`` lines, one per sample, for external plotting.

    Args:
        pairs (iterable of (float, float)): cutoff and best-insertion alpha per sample.

    Returns:
        list of string
    '''
    return ['{:g} {:g}'.format(cutoff, alpha) for cutoff, alpha in pairs]


def cutoff_alpha_summary(pairs, low_alpha=0.4, thresholds=(20, 60, 80)):
    ''' Counts describing how the best alpha relates to the cutoff.

    Returns:
        dict: ``n``, ``low_alpha_count`` (samples with best alpha < ``low_alpha``),
        ``below`` and ``low_alpha_below`` (per threshold, samples with cutoff
        below it, overall and among the low-alpha ones).
    '''
    pairs = list(pairs)
    low = [(cutoff, alpha) for cutoff, alpha in pairs if alpha < low_alpha]
    return {'n': len(pairs),
            'low_alpha': low_alpha,
            'low_alpha_count': len(low),
            'below': {str(t): sum(1 for cutoff, _ in pairs if cutoff < t) for t in thresholds},
            'low_alpha_below': {str(t): sum(1 for cutoff, _ in low if cutoff < t) for t in thresholds}}
