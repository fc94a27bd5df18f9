'''Tests of the insertion/deletion protocol and the score reports.'''

import itertools
import math

import numpy as np
import pytest
import scipy.ndimage
from numpy.testing import assert_allclose, assert_array_equal

from fampe.engine import evaluation
from fampe.engine.attribution import AttributionMap
from fampe.engine.evaluation import (EvaluationConfig, ScoreAccumulator, aggregate_report, baseline_image,
                                     cutoff_alpha_summary, deletion_curve, deletion_score, discretization_gap,
                                     emit_cutoff_alpha_scatter, insertion_curve, insertion_score, rank_pixels,
                                     reveal_counts)
from fampe.engine.exceptions import ConfigError, ShapeError


def softmax(logits):
    e = np.exp(logits - np.max(logits))
    return e / e.sum()


def ranking_map(order, shape):
    ''' Single-channel map whose ranking is ``order`` (pixel indices, most important first).'''
    values = np.zeros(int(np.prod(shape)))
    values[list(order)] = np.arange(len(order), 0, -1, dtype=float)
    return AttributionMap(values.reshape((1,) + tuple(shape)))


def two_class(linear_network, w, shape):
    ''' Logits ``(w.x, -w.x)``: class 0 probability is increasing in ``w.x``.'''
    w = np.asarray(w, dtype=float).reshape(-1)
    return linear_network(np.stack([w, -w]), shape)


# every grid of at most 9 pixels, up to transposition
SMALL_SHAPES = [(1, 1), (1, 2), (1, 3), (1, 4), (2, 2), (1, 5), (1, 6), (2, 3), (1, 7),
                (1, 8), (2, 4), (1, 9), (3, 3)]


def reveal_orders(n_pixels, generator, sampled=300):
    ''' Every permutation up to 6 pixels, a seeded sample of them beyond.'''
    if n_pixels <= 6:
        return list(itertools.permutations(range(n_pixels)))
    return [tuple(int(k) for k in generator.permutation(n_pixels)) for _ in range(sampled)]


def oracle_areas(weight, x, order, steps, y):
    ''' Insertion and deletion areas recomputed pixel by pixel from the definition.'''
    flat = x.reshape(-1)
    n_pixels = flat.size
    per_step = -(-n_pixels // steps)
    counts = sorted(set(list(range(0, n_pixels, per_step)) + [n_pixels]))
    inserted, deleted = [], []
    for count in counts:
        chosen = list(order[:count])
        revealed = np.zeros(n_pixels)
        revealed[chosen] = flat[chosen]
        inserted.append(softmax(weight @ revealed)[y])
        remaining = flat.copy()
        remaining[chosen] = 0.0
        deleted.append(softmax(weight @ remaining)[y])
    fractions = [count / n_pixels for count in counts]

    def area(values):
        return sum((values[k] + values[k + 1]) / 2 * (fractions[k + 1] - fractions[k])
                   for k in range(len(counts) - 1))
    return area(inserted), area(deleted)


class TestRanking:

    def test_ties_keep_row_major_order(self):
        assert_array_equal(rank_pixels(AttributionMap(np.full((2, 3, 3), 0.7))), np.arange(9))

    def test_matches_a_stable_sort(self, generator):
        for _ in range(20):
            values = generator.integers(0, 4, size=(1, 4, 4)).astype(float)
            importance = list(values.reshape(-1))
            expected = sorted(range(16), key=lambda index: (-importance[index], index))
            assert list(rank_pixels(AttributionMap(values))) == expected

    def test_descending_with_partial_ties(self):
        amap = AttributionMap(np.array([[[0.1, 0.5], [0.5, 0.9]]]))
        assert_array_equal(rank_pixels(amap), [3, 1, 2, 0])

    def test_channel_aggregation_changes_the_ranking(self):
        values = np.array([[[2.0, 1.0]], [[-2.0, 0.5]]])
        assert_array_equal(rank_pixels(AttributionMap(values)), [1, 0])
        assert_array_equal(rank_pixels(AttributionMap(values, 'abs-sum')), [0, 1])

    @pytest.mark.parametrize('pixels, steps, counts', [(4, 4, [0, 1, 2, 3, 4]), (4, 2, [0, 2, 4]),
                                                       (10, 3, [0, 4, 8, 10]), (5, 100, [0, 1, 2, 3, 4, 5]),
                                                       (7, 1, [0, 7])])
    def test_reveal_counts(self, pixels, steps, counts):
        assert reveal_counts(pixels, steps) == counts


class TestScores:

    @pytest.mark.parametrize('logits, y, expected', [([50.0, 0.0, 0.0], 0, 1.0), ([50.0, 0.0, 0.0], 1, 0.0),
                                                     ([0.0, math.log(3.0)], 1, 0.75)])
    def test_constant_probability(self, generator, constant_model, logits, y, expected):
        x = generator.uniform(size=(1, 4, 4))
        amap = AttributionMap(generator.normal(size=(1, 4, 4)))
        model = constant_model(logits)
        for steps in (1, 5, 16):
            assert insertion_score(model, x, y, amap, steps) == pytest.approx(expected, abs=1e-12)
            assert deletion_score(model, x, y, amap, steps) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize('shape', SMALL_SHAPES)
    @pytest.mark.parametrize('coarse', [False, True])
    def test_matches_the_reveal_order_oracle(self, generator, linear_network, shape, coarse):
        n_pixels = shape[0] * shape[1]
        weight = generator.normal(size=(3, n_pixels))
        model = linear_network(weight, (1,) + shape)
        x = generator.uniform(size=(1,) + shape)
        steps = max(1, n_pixels // 2) if coarse else n_pixels
        for order in reveal_orders(n_pixels, generator):
            amap = ranking_map(order, shape)
            inserted, deleted = oracle_areas(weight, x, order, steps, 1)
            assert abs(insertion_score(model, x, 1, amap, steps) - inserted) < 1e-12
            assert abs(deletion_score(model, x, 1, amap, steps) - deleted) < 1e-12

    def test_ranking_of_a_real_map(self):
        amap = AttributionMap(np.array([[[0.3, -1.0], [0.8, 0.1]]]))
        assert_array_equal(rank_pixels(amap), [2, 0, 3, 1])

    def test_curve_endpoints(self, generator, linear_network):
        model = linear_network(generator.normal(size=(3, 27)), (3, 3, 3))
        x = generator.uniform(size=(3, 3, 3))
        amap = AttributionMap(generator.normal(size=(3, 3, 3)))
        full = softmax(model.logits(x))[2]
        black = softmax(model.logits(np.zeros_like(x)))[2]
        curve = insertion_curve(model, x, 2, amap, steps=4)
        assert_array_equal(curve.fractions, [0.0, 3 / 9, 6 / 9, 1.0])
        assert curve.probabilities[0] == pytest.approx(black, abs=1e-14)
        assert curve.probabilities[-1] == pytest.approx(full, abs=1e-14)
        curve = deletion_curve(model, x, 2, amap, steps=9)
        assert len(curve.fractions) == 10
        assert curve.probabilities[0] == pytest.approx(full, abs=1e-14)
        assert curve.probabilities[-1] == pytest.approx(black, abs=1e-14)

    def test_removing_the_decisive_pixel_first_lowers_deletion(self, linear_network):
        model = two_class(linear_network, [4.0, 0.0, 0.0, 0.0, 0.0, 0.0], (1, 2, 3))
        x = np.full((1, 2, 3), 0.8)
        first = deletion_score(model, x, 0, ranking_map([0, 1, 2, 3, 4, 5], (2, 3)), 6)
        last = deletion_score(model, x, 0, ranking_map([1, 2, 3, 4, 5, 0], (2, 3)), 6)
        assert first < last
        assert insertion_score(model, x, 0, ranking_map([0, 1, 2, 3, 4, 5], (2, 3)), 6) > \
            insertion_score(model, x, 0, ranking_map([1, 2, 3, 4, 5, 0], (2, 3)), 6)

    @pytest.mark.parametrize('shape', SMALL_SHAPES)
    def test_contribution_order_is_optimal(self, generator, linear_network, shape):
        n_pixels = shape[0] * shape[1]
        w = generator.normal(size=n_pixels)
        x = generator.uniform(size=(1,) + shape)
        model = two_class(linear_network, w, (1,) + shape)
        greedy = AttributionMap((w * x.reshape(-1)).reshape((1,) + shape))
        best_insertion = insertion_score(model, x, 0, greedy, n_pixels)
        best_deletion = deletion_score(model, x, 0, greedy, n_pixels)
        for order in reveal_orders(n_pixels, generator):
            amap = ranking_map(order, shape)
            assert insertion_score(model, x, 0, amap, n_pixels) <= best_insertion + 1e-12
            assert deletion_score(model, x, 0, amap, n_pixels) >= best_deletion - 1e-12

    def test_scores_are_in_unit_interval(self, generator, linear_network):
        for _ in range(10):
            model = linear_network(generator.normal(scale=5.0, size=(4, 16)), (1, 4, 4))
            x = generator.uniform(size=(1, 4, 4))
            amap = AttributionMap(generator.normal(size=(1, 4, 4)))
            for baseline in evaluation.BASELINES:
                for score in (insertion_score, deletion_score):
                    assert 0.0 <= score(model, x, 1, amap, 7, baseline, 1.0) <= 1.0

    def test_map_shape_checked(self, generator, constant_model):
        with pytest.raises(ShapeError):
            insertion_score(constant_model([0.0, 1.0]), np.zeros((1, 4, 4)), 0, AttributionMap(np.zeros((1, 3, 4))))

    def test_zero_steps_rejected(self, constant_model):
        with pytest.raises(ConfigError):
            deletion_score(constant_model([0.0, 1.0]), np.zeros((1, 2, 2)), 0, AttributionMap(np.zeros((1, 2, 2))), 0)


class TestBaselines:

    def test_black(self, generator):
        assert_array_equal(baseline_image(generator.uniform(size=(2, 4, 4)), 'black'), np.zeros((2, 4, 4)))

    def test_blur_is_per_channel(self, generator):
        x = generator.uniform(size=(3, 12, 12))
        blurred = baseline_image(x, 'blur', 2.0)
        for channel in range(3):
            assert_allclose(blurred[channel], scipy.ndimage.gaussian_filter(x[channel], 2.0, mode='reflect'),
                            atol=1e-12)

    def test_blur_keeps_constant_image(self):
        x = np.full((1, 6, 6), 0.3)
        assert_allclose(baseline_image(x, 'blur', 5.0), x, atol=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            baseline_image(np.zeros((1, 2, 2)), 'gray')

    @pytest.mark.parametrize('changes', [dict(steps=0), dict(baseline_kind='noise'), dict(blur_sigma=0.0)])
    def test_invalid_evaluation_config(self, changes):
        with pytest.raises(ConfigError):
            EvaluationConfig(**changes)


class TestDiscretizationGap:

    def test_constant_model_has_no_gap(self, generator, constant_model):
        x = generator.uniform(size=(1, 5, 5))
        gaps = discretization_gap(constant_model([1.0, 2.0]), x, 0, AttributionMap(generator.normal(size=(1, 5, 5))))
        assert gaps == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_matches_direct_scores(self, generator, linear_network):
        model = linear_network(generator.normal(size=(2, 9)), (1, 3, 3))
        x = generator.uniform(size=(1, 3, 3))
        amap = AttributionMap(generator.normal(size=(1, 3, 3)))
        gap_ins, gap_del = discretization_gap(model, x, 1, amap)
        assert gap_ins == abs(insertion_score(model, x, 1, amap, 9) - insertion_score(model, x, 1, amap, 5))
        assert gap_del == abs(deletion_score(model, x, 1, amap, 9) - deletion_score(model, x, 1, amap, 5))


class TestReports:

    def test_per_sample_means(self):
        report = aggregate_report([0.5, 0.25, 0.75], [0.125, 0.5, 0.375])
        assert report.n_samples == 3
        assert report.mean_insertion == 0.5
        assert report.mean_deletion == pytest.approx(1 / 3)
        assert report.alphas is None

    def test_single_sample(self):
        report = aggregate_report([0.2], [0.7])
        assert (report.mean_insertion, report.mean_deletion, report.n_samples) == (0.2, 0.7, 1)

    def test_two_samples(self):
        assert aggregate_report([0.2, 0.4], [0.1, 0.1]).mean_insertion == pytest.approx(0.3, abs=1e-12)

    def test_alpha_matrices(self):
        insertions = [[0.1, 0.5, 0.3], [0.7, 0.2, 0.7]]
        deletions = [[0.3, 0.1, 0.2], [0.4, 0.4, 0.05]]
        report = aggregate_report(alphas=(0.0, 0.5, 1.0), insertion_matrix=insertions, deletion_matrix=deletions)
        assert report.insertions == [0.5, 0.7]
        assert report.deletions == [0.1, 0.05]
        assert report.mean_insertion == pytest.approx(0.6)
        assert report.mean_deletion == pytest.approx(0.075)
        assert report.best_insertion_index == [1, 0]
        assert report.best_deletion_index == [1, 2]
        assert report.per_alpha_insertion == pytest.approx([0.4, 0.35, 0.5])
        assert report.per_alpha_deletion == pytest.approx([0.35, 0.25, 0.125])
        assert report.max_insertion_frequency == [50.0, 50.0, 0.0]

    def test_frequencies_sum_to_one_hundred(self, generator):
        insertions = generator.uniform(size=(13, 11))
        report = aggregate_report(alphas=[k / 10 for k in range(11)], insertion_matrix=insertions,
                                  deletion_matrix=generator.uniform(size=(13, 11)))
        assert sum(report.max_insertion_frequency) == pytest.approx(100.0)
        assert report.insertions == pytest.approx(list(insertions.max(axis=1)))

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            aggregate_report([], [])
        with pytest.raises(ConfigError):
            aggregate_report(alphas=(0.5,), insertion_matrix=np.zeros((0, 1)), deletion_matrix=np.zeros((0, 1)))

    def test_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            aggregate_report([0.5, 0.5], [0.5])
        with pytest.raises(ConfigError):
            aggregate_report(alphas=(0.0, 1.0), insertion_matrix=np.zeros((2, 2)), deletion_matrix=np.zeros((2, 3)))

    def test_accumulator_merge(self):
        parts = [ScoreAccumulator.of(0.25, 0.5), ScoreAccumulator.of(0.5, 0.125), ScoreAccumulator.of(1.0, 0.0)]
        a, b, c = parts
        assert a.merge(b).merge(c) == a.merge(b.merge(c))
        assert a.merge(b) == b.merge(a)
        total = a.merge(b).merge(c)
        assert total.count == 3
        assert total.mean_insertion == pytest.approx(1.75 / 3)
        assert ScoreAccumulator().merge(a) == a

    def test_scatter_lines(self):
        assert emit_cutoff_alpha_scatter([]) == []
        assert emit_cutoff_alpha_scatter([(12.0, 0.2), (3.5, 1.0)]) == ['12 0.2', '3.5 1']

    def test_cutoff_summary(self):
        pairs = [(10.0, 0.2), (30.0, 0.3), (70.0, 0.9), (90.0, 0.1)]
        summary = cutoff_alpha_summary(pairs)
        assert summary['n'] == 4
        assert summary['low_alpha_count'] == 3
        assert summary['below'] == {'20': 1, '60': 2, '80': 3}
        assert summary['low_alpha_below'] == {'20': 1, '60': 2, '80': 2}
