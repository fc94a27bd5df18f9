'''End-to-end tests of the command line, run in-process.'''

import contextlib
import csv
import io
import json
import os
import re

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from fampe.cli.start_fampe import SEED_VARIABLE, main
from fampe.engine import fileformats
from fampe.engine.attribution import FampeConfig, frequency_aware_variant, resolve_cutoff
from fampe.engine.model import ModelSpec, Network

TINY_MODEL = {'input_shape': [1, 8, 8], 'class_count': 2,
              'layers': [{'kind': 'flatten'}, {'kind': 'dense', 'in': 64, 'out': 2}]}

FAST = ['--variants', '2', '--iters', '2', '--steps', '8']


def read_csv(path):
    with open(path, newline='') as csv_file:
        return list(csv.reader(csv_file))


def error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith('error: ')]


def stderr_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.strip()]


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    ''' A synthetic dataset of 6 images of side 8, a linear model and its trained weights.'''
    root = tmp_path_factory.mktemp('fampe')
    paths = {'root': str(root), 'dataset': str(root / 'dataset'), 'model': str(root / 'model.json'),
             'weights': str(root / 'weights.famw')}
    with open(paths['model'], 'w') as json_file:
        json.dump(TINY_MODEL, json_file)
    assert main(['synth', '--dataset', paths['dataset'], '--size', '8', '--classes', '2',
                 '--samples-per-class', '3']) == 0
    assert main(['train', '--dataset', paths['dataset'], '--model', paths['model'], '--weights', paths['weights'],
                 '--epochs', '3', '--lr', '0.1']) == 0
    return paths


def model_args(workspace, outdir):
    return ['--dataset', workspace['dataset'], '--model', workspace['model'], '--weights', workspace['weights'],
            '--outdir', str(outdir)]


class TestSynth:

    def test_files(self, tmp_path):
        assert main(['synth', '--dataset', str(tmp_path), '--size', '8', '--classes', '3',
                     '--samples-per-class', '2']) == 0
        names = sorted(os.listdir(str(tmp_path)))
        assert names == ['img_{:05d}.pgm'.format(k) for k in range(6)] + ['labels.csv']
        assert read_csv(str(tmp_path / 'labels.csv'))[1:] == [['img_{:05d}.pgm'.format(k), str(k % 3)]
                                                                for k in range(6)]

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        arguments = ['--size', '8', '--classes', '2', '--samples-per-class', '1']
        monkeypatch.setenv(SEED_VARIABLE, '3')
        assert main(['synth', '--dataset', str(tmp_path / 'env')] + arguments) == 0
        assert main(['synth', '--dataset', str(tmp_path / 'flag'), '--seed', '4'] + arguments) == 0
        monkeypatch.delenv(SEED_VARIABLE)
        assert main(['synth', '--dataset', str(tmp_path / 'three'), '--seed', '3'] + arguments) == 0
        def content(name):
            return (tmp_path / name / 'img_00000.pgm').read_bytes()
        assert content('env') == content('three')
        assert content('flag') != content('three')

    def test_flat_configuration_file(self, tmp_path):
        conf = tmp_path / 'run.conf'
        conf.write_text('size = 9\nclasses = 2\nsamples_per_class = 1\nchannels = 3\n')
        assert main(['synth', '--config', str(conf), '--dataset', str(tmp_path / 'data')]) == 0
        image = fileformats.read_image(str(tmp_path / 'data' / 'img_00001.ppm'))
        assert image.shape == (3, 9, 9)

    def test_flags_override_the_file(self, tmp_path):
        conf = tmp_path / 'run.conf'
        conf.write_text('[DATASET]\nsize = 9\nclasses = 2\nsamples_per_class = 1\n')
        assert main(['synth', '--config', str(conf), '--dataset', str(tmp_path / 'data'), '--size', '10']) == 0
        assert fileformats.read_image(str(tmp_path / 'data' / 'img_00000.pgm')).shape == (1, 10, 10)


class TestTrain:

    def test_prints_accuracy_and_writes_weights(self, workspace, tmp_path, capsys):
        weights = str(tmp_path / 'w.famw')
        assert main(['train', '--dataset', workspace['dataset'], '--model', workspace['model'],
                     '--weights', weights, '--epochs', '1']) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1 and re.match(r'^train_acc=\d\.\d{6}$', out[0])
        assert len(fileformats.load_weights(weights)) == 2

    def test_zero_epochs_write_the_initialisation(self, workspace, tmp_path):
        weights = str(tmp_path / 'w.famw')
        assert main(['train', '--dataset', workspace['dataset'], '--model', workspace['model'],
                     '--weights', weights, '--epochs', '0', '--seed', '11']) == 0
        initial = Network.initialise(ModelSpec.from_file(workspace['model']), 11)
        for a, b in zip(fileformats.load_weights(weights), initial.tensors()):
            assert_array_equal(a, b)

    def test_pipeline_is_reproducible(self, tmp_path):
        model = tmp_path / 'model.json'
        model.write_text(json.dumps(TINY_MODEL))
        for run in ('a', 'b'):
            root = tmp_path / run
            arguments = ['--dataset', str(root / 'data'), '--model', str(model), '--weights', str(root / 'w.famw'),
                         '--outdir', str(root / 'out')]
            assert main(['synth', '--dataset', str(root / 'data'), '--size', '8', '--classes', '2',
                         '--samples-per-class', '2']) == 0
            assert main(['train', '--epochs', '2'] + arguments) == 0
            assert main(['attribute'] + arguments + FAST) == 0
            assert main(['evaluate'] + arguments + FAST) == 0
        for name in ('w.famw', 'out/img_00000_fampe.fama', 'out/img_00000_fampe.pgm', 'out/scores.csv'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_missing_model_description(self, workspace, tmp_path, capsys):
        status = main(['train', '--dataset', workspace['dataset'], '--model', str(tmp_path / 'none.json'),
                       '--weights', str(tmp_path / 'w.famw')])
        assert status == 1
        lines = error_lines(capsys)
        assert len(lines) == 1 and lines[0].startswith('error: config: ')
        assert not os.path.exists(str(tmp_path / 'w.famw'))


class TestAttribute:

    @pytest.mark.parametrize('method', ['fampe', 'attexplore', 'ig'])
    def test_writes_map_and_heatmap(self, workspace, tmp_path, method):
        assert main(['attribute'] + model_args(workspace, tmp_path) + FAST +
                    ['--method', method, '--sample', '1']) == 0
        amap = fileformats.read_attribution_map(str(tmp_path / 'img_00001_{}.fama'.format(method)))
        assert amap.values.shape == (1, 8, 8)
        heat = fileformats.read_image(str(tmp_path / 'img_00001_{}.pgm'.format(method)))
        assert heat.shape == (1, 8, 8)
        assert not os.path.exists(str(tmp_path / 'img_00001_{}.txt'.format(method)))

    def test_quiet_lowpass_single_step(self, workspace, tmp_path):
        assert main(['attribute'] + model_args(workspace, tmp_path) +
                    ['--sigma', '0', '--epsilon', '0', '--alpha', '1', '--iters', '1', '--variants', '1',
                     '--sample', '2']) == 0
        spec = ModelSpec.from_file(workspace['model'])
        model = fileformats.load_weights(workspace['weights'], spec)
        _, sample = fileformats.read_dataset(workspace['dataset'])[2]
        cfg = FampeConfig(sigma=0.0, epsilon=0.0, alpha=1.0, n_iters=1, n_variants=1)
        lowpass = frequency_aware_variant(sample.image, resolve_cutoff(sample.image, 0.9), cfg, 0, 0)
        expected = 0.05 * np.abs(model.input_gradient(lowpass, sample.label))
        amap = fileformats.read_attribution_map(str(tmp_path / 'img_00002_fampe.fama'))
        assert np.max(np.abs(amap.values - expected)) < 1e-9
        with open(str(tmp_path / 'img_00002_fampe.pgm'), 'rb') as pgm:
            assert pgm.read(11) == b'P5\n8 8\n255\n'
        assert fileformats.read_image(str(tmp_path / 'img_00002_fampe.pgm')).max() == 1.0

    def test_text_export_and_image_input(self, workspace, tmp_path):
        image = os.path.join(workspace['dataset'], 'img_00002.pgm')
        assert main(['attribute'] + model_args(workspace, tmp_path) + FAST +
                    ['--image', image, '--label', '1', '--text']) == 0
        lines = (tmp_path / 'img_00002_fampe.txt').read_text().splitlines()
        assert len(lines) == 64
        assert lines[0].startswith('0 0 0 ')

    def test_integrated_gradients_from_the_input_is_zero(self, workspace, tmp_path):
        assert main(['attribute'] + model_args(workspace, tmp_path) +
                    ['--method', 'ig', '--ig-baseline', 'input', '--ig-steps', '4']) == 0
        amap = fileformats.read_attribution_map(str(tmp_path / 'img_00000_ig.fama'))
        assert_array_equal(amap.values, np.zeros((1, 8, 8)))

    def test_same_seed_same_map(self, workspace, tmp_path):
        for run in ('a', 'b'):
            assert main(['attribute'] + model_args(workspace, tmp_path / run) + FAST + ['--seed', '5']) == 0
        assert (tmp_path / 'a' / 'img_00000_fampe.fama').read_bytes() == \
            (tmp_path / 'b' / 'img_00000_fampe.fama').read_bytes()

    def test_sample_out_of_range(self, workspace, tmp_path, capsys):
        assert main(['attribute'] + model_args(workspace, tmp_path) + ['--sample', '99']) == 1
        assert error_lines(capsys)[0].startswith('error: dataset: ')

    def test_missing_weights(self, workspace, tmp_path, capsys):
        arguments = ['--dataset', workspace['dataset'], '--model', workspace['model'],
                     '--weights', str(tmp_path / 'missing.famw'), '--outdir', str(tmp_path)]
        assert main(['attribute'] + arguments) == 1
        assert error_lines(capsys) == ['error: config: Weights file <{}> does not exist.'
                                       .format(str(tmp_path / 'missing.famw'))]

    def test_corrupt_weights(self, workspace, tmp_path, capsys):
        weights = tmp_path / 'bad.famw'
        weights.write_bytes(b'FAMW\x01\x00')
        arguments = ['--dataset', workspace['dataset'], '--model', workspace['model'],
                     '--weights', str(weights), '--outdir', str(tmp_path)]
        assert main(['attribute'] + arguments) == 1
        assert error_lines(capsys)[0].startswith('error: format: ')


class TestEvaluate:

    def test_scores_and_summary(self, workspace, tmp_path):
        assert main(['evaluate'] + model_args(workspace, tmp_path) + FAST + ['--limit', '4']) == 0
        rows = read_csv(str(tmp_path / 'scores.csv'))
        assert rows[0] == ['sample_id', 'alpha', 'insertion', 'deletion', 'cutoff']
        assert [row[0] for row in rows[1:]] == ['img_{:05d}.pgm'.format(k) for k in range(4)]
        for row in rows[1:]:
            assert float(row[1]) == 0.5
            assert 0.0 <= float(row[2]) <= 1.0 and 0.0 <= float(row[3]) <= 1.0
            assert float(row[4]) > 0
        summary = json.loads((tmp_path / 'summary.json').read_text())
        assert summary['method'] == 'fampe' and summary['n_samples'] == 4
        assert summary['alpha_grid'] == [0.5]
        assert summary['mean_insertion'] == pytest.approx(np.mean([float(row[2]) for row in rows[1:]]))

    def test_threads_do_not_change_the_scores(self, workspace, tmp_path):
        assert main(['evaluate'] + model_args(workspace, tmp_path / 'one') + FAST) == 0
        assert main(['evaluate'] + model_args(workspace, tmp_path / 'three') + FAST + ['--workers', '3']) == 0
        assert (tmp_path / 'one' / 'scores.csv').read_bytes() == (tmp_path / 'three' / 'scores.csv').read_bytes()

    def test_ig_rows_have_no_alpha_nor_cutoff(self, workspace, tmp_path):
        assert main(['evaluate'] + model_args(workspace, tmp_path) +
                    ['--method', 'ig', '--ig-steps', '4', '--steps', '8', '--baseline', 'blur',
                     '--discretization-check']) == 0
        rows = read_csv(str(tmp_path / 'scores.csv'))
        assert len(rows) == 7
        assert all(row[1] == '' and row[4] == '' for row in rows[1:])
        assert json.loads((tmp_path / 'summary.json').read_text())['baseline'] == 'blur'


class TestAblate:

    def test_outputs(self, workspace, tmp_path):
        assert main(['ablate'] + model_args(workspace, tmp_path) + FAST +
                    ['--alphas', '0,0.5,1', '--limit', '2', '--heatmaps']) == 0
        table = read_csv(str(tmp_path / 'alpha_table.csv'))
        assert table[0] == ['alpha', 'insertion', 'deletion', 'frequency_pct']
        assert [row[0] for row in table[1:]] == ['0.0', '0.5', '1.0', 'fampe', 'attexplore']
        assert sum(float(row[3]) for row in table[1:4]) == pytest.approx(100.0)
        assert float(table[4][1]) >= max(float(row[1]) for row in table[1:4])
        assert float(table[4][2]) <= min(float(row[2]) for row in table[1:4])
        scores = read_csv(str(tmp_path / 'scores.csv'))
        assert len(scores) == 1 + 2 * 3
        scatter = (tmp_path / 'scatter.txt').read_text().splitlines()
        assert len(scatter) == 2
        for line in scatter:
            cutoff, alpha = (float(value) for value in line.split())
            assert cutoff > 0 and alpha in (0.0, 0.5, 1.0)
        assert json.loads((tmp_path / 'cutoff_summary.json').read_text())['n'] == 2
        summary = json.loads((tmp_path / 'summary.json').read_text())
        assert summary['alpha_grid'] == [0.0, 0.5, 1.0]
        assert 'attexplore_mean_insertion' in summary
        for alpha in ('0.00', '0.50', '1.00'):
            assert (tmp_path / 'img_00000_alpha_{}.pgm'.format(alpha)).exists()

    def test_bad_alpha_grid(self, workspace, tmp_path, capsys):
        assert main(['ablate'] + model_args(workspace, tmp_path) + ['--alphas', '0.2,1.4']) == 1
        assert error_lines(capsys)[0].startswith('error: config: ')


class TestErrors:

    def test_unknown_flag_exits_with_status_2(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(['synth', '--no-such-flag'])
        assert info.value.code == 2
        lines = stderr_lines(capsys)
        assert len(lines) == 1 and lines[0].startswith('error: usage: ') and '--no-such-flag' in lines[0]

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(['explain'])
        assert info.value.code == 2
        lines = stderr_lines(capsys)
        assert len(lines) == 1 and lines[0].startswith('error: usage: ')

    def test_flag_without_its_value(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(['train', '--epochs'])
        assert info.value.code == 2
        assert len(stderr_lines(capsys)) == 1

    @pytest.mark.parametrize('flag, value', [('--method', 'gradcam'), ('--ig-baseline', 'white'),
                                             ('--aggregation', 'max'), ('--baseline', 'noise')])
    def test_unknown_choice_is_a_config_error(self, tmp_path, capsys, flag, value):
        assert main(['attribute', '--dataset', str(tmp_path), flag, value]) == 1
        lines = stderr_lines(capsys)
        assert len(lines) == 1 and lines[0].startswith('error: config: ') and value in lines[0]

    def test_out_of_range_value(self, tmp_path, capsys):
        assert main(['synth', '--dataset', str(tmp_path), '--classes', '9']) == 1
        lines = error_lines(capsys)
        assert len(lines) == 1 and lines[0].startswith('error: config: ')

    def test_unreadable_configuration_file(self, tmp_path, capsys):
        assert main(['synth', '--config', str(tmp_path / 'missing.conf'), '--dataset', str(tmp_path)]) == 1
        assert error_lines(capsys)[0].startswith('error: config: ')

    def test_bad_value_in_the_file(self, tmp_path, capsys):
        conf = tmp_path / 'run.conf'
        conf.write_text('workers = many\n')
        assert main(['synth', '--config', str(conf), '--dataset', str(tmp_path)]) == 1
        assert error_lines(capsys)[0].startswith('error: config: ')

    def test_missing_dataset(self, tmp_path, capsys):
        model = tmp_path / 'model.json'
        model.write_text(json.dumps(TINY_MODEL))
        assert main(['train', '--dataset', str(tmp_path / 'none'), '--model', str(model),
                     '--weights', str(tmp_path / 'w.famw')]) == 1
        line = error_lines(capsys)[0]
        assert line.startswith('error: dataset: ') and str(tmp_path / 'none') in line


PINNED_VALUES = os.path.join(os.path.dirname(os.path.realpath(__file__)), 'data', 'pinned_values.json')


def check_pinned(key, value):
    ''' Compares ``value`` with the one recorded under ``key``; the first run records it and fails.'''
    with open(PINNED_VALUES) as json_file:
        pinned = json.load(json_file)
    if pinned.get(key) is None:
        pinned[key] = value
        with open(PINNED_VALUES, 'w') as json_file:
            json.dump(pinned, json_file, indent=2, sort_keys=True)
            json_file.write('\n')
        pytest.fail('No pinned value for <{}>; recorded {!r}, check it and run again.'.format(key, value))
    assert value == pinned[key]


@pytest.mark.slow
class TestShapesCNN:
    ''' The packaged CNN trained on the default shapes dataset (seed 7, 4 classes x 50), explained
    on a held-out split of 4 classes x 200 synthesised with seed 8.'''

    @pytest.fixture(scope='class')
    def trained(self, tmp_path_factory):
        root = tmp_path_factory.mktemp('shapes')
        dataset, weights = str(root / 'train'), str(root / 'w.famw')
        assert main(['synth', '--dataset', dataset]) == 0
        output = io.StringIO()
        with contextlib.redirect_stdout(output):
            assert main(['train', '--dataset', dataset, '--weights', weights]) == 0
        return root, weights, output.getvalue().strip()

    def test_packaged_cnn_learns_the_shapes(self, trained):
        _, _, line = trained
        assert re.fullmatch(r'train_acc=\d\.\d{6}', line)
        assert float(line.split('=')[1]) >= 0.95
        check_pinned('shapes_cnn_seed7_train_acc', line)

    def test_default_ablation_table(self, trained):
        root, weights, _ = trained
        heldout, out = str(root / 'heldout'), str(root / 'out')
        assert main(['synth', '--dataset', heldout, '--seed', '8', '--samples-per-class', '200']) == 0
        assert main(['ablate', '--dataset', heldout, '--weights', weights, '--outdir', out,
                     '--workers', '4']) == 0
        table = read_csv(os.path.join(out, 'alpha_table.csv'))
        assert len(table) == 1 + 11 + 2
        assert [row[0] for row in table[-2:]] == ['fampe', 'attexplore']
        assert json.loads((root / 'out' / 'summary.json').read_text())['n_samples'] == 800
        # directional only: reported, not asserted
        print('held-out 800 samples: fampe insertion {}, attexplore insertion {}'
              .format(table[-2][1], table[-1][1]))
