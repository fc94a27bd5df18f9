'''
The commands of the command line, one function per command.

Every command receives a :class:`RunConfig`, writes its output files once
(atomically) and returns what it produced.  Errors are raised as
:class:`AnyError` subclasses and turned into an exit status by the launcher.
'''

from concurrent.futures import ThreadPoolExecutor
import json
import os.path

import numpy as np
from tqdm import tqdm

from fampe.engine import attribution, evaluation, fileformats, shapes
from fampe.engine.exceptions import ConfigError, DatasetError
from fampe.engine.model import ModelSpec, Network, train_sgd

import fampe.utils.app_properties as app
_logger = app.Properties.get_logger(__name__)

ALPHA_TABLE_HEADER = ('alpha', 'insertion', 'deletion', 'frequency_pct')


def _model_spec(run):
    if not os.path.isfile(run.model):
        raise ConfigError(''.join(('Model description <', run.model, '> does not exist.')))
    return ModelSpec.from_file(run.model)


def _load_model(run):
    spec = _model_spec(run)
    if not os.path.isfile(run.weights):
        raise ConfigError(''.join(('Weights file <', run.weights, '> does not exist.')))
    return fileformats.load_weights(run.weights, spec)


def _load_dataset(run, limit=0):
    entries = fileformats.read_dataset(run.dataset)
    if limit: entries = entries[:limit]
    _logger.info(''.join(('Loaded ', str(len(entries)), ' samples from <', run.dataset, '>.')))
    return entries


def attribute_sample(model, x, y, run, method=None, cfg=None):
    ''' Attribution map of one sample with the configured method.'''
    method = method or run.method
    cfg = cfg or run.fampe_config()
    if method == 'fampe':
        amap = attribution.fampe_attribute(model, x, y, cfg)
    elif method == 'attexplore':
        amap = attribution.attexplore_attribute(model, x, y, cfg)
    elif method == 'ig':
        if run.ig_baseline == 'input': baseline = x
        else: baseline = evaluation.baseline_image(x, run.ig_baseline, run.blur_sigma)
        amap = attribution.ig_attribute(model, x, y, baseline, run.ig_steps)
    else:
        raise ConfigError(''.join(('Unknown method <', str(method), '>.')))
    return amap.with_aggregation(run.aggregation)


def _fan_out(items, function, workers, progress, desc):
    ''' ``[function(item) for item in items]``, on a thread pool if ``workers`` > 1.'''
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(tqdm(pool.map(function, items), total=len(items), desc=desc, disable=not progress))
    return [function(item) for item in tqdm(items, desc=desc, disable=not progress)]


def cmd_synth(run):
    ''' Writes the synthetic shapes dataset.

    Returns:
        string: the dataset directory.
    '''
    spec = run.shapes_spec()
    samples = shapes.generate(spec)
    names = fileformats.write_dataset(run.dataset, samples, spec.extension)
    _logger.info(''.join(('Wrote ', str(len(names)), ' images and labels to <', run.dataset, '>.')))
    return run.dataset


def cmd_train(run):
    ''' Trains the model on the dataset, writes the weights and prints the accuracy.

    Returns:
        float: the training accuracy.
    '''
    spec = _model_spec(run)
    samples = [sample for _, sample in _load_dataset(run)]
    model = Network.initialise(spec, run.seed)
    trained, acc = train_sgd(model, samples, run.epochs, run.learning_rate, run.seed, progress=run.progress)
    fileformats.save_weights(trained, run.weights)
    _logger.info(''.join(('Wrote weights to <', run.weights, '>.')))
    print('train_acc={:.6f}'.format(acc))
    return acc


def _target(run, model):
    ''' Image, label and name of the sample to explain.'''
    if run.image:
        x = fileformats.read_image(run.image)
        y = model.predict(x) if run.label is None else run.label
        return x, y, os.path.splitext(os.path.basename(run.image))[0]
    entries = _load_dataset(run)
    if run.sample >= len(entries):
        raise DatasetError('Sample index {} is out of range for {} samples.'.format(run.sample, len(entries)))
    name, sample = entries[run.sample]
    y = sample.label if run.label is None else run.label
    return sample.image, y, os.path.splitext(name)[0]


def cmd_attribute(run):
    ''' Explains one sample: writes the FAMA map, its heatmap and optionally its text form.

    Returns:
        dict: the paths written, keyed by ``map``, ``heatmap`` and ``text``.
    '''
    model = _load_model(run)
    x, y, name = _target(run, model)
    amap = attribute_sample(model, x, y, run)
    stem = '_'.join((name, run.method))
    paths = {'map': run.output_path(stem + '.fama'), 'heatmap': run.output_path(stem + '.pgm')}
    fileformats.save_attribution_map(amap, paths['map'])
    fileformats.write_heatmap(paths['heatmap'], amap)
    if run.text:
        paths['text'] = run.output_path(stem + '.txt')
        fileformats.atomic_write(paths['text'], fileformats.map_text(amap))
    _logger.info(''.join(('Explained <', name, '> class ', str(y), ' with ', run.method, ' into <',
                          paths['map'], '>.')))
    return paths


def cmd_evaluate(run):
    ''' Insertion and deletion scores of the configured method over the dataset.

    Writes ``scores.csv`` (one row per sample) and ``summary.json``.

    Returns:
        ScoreReport
    '''
    model = _load_model(run)
    entries = _load_dataset(run, run.limit)
    eval_cfg = run.evaluation_config()
    # one level of threads: samples, or the variants of a sample
    cfg = run.fampe_config(workers=1) if run.workers > 1 else run.fampe_config()

    def score(entry):
        name, sample = entry
        amap = attribute_sample(model, sample.image, sample.label, run, cfg=cfg)
        ins = evaluation.insertion_score(model, sample.image, sample.label, amap, eval_cfg.steps,
                                         eval_cfg.baseline_kind, eval_cfg.blur_sigma)
        dels = evaluation.deletion_score(model, sample.image, sample.label, amap, eval_cfg.steps,
                                         eval_cfg.baseline_kind, eval_cfg.blur_sigma)
        if run.discretization_check:
            gaps = evaluation.discretization_gap(model, sample.image, sample.label, amap,
                                                 eval_cfg.baseline_kind, eval_cfg.blur_sigma)
            _logger.info('Sample %s: discretization gap insertion %.6f, deletion %.6f.', name, *gaps)
        return name, amap.cutoff, ins, dels

    results = _fan_out(entries, score, run.workers, run.progress, 'evaluate')
    alpha = run.alpha if run.method == 'fampe' else None
    rows = [(name, alpha, ins, dels, cutoff) for name, cutoff, ins, dels in results]
    report = evaluation.aggregate_report([row[2] for row in rows], [row[3] for row in rows])
    fileformats.atomic_write(run.output_path('scores.csv'), fileformats.csv_text(fileformats.SCORE_HEADER, rows))
    fileformats.atomic_write(run.output_path('summary.json'),
                             fileformats.summary_text(run.method, report.mean_insertion, report.mean_deletion,
                                                      report.n_samples, [] if alpha is None else [alpha],
                                                      steps=eval_cfg.steps, baseline=eval_cfg.baseline_kind))
    _logger.info('%s over %d samples: insertion %.6f, deletion %.6f.', run.method, report.n_samples,
                 report.mean_insertion, report.mean_deletion)
    return report


def cmd_ablate_alpha(run):
    ''' Alpha ablation over the dataset.

    Writes:

    - ``alpha_table.csv``: per alpha the mean insertion, mean deletion and the
      percentage of samples reaching their largest insertion there, then the
      ``fampe`` row (mean of the per-sample largest insertion and smallest
      deletion) and the ``attexplore`` baseline row;
    - ``scores.csv``: one row per sample and alpha;
    - ``scatter.txt``: ``cutoff alpha`` per sample, alpha maximising insertion;
    - ``cutoff_summary.json`` and ``summary.json``;
    - with ``heatmaps``, one heatmap per alpha of the first sample.

    Returns:
        ScoreReport
    '''
    model = _load_model(run)
    entries = _load_dataset(run, run.limit)
    eval_cfg = run.evaluation_config()
    cfg = run.fampe_config(workers=1) if run.workers > 1 else run.fampe_config()
    alphas = run.alphas

    def sweep(entry):
        _, sample = entry
        swept = attribution.alpha_sweep(model, sample.image, sample.label, cfg, alphas, eval_cfg, run.aggregation)
        amap = attribute_sample(model, sample.image, sample.label, run, method='attexplore', cfg=cfg)
        base = (evaluation.insertion_score(model, sample.image, sample.label, amap, eval_cfg.steps,
                                           eval_cfg.baseline_kind, eval_cfg.blur_sigma),
                evaluation.deletion_score(model, sample.image, sample.label, amap, eval_cfg.steps,
                                          eval_cfg.baseline_kind, eval_cfg.blur_sigma))
        return swept, base

    results = _fan_out(entries, sweep, run.workers, run.progress, 'ablate')
    sweeps = [swept for swept, _ in results]
    report = evaluation.aggregate_report(alphas=alphas,
                                         insertion_matrix=[swept.insertions for swept in sweeps],
                                         deletion_matrix=[swept.deletions for swept in sweeps])
    baseline = evaluation.aggregate_report([base[0] for _, base in results], [base[1] for _, base in results])

    table = [(alpha, ins, dels, freq) for alpha, ins, dels, freq
             in zip(alphas, report.per_alpha_insertion, report.per_alpha_deletion, report.max_insertion_frequency)]
    table.append(('fampe', report.mean_insertion, report.mean_deletion, None))
    table.append(('attexplore', baseline.mean_insertion, baseline.mean_deletion, None))
    fileformats.atomic_write(run.output_path('alpha_table.csv'), fileformats.csv_text(ALPHA_TABLE_HEADER, table))

    rows = [(name, alpha, ins, dels, swept.cutoff)
            for (name, _), swept in zip(entries, sweeps)
            for alpha, ins, dels in zip(swept.alphas, swept.insertions, swept.deletions)]
    fileformats.atomic_write(run.output_path('scores.csv'), fileformats.csv_text(fileformats.SCORE_HEADER, rows))

    pairs = [(swept.cutoff, swept.best_insertion_alpha) for swept in sweeps]
    fileformats.atomic_write(run.output_path('scatter.txt'),
                             ''.join(line + '\n' for line in evaluation.emit_cutoff_alpha_scatter(pairs)))
    fileformats.atomic_write(run.output_path('cutoff_summary.json'),
                             json.dumps(evaluation.cutoff_alpha_summary(pairs), indent=2) + '\n')
    fileformats.atomic_write(run.output_path('summary.json'),
                             fileformats.summary_text('fampe', report.mean_insertion, report.mean_deletion,
                                                      report.n_samples, alphas,
                                                      attexplore_mean_insertion=baseline.mean_insertion,
                                                      attexplore_mean_deletion=baseline.mean_deletion,
                                                      steps=eval_cfg.steps, baseline=eval_cfg.baseline_kind))
    if run.heatmaps and sweeps:
        stem = os.path.splitext(entries[0][0])[0]
        for alpha, amap in zip(alphas, sweeps[0].maps):
            fileformats.write_heatmap(run.output_path('{}_alpha_{:.2f}.pgm'.format(stem, alpha)), amap)
    best = int(np.argmax(report.per_alpha_insertion))
    _logger.info('Ablation over %d samples: fampe insertion %.6f, deletion %.6f; best mean alpha %g.',
                 report.n_samples, report.mean_insertion, report.mean_deletion, alphas[best])
    return report


COMMANDS = {
    'synth': cmd_synth,
    'train': cmd_train,
    'attribute': cmd_attribute,
    'evaluate': cmd_evaluate,
    'ablate': cmd_ablate_alpha,
    }
