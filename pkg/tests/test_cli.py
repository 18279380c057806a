"""
End-to-end tests for the command group: corpus -> dataset -> train -> eval -> rank.
"""
import json
import os
import statistics
import time

import pytest

from controllers.train_controller import write_eval_csv
from harmony.metrics import EvalRecord


def invoke(runner, *args):
    return runner.invoke(args=[str(a) for a in args])


def make_data(runner, root, config):
    data = root / 'data'
    result = invoke(runner, 'corpus', '--config', config, '--scenes', 3, '--real-scenes', 3,
                    '--seed', 11, '--out', data, '--workers', 2)
    assert result.exit_code == 0, result.output
    result = invoke(runner, 'dataset', '--config', config, '--corpus', data,
                    '--pairs-per-group', 2, '--test-scenes', 1, '--seed', 5)
    assert result.exit_code == 0, result.output
    return data


def test_corpus_command(runner, tmp_path, toy_config_file):
    data = tmp_path / 'data'
    result = invoke(runner, 'corpus', '--config', toy_config_file, '--scenes', 2, '--real-scenes', 1,
                    '--out', data)
    assert result.exit_code == 0, result.output
    assert '✓ rendered: 2 scenes, 20 images + 2 masks' in result.output
    assert sorted(os.listdir(data / 'rendered' / 'scenes')) == ['00000', '00001']
    assert (data / 'oracle_styles.json').exists()
    for name in ('corpus.json', 'config.json', 'provenance.json'):
        assert (data / name).exists()
    with open(data / 'corpus.json') as fh:
        assert json.load(fh)['size'] == 16


def test_corpus_is_reproducible(runner, tmp_path, toy_config_file):
    for name in ('a', 'b'):
        result = invoke(runner, 'corpus', '--config', toy_config_file, '--scenes', 1, '--real-scenes', 1,
                        '--seed', 3, '--out', tmp_path / name)
        assert result.exit_code == 0, result.output
    for rel in (('rendered', 'scenes', '00000', 'style_4.png'), ('real', 'scenes', '00000', 'view_2.png')):
        a = (tmp_path / 'a').joinpath(*rel).read_bytes()
        b = (tmp_path / 'b').joinpath(*rel).read_bytes()
        assert a == b


@pytest.mark.parametrize('flag', ['--scenes', '--real-scenes'])
def test_corpus_rejects_empty_families(runner, tmp_path, flag):
    result = invoke(runner, 'corpus', flag, 0, '--out', tmp_path / 'data')
    assert result.exit_code == 2
    assert '"error": "Invalid input"' in result.output
    assert not (tmp_path / 'data').exists()


def test_dataset_command(runner, tmp_path, toy_config_file):
    data = make_data(runner, tmp_path, toy_config_file)
    with open(data / 'dataset.json') as fh:
        records = json.load(fh)
    assert len(records) == 3 * 2 + 2 * 2 + 1 * 2
    assert sum(r['split'] == 'test' for r in records) == 2
    assert all(r['domain'] == 'real' for r in records if r['split'] == 'test')
    with open(data / 'config.json') as fh:
        corpus_config = json.load(fh)
    with open(data / 'dataset_config.json') as fh:
        dataset_config = json.load(fh)
    assert corpus_config['dataset.seed'] == 7 and corpus_config['corpus.seed'] == 11
    assert dataset_config['dataset.seed'] == 5 and dataset_config['dataset.pairs_per_group'] == 2
    assert (data / 'dataset_provenance.json').exists()


def test_dataset_rejects_too_many_pairs(runner, tmp_path):
    result = invoke(runner, 'dataset', '--corpus', tmp_path, '--pairs-per-group', 91)
    assert result.exit_code == 2
    assert '90' in result.output


def test_dataset_without_corpus(runner, tmp_path):
    result = invoke(runner, 'dataset', '--corpus', tmp_path / 'nowhere')
    assert result.exit_code == 1
    assert '"error": "Dataset error"' in result.output


def test_train_then_eval(runner, tmp_path, toy_config_file):
    data = make_data(runner, tmp_path, toy_config_file)
    run = tmp_path / 'run'
    result = invoke(runner, 'train', '--config', toy_config_file, '--dataset', data / 'dataset.json',
                    '--epochs', 1, '--out', run)
    assert result.exit_code == 0, result.output
    assert 'harmonized [real]' in result.output
    for name in ('final.ckpt', 'epoch_0001.ckpt', 'runlog.jsonl', 'eval.csv', 'eval_composite.csv',
                 'summary.json', 'config.json', 'provenance.json'):
        assert (run / name).exists(), name
    with open(run / 'summary.json') as fh:
        summary = json.load(fh)
    assert summary['model']['real']['count'] == 2

    report = tmp_path / 'report'
    result = invoke(runner, 'eval', '--identity', '--dataset', data / 'dataset.json', '--out', report)
    assert result.exit_code == 0, result.output
    assert (report / 'eval_composite.csv').read_text() == (run / 'eval_composite.csv').read_text()

    result = invoke(runner, 'eval', '--checkpoint', run / 'final.ckpt', '--dataset', data / 'dataset.json',
                    '--out', report)
    assert result.exit_code == 0, result.output
    assert (report / 'eval.csv').read_text() == (run / 'eval.csv').read_text()

    result = invoke(runner, 'eval', '--checkpoint', run / 'final.ckpt', '--split', 'train',
                    '--domain', 'rendered', '--dataset', data / 'dataset.json', '--out', report)
    assert result.exit_code == 0, result.output
    with open(report / 'eval.json') as fh:
        assert json.load(fh)['rendered']['count'] == 6


def test_eval_needs_a_harmonizer(runner, tmp_path):
    result = invoke(runner, 'eval', '--dataset', tmp_path / 'dataset.json', '--out', tmp_path)
    assert result.exit_code == 2
    result = invoke(runner, 'eval', '--identity', '--checkpoint', tmp_path / 'x.ckpt',
                    '--dataset', tmp_path / 'dataset.json', '--out', tmp_path)
    assert result.exit_code == 2


def test_train_rejects_unknown_config_keys(runner, tmp_path):
    result = invoke(runner, 'train', '--set', 'train.epochz=3', '--out', tmp_path / 'run')
    assert result.exit_code == 2
    assert 'train.epochz' in result.output


def test_rank_from_tally(runner, tmp_path):
    tally = tmp_path / 'tally.json'
    tally.write_text(json.dumps({'methods': ['charmnet', 'fusion', 'composite'],
                                 'wins': [[0, 30, 40], [10, 0, 25], [5, 15, 0]]}))
    out = tmp_path / 'ranking.json'
    result = invoke(runner, 'rank', '--tally', tally, '--out', out)
    assert result.exit_code == 0, result.output
    assert result.output.splitlines()[0].startswith('1. charmnet')
    with open(out) as fh:
        assert [row['method'] for row in json.load(fh)] == ['charmnet', 'fusion', 'composite']


def test_rank_from_reports(runner, tmp_path):
    ids = [f'real-00002-0-{j}' for j in range(1, 5)]
    write_eval_csv([EvalRecord(i, 'real', 1.0, f, 30.0) for i, f in zip(ids, [1.0, 2.0, 3.0, 9.0])],
                   str(tmp_path / 'a.csv'))
    write_eval_csv([EvalRecord(i, 'real', 1.0, f, 30.0) for i, f in zip(ids, [2.0, 3.0, 4.0, 5.0])],
                   str(tmp_path / 'b.csv'))
    result = invoke(runner, 'rank', '--report', f'ours={tmp_path / "a.csv"}', '--report', f'base={tmp_path / "b.csv"}')
    assert result.exit_code == 0, result.output
    assert '1. ours' in result.output


def test_rank_argument_errors(runner, tmp_path):
    assert invoke(runner, 'rank').exit_code == 2
    assert invoke(runner, 'rank', '--report', 'nocsv').exit_code == 2
    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps({'methods': ['a', 'b'], 'wins': [[0, 0], [0, 0]]}))
    result = invoke(runner, 'rank', '--tally', bad)
    assert result.exit_code == 1
    assert '"error": "Ranking error"' in result.output


def test_upper_bound_trains_on_novel_real_pairs(runner, tmp_path, toy_config_file):
    data = tmp_path / 'data'
    assert invoke(runner, 'corpus', '--config', toy_config_file, '--scenes', 2, '--real-scenes', 3,
                  '--out', data).exit_code == 0
    result = invoke(runner, 'dataset', '--config', toy_config_file, '--corpus', data, '--pairs-per-group', 2,
                    '--test-scenes', 1, '--novel-scenes', 1)
    assert result.exit_code == 0, result.output
    assert '✓ real novel: 1 groups × 2 pairs = 2 samples' in result.output

    run = tmp_path / 'upper'
    result = invoke(runner, 'train', '--config', toy_config_file, '--dataset', data / 'dataset.json',
                    '--epochs', 1, '--strategy', 'upper_bound', '--out', run)
    assert result.exit_code == 0, result.output
    with open(run / 'runlog.jsonl') as fh:
        steps = [json.loads(line) for line in fh if '"event": "step"' in line]
    # 4 real pairs at batch 2, rendered pairs never used
    assert len(steps) == 2
    assert all(s['L_rec_rd'] == 0.0 for s in steps)


def test_upper_bound_without_novel_pairs_is_a_dataset_error(runner, tmp_path, toy_config_file):
    data = make_data(runner, tmp_path, toy_config_file)
    result = invoke(runner, 'train', '--config', toy_config_file, '--dataset', data / 'dataset.json',
                    '--epochs', 1, '--strategy', 'upper_bound', '--out', tmp_path / 'run')
    assert result.exit_code == 1
    assert '--novel-scenes' in result.output


# ---------------------------------------------------------------- long acceptance runs

def build_data(runner, *config_args):
    """corpus and dataset under ./data"""
    assert invoke(runner, 'corpus', *config_args, '--out', 'data').exit_code == 0
    assert invoke(runner, 'dataset', *config_args, '--corpus', 'data').exit_code == 0


def train_run(runner, *config_args, seed=0, out='run'):
    result = invoke(runner, 'train', *config_args, '--dataset', os.path.join('data', 'dataset.json'),
                    '--seed', seed, '--out', out)
    assert result.exit_code == 0, result.output
    with open(os.path.join(out, 'summary.json')) as fh:
        return json.load(fh)


@pytest.mark.slow
def test_end_to_end_runs_are_bit_identical(runner, tmp_path, toy_config_file, monkeypatch):
    config = ('--config', toy_config_file, '--set', 'corpus.scenes=4', '--set', 'corpus.real_scenes=4',
              '--set', 'dataset.test_scenes=1', '--set', 'train.epochs=2', '--set', 'train.checkpoint_every=1')
    for name in ('a', 'b'):
        (tmp_path / name).mkdir()
        monkeypatch.chdir(tmp_path / name)
        build_data(runner, *config)
        train_run(runner, *config)
    for name in ('final.ckpt', 'epoch_0001.ckpt', 'epoch_0002.ckpt', 'eval.csv', 'eval_composite.csv'):
        a = (tmp_path / 'a' / 'run' / name).read_bytes()
        b = (tmp_path / 'b' / 'run' / name).read_bytes()
        assert a == b, name
    assert (tmp_path / 'a' / 'data' / 'dataset.json').read_bytes() == \
        (tmp_path / 'b' / 'data' / 'dataset.json').read_bytes()


@pytest.mark.slow
def test_short_schedule_reports_style_concentration(runner, tmp_path, toy_config_file, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = ('--config', toy_config_file, '--set', 'corpus.scenes=8', '--set', 'corpus.real_scenes=6',
              '--set', 'dataset.test_scenes=2', '--set', 'train.epochs=3')
    build_data(runner, *config)
    summary = train_run(runner, *config)
    real, composite = summary['model']['real'], summary['composite']['real']
    assert real['count'] == composite['count'] == 2 * 4
    assert real['fmse'] > 0 and composite['fmse'] > 0
    assert real['entropy_in'] > 0 and real['entropy_out'] > 0
    assert 0.0 <= real['style_match'] <= 1.0


@pytest.mark.slow
def test_default_scale_training_meets_targets(runner, tmp_path, monkeypatch):
    """Default corpus, dataset and 60-epoch schedule; three seeds, each trained inside 30 minutes"""
    monkeypatch.chdir(tmp_path)
    build_data(runner)
    reductions, entropy_gaps, matches = [], [], []
    for seed in (0, 1, 2):
        started = time.time()
        summary = train_run(runner, seed=seed, out=f'run_{seed}')
        assert time.time() - started <= 30 * 60
        real, composite = summary['model']['real'], summary['composite']['real']
        reductions.append(1.0 - real['fmse'] / composite['fmse'])
        entropy_gaps.append(real['entropy_in'] - real['entropy_out'])
        matches.append(real['style_match'])
    assert statistics.median(reductions) >= 0.40
    assert statistics.median(entropy_gaps) > 0
    assert statistics.median(matches) > 0.60
