"""
Tests for ablation axes, trial planning, sweeps and their markdown tables.
"""
import json
from dataclasses import replace

import pytest

from conftest import toy_train
from config import default_experiment
from controllers.ablation_controller import (DEFAULT_VALUES, LOSS_ROWS, AblationRow, ablate_sweep,
                                             apply_axis, loss_flags, plan_trials, render_table,
                                             split_depths)
from controllers.composite_controller import build_dataset, split_groups, write_dataset
from controllers.scene_controller import write_corpus
from errors import ValidationError
from harmony.charmnet import load_net, param_partition


@pytest.fixture
def toy_experiment(tmp_path, rendered_groups, real_groups):
    root = str(tmp_path / 'data')
    write_corpus(rendered_groups, root, seed=11)
    write_corpus(real_groups, root, seed=11)
    real_train, real_test = split_groups(real_groups, 1)
    samples = (build_dataset(rendered_groups, 2, seed=5) + build_dataset(real_train, 2, seed=5)
               + build_dataset(real_test, 2, seed=5, split='test'))
    manifest = write_dataset(samples, root, root)
    return replace(default_experiment(), train=toy_train(epochs=1, dataset=manifest))


def test_loss_rows_enable_losses_cumulatively():
    assert len(LOSS_ROWS) == 6
    none, full = loss_flags('----'), loss_flags('ASWE')
    assert not any((none.adversarial, none.style_rd, none.weighted_cls, none.entropy_reduction))
    assert all((full.adversarial, full.style_rd, full.weighted_cls, full.entropy_reduction))
    er_only = loss_flags('AS-E')
    assert er_only.entropy_reduction and not er_only.weighted_cls
    with pytest.raises(ValidationError):
        loss_flags('AXWE')


@pytest.mark.parametrize('value, expected', [('4', (4, 4)), ('0', (0, 7)), ('7', (7, 0)),
                                             ('3', (3, 3)), ('2:5', (2, 5))])
def test_split_depths(value, expected):
    assert split_depths(value) == expected


@pytest.mark.parametrize('value', ['8', '-1', 'deep', '3:9'])
def test_split_depths_rejects(value):
    with pytest.raises(ValidationError):
        split_depths(value)


def test_apply_axis():
    train = toy_train()
    assert apply_axis(train, 'L', '5').model.l_enc == 5
    assert apply_axis(train, 'm', '0.25').weights.margin == 0.25
    assert apply_axis(train, 'lambda_sty_rl', 0).weights.lambda_sty_rl == 0.0
    assert apply_axis(train, 'losses', 'A---').flags.style_rd is False
    assert apply_axis(train, 'strategy', 'two_stage').strategy == 'two_stage'
    assert apply_axis(train, 'rendered_fraction', '0.5').rendered_fraction == 0.5
    assert train.weights.margin == 1.0
    for axis, value in (('m', '-1'), ('lambda_adv', 'x'), ('strategy', 'mixup'),
                        ('rendered_fraction', '0'), ('colour', '1')):
        with pytest.raises(ValidationError):
            apply_axis(train, axis, value)


def test_plan_trials(tmp_path):
    base = replace(default_experiment(), train=toy_train())
    trials = plan_trials(base, 'L', [], [0, 1], str(tmp_path))
    assert len(trials) == len(DEFAULT_VALUES['L']) * 2
    label, seed, experiment, run_dir = trials[1]
    assert (label, seed) == ('0', 1)
    assert experiment.train.seed == 1 and experiment.out == run_dir
    assert run_dir.endswith('seed_1')
    with pytest.raises(ValidationError):
        plan_trials(base, 'lambda_adv', [], [0], str(tmp_path))
    with pytest.raises(ValidationError):
        plan_trials(base, 'L', ['3', '11'], [0], str(tmp_path))


def test_render_table():
    metrics = {'mse': 10.0, 'fmse': 120.5, 'psnr': 33.3, 'entropy_in': 1.2,
               'entropy_out': 0.9, 'style_match': float('nan')}
    table = render_table([AblationRow('losses', 'AS-E', [0], metrics)])
    lines = table.splitlines()
    assert lines[0].startswith('| L_G^rd | L_in/out^rd | L_W^rl | L_ER^rl | MSE')
    assert lines[2] == '| ✓ | ✓ |  | ✓ | 10.00 | 120.50 | 33.30 | 1.200 | 0.900 | - |'
    depth = render_table([AblationRow('L', '0', [0], metrics)]).splitlines()[2]
    assert depth.startswith('| 0 | 7 | 10.00')
    assert render_table([]) == ''


def test_sweep_writes_table(tmp_path, toy_experiment):
    out = str(tmp_path / 'sweep')
    rows = ablate_sweep(toy_experiment, 'm', ['0.5', '2'], seeds=[0], out=out)
    assert [row.value for row in rows] == ['0.5', '2']
    for row in rows:
        assert row.seeds == [0]
        assert row.metrics['fmse'] > 0
    table = (tmp_path / 'sweep' / 'ablation_m.md').read_text()
    assert table.count('\n') == 4
    with open(tmp_path / 'sweep' / 'ablation_m.json') as fh:
        assert [r['value'] for r in json.load(fh)] == ['0.5', '2']
    assert (tmp_path / 'sweep' / 'm_0.5' / 'seed_0' / 'summary.json').exists()


def test_sweep_rejects_unknown_axis(toy_experiment, tmp_path):
    with pytest.raises(ValidationError):
        ablate_sweep(toy_experiment, 'depth', ['1'], out=str(tmp_path))
    with pytest.raises(ValidationError):
        ablate_sweep(toy_experiment, 'm', ['1'], seeds=[], out=str(tmp_path))


@pytest.mark.slow
def test_parallel_sweep_matches_serial(tmp_path, toy_experiment):
    serial = ablate_sweep(toy_experiment, 'losses', ['----', 'ASWE'], seeds=[0, 1], out=str(tmp_path / 's'))
    parallel = ablate_sweep(toy_experiment, 'losses', ['----', 'ASWE'], seeds=[0, 1], out=str(tmp_path / 'p'),
                            jobs=2)
    assert [r.metrics for r in serial] == [r.metrics for r in parallel]


@pytest.mark.slow
def test_split_extremes_train_and_partition(tmp_path, toy_experiment):
    experiment = replace(toy_experiment, train=replace(toy_experiment.train, epochs=5))
    out = tmp_path / 'depths'
    rows = ablate_sweep(experiment, 'L', ['0:0', '7:7'] + DEFAULT_VALUES['L'], seeds=[0], out=str(out))
    assert [row.value for row in rows] == ['0:0', '7:7', '0', '3', '4', '5', '7']
    table = (out / 'ablation_L.md').read_text().splitlines()
    assert table[0].startswith('| L_enc | L_dec | MSE')
    assert table[4].startswith('| 0 | 7 |') and table[8].startswith('| 7 | 0 |')

    def partition(value):
        net, _, _ = load_net(str(out / f'L_{value.replace(":", "-")}' / 'seed_0' / 'final.ckpt'))
        part = param_partition(net)
        assert part.total == net.store.count()
        return part

    fully_shared, fully_split = partition('0:0'), partition('7:7')
    assert fully_shared.rendered == fully_shared.real == 0
    assert fully_split.trunk == 0
    shallow, deep = partition('0'), partition('7')
    assert shallow.trunk_decoder == 0 and shallow.trunk_encoder > 0
    assert deep.trunk_encoder == 0 and deep.trunk_decoder > 0
    assert shallow.rendered == shallow.real > 0
