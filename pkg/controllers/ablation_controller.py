"""
Ablation Controller
Sweeps one experiment axis over several values and seeds, each trial in its own run
directory, and reports seed-median aggregates as a markdown table.
"""
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from errors import ValidationError
from models.settings import DEPTH, STRATEGIES, LossFlags

logger = logging.getLogger(__name__)

# Cumulative loss enablement rows: adversarial, style_rd, weighted_cls, entropy_reduction
LOSS_ROWS = ('----', 'A---', 'AS--', 'ASW-', 'AS-E', 'ASWE')
L_PAIRING = {0: (0, DEPTH), DEPTH: (DEPTH, 0)}
AXES = ('losses', 'L', 'm', 'lambda_adv', 'lambda_sty_rd', 'lambda_sty_rl', 'strategy', 'rendered_fraction')
DEFAULT_VALUES = {
    'losses': list(LOSS_ROWS),
    'L': ['0', '3', '4', '5', '7'],
    'm': ['0.25', '0.5', '1', '2', '4'],
    # upper_bound needs a dataset built with novel scenes, so it is only swept on request
    'strategy': [s for s in STRATEGIES if s != 'upper_bound'],
}
REPORTED = ('mse', 'fmse', 'psnr', 'entropy_in', 'entropy_out', 'style_match')


@dataclass
class AblationRow:
    axis: str
    value: str
    seeds: list
    metrics: dict = field(default_factory=dict)
    per_seed: list = field(default_factory=list)


def loss_flags(row):
    if row not in LOSS_ROWS:
        raise ValidationError(f'losses axis value must be one of {", ".join(LOSS_ROWS)}, got "{row}"')
    return LossFlags(adversarial=row[0] == 'A', style_rd=row[1] == 'S',
                     weighted_cls=row[2] == 'W', entropy_reduction=row[3] == 'E')


def split_depths(value):
    """'4' -> (4, 4); '0' -> (0, 7); '7' -> (7, 0); '2:5' -> (2, 5)"""
    try:
        if ':' in value:
            enc, dec = (int(v) for v in value.split(':'))
        else:
            depth = int(value)
            enc, dec = L_PAIRING.get(depth, (depth, depth))
    except ValueError:
        raise ValidationError(f'L axis value must be an integer or enc:dec, got "{value}"') from None
    if not (0 <= enc <= DEPTH and 0 <= dec <= DEPTH):
        raise ValidationError(f'L axis value "{value}" outside [0, {DEPTH}]')
    return enc, dec


def _non_negative(axis, value):
    try:
        number = float(value)
    except ValueError:
        raise ValidationError(f'{axis} axis value must be a number, got "{value}"') from None
    if number < 0:
        raise ValidationError(f'{axis} axis value must be non-negative, got {value}')
    return number


def apply_axis(train, axis, value):
    """TrainConfig with one axis value applied"""
    value = str(value).strip()
    if axis == 'losses':
        return replace(train, flags=loss_flags(value))
    if axis == 'L':
        enc, dec = split_depths(value)
        return replace(train, model=replace(train.model, l_enc=enc, l_dec=dec))
    if axis == 'm':
        return replace(train, weights=replace(train.weights, margin=_non_negative(axis, value)))
    if axis in ('lambda_adv', 'lambda_sty_rd', 'lambda_sty_rl'):
        return replace(train, weights=replace(train.weights, **{axis: _non_negative(axis, value)}))
    if axis == 'strategy':
        if value not in STRATEGIES:
            raise ValidationError(f'strategy axis value must be one of {", ".join(STRATEGIES)}, got "{value}"')
        return replace(train, strategy=value)
    if axis == 'rendered_fraction':
        return replace(train, rendered_fraction=_non_negative(axis, value))
    raise ValidationError(f'unknown ablation axis "{axis}"; choose from {", ".join(AXES)}')


def plan_trials(base, axis, values, seeds, out):
    """(label, seed, experiment, run_dir) for every value x seed; validates all values up front"""
    if not values:
        values = DEFAULT_VALUES.get(axis)
        if values is None:
            raise ValidationError(f'axis "{axis}" needs explicit values')
    trials = []
    for value in values:
        train = apply_axis(base.train, axis, value)
        for seed in seeds:
            run_dir = os.path.join(out, f'{axis}_{str(value).replace(":", "-")}', f'seed_{seed}')
            experiment = replace(base, train=replace(train, seed=int(seed)), out=run_dir)
            trials.append((str(value), int(seed), experiment, run_dir))
    return trials


def _run_trial(trial):
    from config import config_hash, write_resolved
    from controllers.train_controller import run_experiment
    label, seed, experiment, run_dir = trial
    write_resolved(experiment, run_dir)
    summary = run_experiment(experiment, run_dir, progress=False, config_hash=config_hash(experiment))
    return label, seed, summary['model'].get('real', summary['model']['all'])


def ablate_sweep(base, axis, values=None, seeds=(0,), out='runs/ablate', jobs=1):
    """One train + evaluate per (value, seed); rows hold per-metric medians over seeds"""
    if axis not in AXES:
        raise ValidationError(f'unknown ablation axis "{axis}"; choose from {", ".join(AXES)}')
    seeds = list(seeds)
    if not seeds:
        raise ValidationError('ablation needs at least one seed')
    trials = plan_trials(base, axis, list(values or []), seeds, out)
    logger.info('ablating %s over %d trials with %d jobs', axis, len(trials), jobs)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, trials))
    else:
        results = [_run_trial(trial) for trial in trials]

    rows = {}
    for label, seed, metrics in results:
        row = rows.setdefault(label, AblationRow(axis=axis, value=label, seeds=[]))
        row.seeds.append(seed)
        row.per_seed.append(metrics)
    for row in rows.values():
        for name in REPORTED:
            series = np.array([m.get(name, float('nan')) for m in row.per_seed], dtype=np.float64)
            finite = series[~np.isnan(series)]
            row.metrics[name] = float(np.median(finite)) if finite.size else float('nan')
    ordered = [rows[label] for label in dict.fromkeys(t[0] for t in trials)]

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f'ablation_{axis}.md'), 'w') as fh:
        fh.write(render_table(ordered) + '\n')
    with open(os.path.join(out, f'ablation_{axis}.json'), 'w') as fh:
        json.dump([row.__dict__ for row in ordered], fh, indent=2, sort_keys=True)
    return ordered


# ---------------------------------------------------------------- tables

def _num(value, digits=2):
    return '-' if np.isnan(value) else f'{value:.{digits}f}'


def _mark(on):
    return '✓' if on else ''


def render_table(rows):
    """Markdown table; loss rows use one check column per loss, L rows list both depths"""
    if not rows:
        return ''
    axis = rows[0].axis
    if axis == 'losses':
        header = ['L_G^rd', 'L_in/out^rd', 'L_W^rl', 'L_ER^rl']
    elif axis == 'L':
        header = ['L_enc', 'L_dec']
    else:
        header = [axis]
    header += ['MSE', 'fMSE', 'PSNR', 'H(P^in)', 'H(P^out)', 'style acc']
    lines = ['| ' + ' | '.join(header) + ' |', '|' + '---|' * len(header)]
    for row in rows:
        if axis == 'losses':
            flags = loss_flags(row.value)
            cells = [_mark(flags.adversarial), _mark(flags.style_rd),
                     _mark(flags.weighted_cls), _mark(flags.entropy_reduction)]
        elif axis == 'L':
            cells = [str(d) for d in split_depths(row.value)]
        else:
            cells = [row.value]
        m = row.metrics
        cells += [_num(m['mse']), _num(m['fmse']), _num(m['psnr']),
                  _num(m['entropy_in'], 3), _num(m['entropy_out'], 3), _num(m['style_match'], 3)]
        lines.append('| ' + ' | '.join(cells) + ' |')
    return '\n'.join(lines)
