"""
Experiment Commands Blueprint
`train`, `eval`, `ablate` and `rank` over a dataset manifest and run directories.
"""
import json
import os

import click
from flask import Blueprint, current_app

from config import apply_overrides, config_hash, write_resolved
from controllers.ablation_controller import AXES, ablate_sweep, render_table
from controllers.composite_controller import load_dataset
from controllers.ranking_controller import load_tally, rank, tally_from_reports
from controllers.train_controller import evaluate, oracle_for, run_experiment, write_eval_csv
from errors import ValidationError
from harmony.charmnet import load_net
from middleware.command_middleware import experiment_options, flag_overrides, lab_command

# Create experiment blueprint; commands attach to the top-level group
experiment_bp = Blueprint('experiment', __name__, cli_group=None)


def _echo_aggregates(title, aggregates):
    for domain, row in aggregates.items():
        click.echo(f'✓ {title} [{domain}] n={row["count"]} MSE={row["mse"]:.2f} '
                   f'fMSE={row["fmse"]:.2f} PSNR={row["psnr"]:.2f}')


def _csv_list(value, cast=str):
    if value is None:
        return None
    try:
        return [cast(v.strip()) for v in value.split(',') if v.strip()]
    except ValueError:
        raise ValidationError(f'cannot parse list "{value}"') from None


@experiment_bp.cli.command('train')
@click.option('--dataset', default=None, help='Dataset manifest (dataset.json)')
@click.option('--epochs', type=int, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--strategy', default=None)
@click.option('--out', default=None, help='Run directory')
@click.option('--resume', default=None, type=click.Path(dir_okay=False), help='Checkpoint to resume from')
@lab_command
@experiment_options
def train_command(experiment, dataset, epochs, seed, strategy, out, resume):
    """Train CharmNet and score the held-out real-like split"""
    experiment = apply_overrides(experiment, flag_overrides({
        'train.dataset': dataset, 'train.epochs': epochs, 'train.seed': seed,
        'train.strategy': strategy, 'out': out,
    }))
    run_dir = experiment.out
    provenance = write_resolved(experiment, run_dir)
    current_app.logger.info('training run %s (config %s)', run_dir, provenance['config_hash'][:12])
    summary = run_experiment(experiment, run_dir, progress=current_app.config['SHOW_PROGRESS'],
                             resume=resume, config_hash=provenance['config_hash'])
    _echo_aggregates('input composite', summary['composite'])
    _echo_aggregates('harmonized', summary['model'])
    click.echo(f'✓ run written to {run_dir}')


@experiment_bp.cli.command('eval')
@click.option('--checkpoint', default='none', show_default=True, help='Checkpoint path, or "none"')
@click.option('--identity', is_flag=True, help='Score the composites themselves')
@click.option('--dataset', default=None, help='Dataset manifest (dataset.json)')
@click.option('--split', default='test', show_default=True, type=click.Choice(['train', 'novel', 'test']))
@click.option('--domain', default=None, type=click.Choice(['rendered', 'real']))
@click.option('--parity', is_flag=True, help='Measure after bilinear upsampling to 256x256')
@click.option('--out', default=None, help='Report directory')
@lab_command
@experiment_options
def eval_command(experiment, checkpoint, identity, dataset, split, domain, parity, out):
    """Per-sample metrics and style report as CSV"""
    experiment = apply_overrides(experiment, flag_overrides({'train.dataset': dataset, 'out': out}))
    manifest = experiment.train.dataset
    net = None
    if checkpoint.lower() != 'none':
        if identity:
            raise ValidationError('--identity scores composites; drop --checkpoint')
        net, _, _ = load_net(checkpoint)
    elif not identity:
        raise ValidationError('give --checkpoint or --identity')

    samples = load_dataset(manifest, split=split, domain=domain)
    records, aggregates = evaluate(net, samples, oracle=oracle_for(manifest), identity=identity, parity=parity)
    name = 'eval_composite.csv' if identity else 'eval.csv'
    path = os.path.join(experiment.out, name)
    write_eval_csv(records, path)
    with open(os.path.join(experiment.out, name.replace('.csv', '.json')), 'w') as fh:
        json.dump(aggregates, fh, indent=2, sort_keys=True)
    _echo_aggregates('input composite' if identity else 'harmonized', aggregates)
    click.echo(f'✓ wrote {len(records)} records to {path}')


@experiment_bp.cli.command('ablate')
@click.option('--axis', required=True, type=click.Choice(AXES))
@click.option('--values', default=None, help='Comma-separated axis values')
@click.option('--seeds', default='0', show_default=True, help='Comma-separated training seeds')
@click.option('--jobs', type=int, default=1, show_default=True, help='Parallel worker processes')
@click.option('--dataset', default=None, help='Dataset manifest (dataset.json)')
@click.option('--epochs', type=int, default=None)
@click.option('--out', default=None, help='Sweep directory')
@lab_command
@experiment_options
def ablate_command(experiment, axis, values, seeds, jobs, dataset, epochs, out):
    """Train and evaluate once per axis value and seed; write a markdown table"""
    experiment = apply_overrides(experiment, flag_overrides({
        'train.dataset': dataset, 'train.epochs': epochs, 'out': out,
    }))
    if jobs < 1:
        raise ValidationError(f'--jobs must be at least 1, got {jobs}')
    rows = ablate_sweep(experiment, axis, _csv_list(values), _csv_list(seeds, int),
                        out=experiment.out, jobs=jobs)
    click.echo(render_table(rows))
    click.echo(f'✓ {len(rows)} configurations written to {experiment.out}')


@experiment_bp.cli.command('rank')
@click.option('--tally', default=None, type=click.Path(dir_okay=False), help='JSON {"methods", "wins"}')
@click.option('--report', 'reports', multiple=True, metavar='METHOD=CSV', help='Evaluation CSV per method')
@click.option('--out', default=None, type=click.Path(dir_okay=False), help='Write the ranking as JSON')
@lab_command
def rank_command(tally, reports, out):
    """Bradley-Terry ranking from a tally or from evaluation reports"""
    if bool(tally) == bool(reports):
        raise ValidationError('give exactly one of --tally or --report')
    if tally:
        counts = load_tally(tally)
    else:
        paths = {}
        for item in reports:
            method, sep, path = item.partition('=')
            if not sep:
                raise ValidationError(f'--report expects METHOD=CSV, got "{item}"')
            paths[method] = path
        counts = tally_from_reports(paths)

    ranking = rank(counts)
    for place, row in enumerate(ranking, start=1):
        click.echo(f'{place}. {row["method"]}  {row["score"]:+.4f}  ({row["wins"]} wins)')
    if out:
        with open(out, 'w') as fh:
            json.dump(ranking, fh, indent=2)
        click.echo(f'✓ ranking written to {out}')
    current_app.logger.info('ranked %d methods', len(ranking))
