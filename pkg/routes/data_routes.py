"""
Data Commands Blueprint
`corpus` renders both scene families; `dataset` builds composite pairs and the manifest.
"""
import json
import os

import click
from flask import Blueprint, current_app

from config import apply_overrides, write_resolved
from controllers.composite_controller import (MAX_PAIRS, build_dataset, split_groups, split_novel,
                                              write_dataset)
from controllers.scene_controller import build_corpus, load_corpus, write_corpus
from errors import ValidationError
from middleware.command_middleware import experiment_options, flag_overrides, lab_command
from models.style import K

# Create data blueprint; commands attach to the top-level group
data_bp = Blueprint('data', __name__, cli_group=None)


@data_bp.cli.command('corpus')
@click.option('--scenes', type=int, default=None, help='Rendered scene groups')
@click.option('--real-scenes', type=int, default=None, help='Real-like scene groups')
@click.option('--size', type=int, default=None, help='Image height and width')
@click.option('--seed', type=int, default=None)
@click.option('--out', default='data', show_default=True, type=click.Path(file_okay=False))
@click.option('--workers', type=int, default=None, help='Render threads (default CHARM_LAB_THREADS)')
@lab_command
@experiment_options
def corpus_command(experiment, scenes, real_scenes, size, seed, out, workers):
    """Render the rendered and real-like corpora with the sealed style oracle"""
    experiment = apply_overrides(experiment, flag_overrides({
        'corpus.scenes': scenes, 'corpus.real_scenes': real_scenes,
        'corpus.size': size, 'corpus.seed': seed,
    }))
    settings = experiment.corpus
    for name, count in (('--scenes', settings.scenes), ('--real-scenes', settings.real_scenes)):
        if count < 1:
            raise ValidationError(f'{name} must be at least 1, got {count}')
    workers = workers or current_app.config['CHARM_LAB_THREADS']

    for family, count in (('rendered', settings.scenes), ('real', settings.real_scenes)):
        groups = build_corpus(count, settings.size, settings.size, family, settings.seed, workers=workers)
        write_corpus(groups, out, settings.seed)
        click.echo(f'✓ {family}: {count} scenes, {count * K} images + {count} masks')

    with open(os.path.join(out, 'corpus.json'), 'w') as fh:
        json.dump({'rendered_scenes': settings.scenes, 'real_scenes': settings.real_scenes,
                   'size': settings.size, 'seed': settings.seed, 'styles': K}, fh, indent=2, sort_keys=True)
    write_resolved(experiment, out)
    current_app.logger.info('corpus written to %s', out)
    click.echo(f'✓ corpus written to {out}')


@data_bp.cli.command('dataset')
@click.option('--corpus', 'corpus_root', default='data', show_default=True, type=click.Path(file_okay=False))
@click.option('--out', default=None, type=click.Path(file_okay=False), help='Manifest directory (default: corpus)')
@click.option('--pairs-per-group', type=int, default=None)
@click.option('--test-scenes', type=int, default=None, help='Held-out real-like groups')
@click.option('--novel-scenes', type=int, default=None, help='Real-like groups reserved for the upper_bound strategy')
@click.option('--seed', type=int, default=None)
@lab_command
@experiment_options
def dataset_command(experiment, corpus_root, out, pairs_per_group, test_scenes, novel_scenes, seed):
    """Exchange foregrounds inside every group and write dataset.json"""
    experiment = apply_overrides(experiment, flag_overrides({
        'dataset.pairs_per_group': pairs_per_group, 'dataset.test_scenes': test_scenes,
        'dataset.novel_scenes': novel_scenes, 'dataset.seed': seed,
    }))
    settings = experiment.dataset
    if not 1 <= settings.pairs_per_group <= MAX_PAIRS:
        raise ValidationError(f'--pairs-per-group must lie in [1, {MAX_PAIRS}], got {settings.pairs_per_group}')
    out = out or corpus_root

    rendered = load_corpus(corpus_root, 'rendered')
    real_train, real_test = split_groups(load_corpus(corpus_root, 'real'), settings.test_scenes)
    real_base, real_novel = split_novel(real_train, settings.novel_scenes)
    samples = []
    for groups, split, label in ((rendered, 'train', 'rendered'), (real_base, 'train', 'real train'),
                                 (real_novel, 'novel', 'real novel'), (real_test, 'test', 'real test')):
        if not groups:
            continue
        built = build_dataset(groups, settings.pairs_per_group, settings.seed, split=split)
        click.echo(f'✓ {label}: {len(groups)} groups × {settings.pairs_per_group} pairs = {len(built)} samples')
        samples.extend(built)

    path = write_dataset(samples, out, corpus_root)
    write_resolved(experiment, out, prefix='dataset_')
    current_app.logger.info('dataset manifest %s with %d records', path, len(samples))
    click.echo(f'✓ wrote {len(samples)} records to {path}')
