"""
Configuration file for the harmonization lab.
Handles environment variables, lab settings and flat dotted-key experiment configs.
"""
import hashlib
import json
import os
from dataclasses import fields, is_dataclass, replace

from dotenv import load_dotenv

from errors import ValidationError
from models.settings import CorpusSettings, DatasetSettings, ExperimentConfig, ModelConfig, TrainConfig

# Load environment variables from .env file
load_dotenv()

PACKAGE_ROOT = os.path.dirname(os.path.abspath(__file__))
SOURCE_DIRS = ('', 'controllers', 'diffcore', 'harmony', 'middleware', 'models', 'routes')


class Config:
    """Base configuration class with common settings."""

    DEBUG = os.environ.get('CHARM_LAB_DEBUG', 'False').lower() == 'true'
    TESTING = False

    # Worker cap for corpus generation
    CHARM_LAB_THREADS = int(os.environ.get('CHARM_LAB_THREADS', os.cpu_count() or 1))

    OUTPUT_ROOT = os.environ.get('OUTPUT_ROOT') or 'runs'
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'INFO'
    IMAGE_SIZE = int(os.environ.get('IMAGE_SIZE', 48))
    CHECKPOINT_EVERY = int(os.environ.get('CHECKPOINT_EVERY', 10))
    SHOW_PROGRESS = True


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'DEBUG'


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    CHARM_LAB_THREADS = 2
    LOG_LEVEL = 'WARNING'
    SHOW_PROGRESS = False


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}


# ---------------------------------------------------------------- experiment configs

# Flat key prefix -> path of the owning dataclass inside ExperimentConfig
SECTIONS = {
    'corpus': ('corpus',),
    'dataset': ('dataset',),
    'train': ('train',),
    'model': ('train', 'model'),
    'weights': ('train', 'weights'),
    'flags': ('train', 'flags'),
}


def default_experiment(image_size=48, checkpoint_every=10, output_root='runs'):
    """ExperimentConfig seeded from the lab settings"""
    model = ModelConfig(height=image_size, width=image_size)
    return ExperimentConfig(
        corpus=CorpusSettings(size=image_size),
        dataset=DatasetSettings(),
        train=TrainConfig(model=model, checkpoint_every=checkpoint_every),
        out=os.path.join(output_root, 'default'),
    )


def _section(experiment, path):
    obj = experiment
    for name in path:
        obj = getattr(obj, name)
    return obj


def flatten_experiment(experiment):
    """{'train.epochs': 60, 'model.l_enc': 4, ..., 'out': ...} in sorted key order"""
    flat = {'out': experiment.out}
    for prefix, path in SECTIONS.items():
        section = _section(experiment, path)
        for f in fields(section):
            value = getattr(section, f.name)
            if is_dataclass(value):
                continue
            flat[f'{prefix}.{f.name}'] = list(value) if isinstance(value, tuple) else value
    return dict(sorted(flat.items()))


def _coerce(key, value, current):
    """Convert a JSON or command-line value to the type of the field it replaces"""
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered not in ('true', 'false', '1', '0', 'yes', 'no', 'on', 'off'):
                    raise ValueError(value)
                return lowered in ('true', '1', 'yes', 'on')
            return bool(value)
        if isinstance(current, tuple):
            if isinstance(value, str):
                value = [v for v in value.replace(' ', '').strip('[]()').split(',') if v]
            return tuple(type(current[0])(v) if current else int(v) for v in value)
        if isinstance(current, int):
            number = float(value) if isinstance(value, str) else value
            if isinstance(number, float) and not number.is_integer():
                raise ValueError(value)
            return int(number)
        if isinstance(current, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ValidationError(f'config key "{key}": cannot use {value!r}') from None


def apply_overrides(experiment, overrides):
    """New ExperimentConfig with flat dotted-key overrides applied; unknown keys are errors"""
    known = flatten_experiment(experiment)
    unknown = sorted(k for k in overrides if k not in known)
    if unknown:
        raise ValidationError(f'unknown config keys: {", ".join(unknown)}')

    grouped = {}
    for key, value in overrides.items():
        if key == 'out':
            continue
        prefix, name = key.split('.', 1)
        current = getattr(_section(experiment, SECTIONS[prefix]), name)
        grouped.setdefault(prefix, {})[name] = _coerce(key, value, current)

    corpus = replace(experiment.corpus, **grouped.get('corpus', {}))
    dataset = replace(experiment.dataset, **grouped.get('dataset', {}))
    model = replace(experiment.train.model, **grouped.get('model', {}))
    weights = replace(experiment.train.weights, **grouped.get('weights', {}))
    flags = replace(experiment.train.flags, **grouped.get('flags', {}))
    train = replace(experiment.train, model=model, weights=weights, flags=flags, **grouped.get('train', {}))
    out = str(overrides.get('out', experiment.out))
    return ExperimentConfig(corpus=corpus, dataset=dataset, train=train, out=out)


def parse_set_options(pairs):
    """['train.epochs=5', ...] -> {'train.epochs': '5', ...}"""
    overrides = {}
    for pair in pairs or ():
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise ValidationError(f'--set expects key=value, got "{pair}"')
        overrides[key.strip()] = value.strip()
    return overrides


def load_experiment(path=None, overrides=None, base=None):
    """Defaults, then the JSON file at path, then command-line overrides"""
    experiment = base or default_experiment()
    if path:
        if not os.path.isfile(path):
            raise ValidationError(f'config file not found: {path}')
        with open(path) as fh:
            try:
                values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f'config file {path} is not valid JSON', details=str(exc)) from None
        if not isinstance(values, dict):
            raise ValidationError(f'config file {path} must hold a JSON object of dotted keys')
        experiment = apply_overrides(experiment, values)
    if overrides:
        experiment = apply_overrides(experiment, overrides)
    return experiment


def canonical_json(experiment):
    return json.dumps(flatten_experiment(experiment), sort_keys=True, separators=(',', ':'))


def config_hash(experiment):
    return hashlib.sha256(canonical_json(experiment).encode()).hexdigest()


def code_hash():
    """SHA-256 over the package's Python sources in sorted path order"""
    digest = hashlib.sha256()
    for sub in SOURCE_DIRS:
        folder = os.path.join(PACKAGE_ROOT, sub)
        if not os.path.isdir(folder):
            continue
        for name in sorted(os.listdir(folder)):
            if name.endswith('.py'):
                digest.update(f'{sub}/{name}'.encode())
                with open(os.path.join(folder, name), 'rb') as fh:
                    digest.update(fh.read())
    return digest.hexdigest()


def write_resolved(experiment, run_dir, prefix=''):
    """<run>/<prefix>config.json (flat keys) and <run>/<prefix>provenance.json (hashes and seeds).

    Commands sharing a directory use distinct prefixes.
    """
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, f'{prefix}config.json'), 'w') as fh:
        json.dump(flatten_experiment(experiment), fh, indent=2, sort_keys=True)
    provenance = {
        'config_hash': config_hash(experiment),
        'code_hash': code_hash(),
        'seeds': {'corpus': experiment.corpus.seed, 'dataset': experiment.dataset.seed,
                  'train': experiment.train.seed},
    }
    with open(os.path.join(run_dir, f'{prefix}provenance.json'), 'w') as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
    return provenance
