"""
Shared fixtures: the lab app in testing mode, its CLI runner, toy network settings and
tiny in-memory corpora.
"""
import json

import numpy as np
import pytest

from app import create_app
from controllers.composite_controller import build_dataset
from controllers.scene_controller import build_corpus
from models.settings import LossFlags, LossWeights, ModelConfig, TrainConfig

TOY_SIZE = 16


@pytest.fixture
def app():
    app = create_app('testing')
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


def toy_model(**overrides):
    settings = dict(l_enc=2, l_dec=2, channels=(4,) * 7, height=TOY_SIZE, width=TOY_SIZE,
                    disc_channels=(4,), cls_channels=(4, 4))
    settings.update(overrides)
    return ModelConfig(**settings)


def toy_train(**overrides):
    settings = dict(epochs=2, batch_size=2, lr=1e-3, milestones=(1,), checkpoint_every=1,
                    model=toy_model(), weights=LossWeights(), flags=LossFlags())
    settings.update(overrides)
    return TrainConfig(**settings)


@pytest.fixture
def toy_model_config():
    return toy_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def rendered_groups():
    return build_corpus(3, TOY_SIZE, TOY_SIZE, 'rendered', seed=11)


@pytest.fixture(scope='session')
def real_groups():
    return build_corpus(3, TOY_SIZE, TOY_SIZE, 'real', seed=11)


@pytest.fixture(scope='session')
def toy_samples(rendered_groups, real_groups):
    """A few rendered and real training samples plus real test samples"""
    rendered = build_dataset(rendered_groups, 2, seed=5)
    real = build_dataset(real_groups[:2], 2, seed=5)
    test = build_dataset(real_groups[2:], 2, seed=5, split='test')
    return rendered, real, test


@pytest.fixture
def toy_config_file(tmp_path):
    """Flat dotted-key config shrinking the network to the toy size"""
    path = tmp_path / 'toy.json'
    path.write_text(json.dumps({
        'model.height': TOY_SIZE, 'model.width': TOY_SIZE,
        'model.channels': [4] * 7, 'model.disc_channels': [4], 'model.cls_channels': [4, 4],
        'model.l_enc': 2, 'model.l_dec': 2,
        'train.batch_size': 2, 'train.lr': 0.001, 'train.milestones': [1],
        'corpus.size': TOY_SIZE,
    }))
    return str(path)
