"""
Tests for the adversarial, reconstruction and style losses and their combination.
"""
import math

import numpy as np
import pytest

from diffcore import functional as F
from diffcore.gradcheck import grad_check
from diffcore.graph import Graph
from diffcore.layers import ParameterStore
from diffcore.tensor import Tensor
from errors import ShapeError, ValidationError
from harmony.losses import (LossBreakdown, entropy, loss_adv_generator, loss_discriminator,
                            loss_entropy_reduction, loss_reconstruction, loss_style_aggregation,
                            loss_style_ce, loss_total_generator, loss_weighted_cls)
from models.settings import LossWeights
from models.style import K, one_hot

LN10 = math.log(10.0)
UNIFORM = np.full(K, 1.0 / K)
FLOOR = 1e-12


def value(t):
    return t.item()


@pytest.mark.parametrize('real, rendered, expected', [
    ([1.0], [-1.0], 0.0),
    ([0.0], [0.0], 2.0),
    ([0.5], [-0.5], 1.0),
    ([2.0, 0.0], [-3.0, 0.5], 0.5 + 0.75),
])
def test_discriminator_hinge(real, rendered, expected):
    assert value(loss_discriminator(np.array(real), np.array(rendered))) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize('scores, expected', [([-0.5], 0.5), ([0.0, 0.0], 0.0), ([1.0, 3.0], -2.0)])
def test_generator_adversarial(scores, expected):
    assert value(loss_adv_generator(np.array(scores))) == pytest.approx(expected, abs=1e-12)


def test_empty_score_batches():
    with pytest.raises(ValidationError):
        loss_adv_generator(np.array([]))
    with pytest.raises(ValidationError):
        loss_discriminator(np.array([]), np.array([1.0]))


def test_reconstruction(rng):
    image = rng.random((2, 3, 4, 4))
    assert value(loss_reconstruction(image, image)) == 0.0
    assert value(loss_reconstruction(image + 0.1, image)) == pytest.approx(0.1, abs=1e-12)

    other = rng.random(image.shape)
    total = 0.0
    for index in np.ndindex(image.shape):
        total += abs(image[index] - other[index])
    assert value(loss_reconstruction(image, other)) == pytest.approx(total / image.size, rel=1e-12)
    with pytest.raises(ShapeError):
        loss_reconstruction(image, image[:1])


def test_style_cross_entropy():
    assert value(loss_style_ce(one_hot(3), one_hot(3))) == 0.0
    target = np.zeros(K)
    target[:2] = [0.25, 0.75]
    assert value(loss_style_ce(UNIFORM, target)) == pytest.approx(LN10, abs=1e-9)
    pred = np.zeros(K)
    pred[:2] = 0.5
    assert value(loss_style_ce(pred, target)) == pytest.approx(math.log(2.0), abs=1e-9)


def test_style_cross_entropy_is_entropy_on_the_diagonal(rng):
    p = rng.dirichlet(np.ones(K))
    assert value(loss_style_ce(p, p)) == pytest.approx(float(entropy(p[None]).data[0]), abs=1e-12)


def test_style_cross_entropy_rejects_bad_distributions():
    with pytest.raises(ValidationError):
        loss_style_ce(np.full(K, 0.2), UNIFORM)
    with pytest.raises(ShapeError):
        loss_style_ce(np.full(4, 0.25), np.full(4, 0.25))


def test_weighted_classification():
    assert value(loss_weighted_cls(one_hot(2), one_hot(2))) == 0.0
    assert value(loss_weighted_cls(one_hot(6), UNIFORM)) == pytest.approx(LN10, abs=1e-9)
    oracle = -sum(0.1 * math.log(max(q, FLOOR)) for q in one_hot(0))
    assert oracle == pytest.approx(-0.9 * math.log(FLOOR))
    assert value(loss_weighted_cls(UNIFORM, one_hot(0))) == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize('p_in, p_out, m, expected', [
    (UNIFORM, UNIFORM, 1.0, 1.0),
    (UNIFORM, one_hot(4), 1.0, 0.0),
    (one_hot(4), UNIFORM, 1.0, 1.0 + LN10),
    (one_hot(1), one_hot(1), 0.0, 0.0),
])
def test_entropy_reduction(p_in, p_out, m, expected):
    assert value(loss_entropy_reduction(p_in, p_out, m)) == pytest.approx(expected, abs=1e-9)


def test_entropy_reduction_margin_must_be_non_negative():
    with pytest.raises(ValidationError):
        loss_entropy_reduction(UNIFORM, UNIFORM, -0.5)


def test_style_aggregation(rng):
    assert value(loss_style_aggregation(one_hot(7), one_hot(7), 1.0)) == pytest.approx(1.0)
    expected = value(loss_weighted_cls(UNIFORM, one_hot(0)))
    assert value(loss_style_aggregation(UNIFORM, one_hot(0), 1.0)) == pytest.approx(expected, rel=1e-12)
    p = rng.dirichlet(np.ones(K))
    h = float(entropy(p[None]).data[0])
    assert value(loss_style_aggregation(p, p, 0.0)) == pytest.approx(h, abs=1e-12)


def test_reference_distribution_gets_no_gradient(rng):
    logits_in = Tensor(rng.standard_normal((3, K)), requires_grad=True)
    logits_out = Tensor(rng.standard_normal((3, K)), requires_grad=True)
    loss = loss_style_aggregation(F.softmax(logits_in), F.softmax(logits_out), 5.0)
    loss.backward()
    assert logits_in.grad is None
    assert np.abs(logits_out.grad).sum() > 0


def test_total_generator_loss():
    parts = {name: 1.0 for name in ('rec_rd', 'rec_rl', 'g_rd', 'in_rd', 'out_rd', 'sa_rl')}
    assert loss_total_generator(parts, LossWeights()) == pytest.approx(2.35, abs=1e-12)
    assert loss_total_generator({k: 0.0 for k in parts}, LossWeights()) == 0.0
    off = LossWeights(lambda_adv=0.0, lambda_sty_rd=0.0, lambda_sty_rl=0.0)
    mixed = dict(parts, rec_rd=0.25, rec_rl=0.5, g_rd=-7.0)
    assert loss_total_generator(mixed, off) == 0.75
    with pytest.raises(ValidationError):
        loss_total_generator({'rec_rd': 1.0}, LossWeights())


def test_breakdown_record():
    parts = {'rec_rd': 0.5, 'rec_rl': 0.25, 'g_rd': 1.0, 'in_rd': 2.0, 'out_rd': 2.0,
             'w_rl': 1.5, 'er_rl': 0.5, 'sa_rl': 2.0}
    breakdown = LossBreakdown.from_parts(parts, LossWeights(), discriminator=1.75)
    assert breakdown.L_D == 1.75
    assert breakdown.L_SA_rl == breakdown.L_W_rl + breakdown.L_ER_rl
    assert breakdown.L_G == pytest.approx(0.75 + 0.1 + 0.4 + 0.1, rel=1e-12)
    record = breakdown.to_json(step=3)
    assert '"step": 3' in record and '"L_G"' in record


# ---------------------------------------------------------------- gradients

def loss_graph(shapes, fn, seed=0, low=-2.0, high=2.0):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for name, shape in shapes.items():
        store.add(name, rng.uniform(low, high, size=shape))
    return Graph(lambda params, inputs: {'loss': fn(params)}, store)


def assert_loss_grads_match(graph, select=None):
    report = grad_check(graph, 'loss', {}, step=1e-5, select=select)
    assert report.checked > 0
    assert report.max_rel_error < 1e-4, report.worst
    return report


def test_hinge_gradients():
    assert_loss_grads_match(loss_graph({'s_rl': (6,), 's_rd': (6,)},
                                       lambda p: loss_discriminator(p['s_rl'], p['s_rd'])))
    assert_loss_grads_match(loss_graph({'s_rd': (5,)}, lambda p: loss_adv_generator(p['s_rd'])))


def test_reconstruction_gradients(rng):
    target = rng.random((2, 3, 4, 4))
    assert_loss_grads_match(loss_graph({'x': (2, 3, 4, 4)},
                                       lambda p: loss_reconstruction(p['x'], target), low=0.0, high=1.0))


@pytest.mark.parametrize('label', [0, 4, 9])
def test_style_cross_entropy_gradients(label):
    graph = loss_graph({'logits': (3, K)},
                       lambda p: loss_style_ce(F.softmax(p['logits']), np.tile(one_hot(label), (3, 1))))
    assert_loss_grads_match(graph)


def test_style_cross_entropy_gradients_on_soft_targets(rng):
    target = rng.dirichlet(np.ones(K), size=3)
    graph = loss_graph({'logits': (3, K)}, lambda p: loss_style_ce(F.softmax(p['logits']), target))
    assert_loss_grads_match(graph)


@pytest.mark.parametrize('loss_fn', [
    loss_weighted_cls,
    lambda p_in, p_out: loss_entropy_reduction(p_in, p_out, 1.0),
    lambda p_in, p_out: loss_style_aggregation(p_in, p_out, 1.0),
])
def test_style_aggregation_gradients_flow_to_p_out_only(loss_fn):
    graph = loss_graph({'z_in': (4, K), 'z_out': (4, K)},
                       lambda p: loss_fn(F.softmax(p['z_in']), F.softmax(p['z_out'])), seed=1)
    assert_loss_grads_match(graph, select={'z_out': np.arange(4 * K)})

    # P^in still moves the loss, but the analytic gradient is cut
    cut = grad_check(graph, 'loss', {}, step=1e-5, select={'z_in': np.arange(4 * K)})
    assert np.all(cut.analytic['z_in'] == 0.0)
    assert np.abs(np.nan_to_num(cut.numeric['z_in'])).max() > 1e-6
