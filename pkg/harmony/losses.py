"""
Losses
Hinge adversarial pair, L1 reconstruction, style cross-entropy, the style aggregation
terms (weighted classification + entropy reduction) and the generator total.
"""
import json
from dataclasses import asdict, dataclass

import numpy as np

from errors import ShapeError, ValidationError
from diffcore import functional as F
from diffcore.tensor import Tensor, as_tensor
from models.style import K

PROB_TOLERANCE = 1e-9
GENERATOR_PARTS = ('rec_rd', 'rec_rl', 'g_rd', 'in_rd', 'out_rd', 'sa_rl')


def _scores(scores, name):
    scores = as_tensor(scores)
    if scores.size == 0:
        raise ValidationError(f'{name}: empty batch')
    return F.reshape(scores, (scores.size,))


def _distribution(p, name):
    p = as_tensor(p)
    if p.shape[-1] != K:
        raise ShapeError(f'{name}: expected {K} classes, got shape {p.shape}')
    if np.any(p.data < 0) or np.any(np.abs(p.data.sum(axis=-1) - 1.0) > PROB_TOLERANCE):
        raise ValidationError(f'{name}: not a probability distribution')
    if p.ndim == 1:
        p = F.reshape(p, (1, K))
    return p


def _batch_mean(per_sample):
    return F.mean(per_sample)


def entropy(p):
    """Per-sample Shannon entropy (natural log, floored) of a (N, K) distribution tensor"""
    p = as_tensor(p)
    return F.neg(F.sum(F.mul(p, F.log(p)), axis=-1))


# ---------------------------------------------------------------- adversarial

def loss_discriminator(score_real, score_rendered):
    """mean(max(0, 1 - D(f_in^rl))) + mean(max(0, 1 + D(f_in^rd)))"""
    s_rl = _scores(score_real, 'loss_discriminator')
    s_rd = _scores(score_rendered, 'loss_discriminator')
    return F.add(F.mean(F.relu(F.sub(1.0, s_rl))), F.mean(F.relu(F.add(1.0, s_rd))))


def loss_adv_generator(score_rendered):
    """-mean(D(f_in^rd))"""
    return F.neg(F.mean(_scores(score_rendered, 'loss_adv_generator')))


# ---------------------------------------------------------------- reconstruction

def loss_reconstruction(harmonized, ground_truth):
    """Mean absolute error over all elements"""
    harmonized, ground_truth = as_tensor(harmonized), as_tensor(ground_truth)
    if harmonized.shape != ground_truth.shape:
        raise ShapeError(f'loss_reconstruction: {harmonized.shape} vs {ground_truth.shape}')
    return F.mean(F.abs(F.sub(harmonized, ground_truth)))


# ---------------------------------------------------------------- style terms

def loss_style_ce(pred, target):
    """-sum_k target_k log(pred_k), averaged over the batch"""
    pred = _distribution(pred, 'loss_style_ce pred')
    target = _distribution(target, 'loss_style_ce target')
    if pred.shape != target.shape:
        raise ShapeError(f'loss_style_ce: pred {pred.shape} vs target {target.shape}')
    return _batch_mean(F.neg(F.sum(F.mul(target, F.log(pred)), axis=-1)))


def loss_weighted_cls(p_in, p_out):
    """Cross-entropy of P^out against P^in; P^in is a constant target"""
    return loss_style_ce(p_out, F.detach(_distribution(p_in, 'loss_weighted_cls p_in')))


def loss_entropy_reduction(p_in, p_out, m):
    """max(0, m - H(P^in) + H(P^out)) per sample, batch mean; H(P^in) is a constant"""
    if m < 0:
        raise ValidationError(f'margin must be non-negative, got {m}')
    p_in = F.detach(_distribution(p_in, 'loss_entropy_reduction p_in'))
    p_out = _distribution(p_out, 'loss_entropy_reduction p_out')
    if p_in.shape != p_out.shape:
        raise ShapeError(f'loss_entropy_reduction: {p_in.shape} vs {p_out.shape}')
    gap = F.add(F.sub(entropy(p_out), entropy(p_in)), float(m))
    return _batch_mean(F.relu(gap))


def loss_style_aggregation(p_in, p_out, m):
    return F.add(loss_weighted_cls(p_in, p_out), loss_entropy_reduction(p_in, p_out, m))


# ---------------------------------------------------------------- total

def loss_total_generator(parts, weights):
    """rec_rd + rec_rl + l_adv g_rd + l_sty_rd (in_rd + out_rd) + l_sty_rl sa_rl"""
    missing = [name for name in GENERATOR_PARTS if name not in parts]
    if missing:
        raise ValidationError(f'loss_total_generator: missing components {", ".join(missing)}')
    return (parts['rec_rd'] + parts['rec_rl']
            + weights.lambda_adv * parts['g_rd']
            + weights.lambda_sty_rd * (parts['in_rd'] + parts['out_rd'])
            + weights.lambda_sty_rl * parts['sa_rl'])


@dataclass
class LossBreakdown:
    """Scalar values of every loss for one training step"""
    L_D: float = 0.0
    L_G_rd: float = 0.0
    L_rec_rd: float = 0.0
    L_rec_rl: float = 0.0
    L_in_rd: float = 0.0
    L_out_rd: float = 0.0
    L_W_rl: float = 0.0
    L_ER_rl: float = 0.0
    L_SA_rl: float = 0.0
    L_G: float = 0.0

    @classmethod
    def from_parts(cls, parts, weights, discriminator=0.0):
        values = {k: (v.item() if isinstance(v, Tensor) else float(v)) for k, v in parts.items()}
        return cls(
            L_D=float(discriminator),
            L_G_rd=values['g_rd'],
            L_rec_rd=values['rec_rd'],
            L_rec_rl=values['rec_rl'],
            L_in_rd=values['in_rd'],
            L_out_rd=values['out_rd'],
            L_W_rl=values.get('w_rl', 0.0),
            L_ER_rl=values.get('er_rl', 0.0),
            L_SA_rl=values['sa_rl'],
            L_G=loss_total_generator(values, weights),
        )

    def to_dict(self):
        return asdict(self)

    def to_json(self, **extra):
        record = dict(extra)
        record.update(self.to_dict())
        return json.dumps(record, sort_keys=True)
