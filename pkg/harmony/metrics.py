"""
Metrics
MSE / fMSE / PSNR on the 0-255 scale, bilinear parity resampling, and Bradley-Terry
strengths from pairwise preference tallies.
"""
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from errors import RankingError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

PIXEL_MAX = 255.0
PSNR_CAP = 100.0
PARITY_SIZE = 256
# Added to both directions of every compared pair when the plain MLE does not exist
PSEUDO_COUNT = 0.5


@dataclass
class EvalRecord:
    sample_id: str
    domain: str
    mse: float
    fmse: float
    psnr: float
    entropy_in: float = float('nan')
    entropy_out: float = float('nan')
    style_out: int = -1
    style_match: float = float('nan')


@dataclass
class PairwiseTally:
    """wins[a][b] counts judgments preferring method a over method b"""
    methods: list
    wins: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.methods)
        self.wins = np.zeros((n, n), dtype=np.int64) if self.wins is None else np.asarray(self.wins)
        if self.wins.shape != (n, n):
            raise ValidationError(f'tally must be {n}x{n}, got {self.wins.shape}')
        if np.any(self.wins < 0) or np.any(np.diag(self.wins) != 0):
            raise ValidationError('tally counts must be non-negative with a zero diagonal')
        if not np.all(np.equal(np.mod(self.wins, 1), 0)):
            raise ValidationError('tally counts must be integers')
        self.wins = self.wins.astype(np.int64)

    @property
    def n_methods(self):
        return len(self.methods)


def _same_shape(op, pred, gt):
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f'{op}: {pred.shape} vs {gt.shape}')
    return pred, gt


def _region(op, pred, mask):
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValidationError(f'{op}: mask is not binary')
    if mask.ndim == pred.ndim - 1:
        mask = mask[None]
    return np.broadcast_to(mask.astype(bool), pred.shape)


def mse(pred, gt):
    """Mean squared error over every pixel-channel"""
    pred, gt = _same_shape('mse', pred, gt)
    return float(np.mean((pred - gt) ** 2))


def fmse(pred, gt, mask):
    """Squared error averaged over foreground pixel-channels only"""
    pred, gt = _same_shape('fmse', pred, gt)
    inside = _region('fmse', pred, mask)
    if not inside.any():
        raise ValidationError('fmse: empty mask')
    return float(np.mean(((pred - gt) ** 2)[inside]))


def bmse(pred, gt, mask):
    """Squared error averaged over background pixel-channels; 0 when there is none"""
    pred, gt = _same_shape('bmse', pred, gt)
    outside = ~_region('bmse', pred, mask)
    if not outside.any():
        return 0.0
    return float(np.mean(((pred - gt) ** 2)[outside]))


def psnr_from_mse(value):
    if value < PIXEL_MAX ** 2 * 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(PIXEL_MAX ** 2 / value))


def psnr(pred, gt):
    return psnr_from_mse(mse(pred, gt))


def upsample_bilinear(image, size=PARITY_SIZE):
    """Half-pixel-centred bilinear resize of a (C, H, W) array to (C, size, size)"""
    image = np.asarray(image, dtype=np.float64)
    _, h, w = image.shape

    def axis_weights(n_in):
        pos = (np.arange(size) + 0.5) * n_in / size - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis_weights(h)
    x0, x1, wx = axis_weights(w)
    rows = image[:, y0, :] * (1 - wy)[None, :, None] + image[:, y1, :] * wy[None, :, None]
    return rows[:, :, x0] * (1 - wx)[None, None, :] + rows[:, :, x1] * wx[None, None, :]


def upsample_mask(mask, size=PARITY_SIZE):
    """Nearest-neighbour resize keeping the mask binary"""
    mask = np.asarray(mask)
    h, w = mask.shape[-2:]
    ys = np.minimum((np.arange(size) * h) // size, h - 1)
    xs = np.minimum((np.arange(size) * w) // size, w - 1)
    return mask[..., ys[:, None], xs[None, :]]


def evaluate_pair(sample_id, domain, harmonized, ground_truth, mask, parity=False):
    """EvalRecord from [0, 1] images, measured on the 0-255 scale"""
    pred = np.asarray(harmonized, dtype=np.float64) * PIXEL_MAX
    gt = np.asarray(ground_truth, dtype=np.float64) * PIXEL_MAX
    mask = np.asarray(mask)
    if parity:
        pred, gt, mask = upsample_bilinear(pred), upsample_bilinear(gt), upsample_mask(mask)
    value = mse(pred, gt)
    return EvalRecord(sample_id=sample_id, domain=domain, mse=value,
                      fmse=fmse(pred, gt, mask), psnr=psnr_from_mse(value))


# ---------------------------------------------------------------- Bradley-Terry

def _connected(matches):
    n = len(matches)
    seen, frontier = {0}, [0]
    while frontier:
        a = frontier.pop()
        for b in np.flatnonzero(matches[a]):
            if b not in seen:
                seen.add(int(b))
                frontier.append(int(b))
    return len(seen) == n


def bt_scores(tally, iterations=10_000, tolerance=1e-10):
    """Maximum-likelihood Bradley-Terry log-strengths by MM fixed-point iteration.

    Returns a zero-mean vector of log-strengths; exp(s_a - s_b) is the strength ratio.
    When a method never wins or never loses the MLE runs off to infinity; those tallies
    get PSEUDO_COUNT extra wins in both directions of every compared pair, which keeps
    the ordering and yields finite strengths. Other tallies are fitted unchanged.
    """
    wins = tally.wins.astype(np.float64)
    matches = wins + wins.T
    if not matches.any():
        raise RankingError('tally has no judgments')
    compared = matches > 0
    if not _connected(compared):
        raise RankingError('comparison graph is disconnected')
    won = wins.sum(axis=1)
    lost = wins.sum(axis=0)
    if np.any(won == 0) or np.any(lost == 0):
        extreme = [tally.methods[i] for i in np.flatnonzero((won == 0) | (lost == 0))]
        logger.warning('smoothing tally with %.1f pseudo-wins per pair; unbeaten or winless: %s',
                       PSEUDO_COUNT, ', '.join(extreme))
        wins = wins + PSEUDO_COUNT * compared
        matches = wins + wins.T
        won = wins.sum(axis=1)

    p = np.ones(tally.n_methods)
    for _ in range(iterations):
        denom = (matches / (p[:, None] + p[None, :])).sum(axis=1)
        p_new = won / denom
        p_new /= np.exp(np.mean(np.log(p_new)))
        change = np.max(np.abs(np.log(p_new) - np.log(p)))
        p = p_new
        if change < tolerance:
            break
    log_p = np.log(p)
    return log_p - log_p.mean()


def simulate_tally(strengths, draws_per_pair, rng, methods=None):
    """Pairwise judgments drawn from known strengths, for recovery checks"""
    strengths = np.asarray(strengths, dtype=np.float64)
    n = len(strengths)
    wins = np.zeros((n, n), dtype=np.int64)
    for a, b in itertools.combinations(range(n), 2):
        a_wins = rng.binomial(draws_per_pair, strengths[a] / (strengths[a] + strengths[b]))
        wins[a, b] += a_wins
        wins[b, a] += draws_per_pair - a_wins
    return PairwiseTally(methods or [f'm{i}' for i in range(n)], wins)


def tally_from_records(records_by_method):
    """Automated judge: on each shared sample the lower fMSE wins; exact ties are skipped"""
    methods = list(records_by_method)
    by_id = [{r.sample_id: r.fmse for r in records_by_method[m]} for m in methods]
    shared = set.intersection(*(set(d) for d in by_id)) if by_id else set()
    if not shared:
        raise RankingError('methods share no evaluated samples')
    tally = PairwiseTally(methods)
    for sample_id in sorted(shared):
        for a, b in itertools.combinations(range(len(methods)), 2):
            fa, fb = by_id[a][sample_id], by_id[b][sample_id]
            if fa < fb:
                tally.wins[a, b] += 1
            elif fb < fa:
                tally.wins[b, a] += 1
    return tally
