"""
Tests for pixel metrics against brute-force loops, parity resampling and Bradley-Terry ranking.
"""
import math

import numpy as np
import pytest

from errors import RankingError, ShapeError, ValidationError
from harmony.metrics import (EvalRecord, PairwiseTally, bmse, bt_scores, evaluate_pair, fmse, mse,
                             psnr, psnr_from_mse, simulate_tally, tally_from_records,
                             upsample_bilinear, upsample_mask)


def random_pair(rng, size=16):
    pred = rng.uniform(0, 255, (3, size, size))
    gt = rng.uniform(0, 255, (3, size, size))
    mask = np.zeros((1, size, size))
    mask[0, 3:9, 2:12] = 1.0
    return pred, gt, mask


def loop_mse(pred, gt, mask=None, inside=True):
    total, count = 0.0, 0
    c, h, w = pred.shape
    for k in range(c):
        for y in range(h):
            for x in range(w):
                if mask is not None and bool(mask[0, y, x]) != inside:
                    continue
                total += (pred[k, y, x] - gt[k, y, x]) ** 2
                count += 1
    return total / count


def test_metrics_match_loop_oracles(rng):
    for _ in range(50):
        pred, gt, mask = random_pair(rng)
        assert mse(pred, gt) == pytest.approx(loop_mse(pred, gt), rel=1e-10)
        assert fmse(pred, gt, mask) == pytest.approx(loop_mse(pred, gt, mask), rel=1e-10)
        assert bmse(pred, gt, mask) == pytest.approx(loop_mse(pred, gt, mask, inside=False), rel=1e-10)
        expected_psnr = 10 * math.log10(255.0 ** 2 / loop_mse(pred, gt))
        assert psnr(pred, gt) == pytest.approx(expected_psnr, rel=1e-10)


def test_mse_decomposes_into_foreground_and_background(rng):
    pred, gt, mask = random_pair(rng)
    r = mask.mean()
    assert mse(pred, gt) == pytest.approx(r * fmse(pred, gt, mask) + (1 - r) * bmse(pred, gt, mask), rel=1e-12)


def test_dilution_when_only_the_foreground_differs(rng):
    _, gt, mask = random_pair(rng)
    pred = gt + 10.0 * mask
    assert fmse(pred, gt, mask) == pytest.approx(100.0)
    assert mse(pred, gt) == pytest.approx(100.0 * mask.mean())
    assert mse(gt + 10.0, gt) == pytest.approx(100.0)


def test_psnr_values():
    assert psnr_from_mse(1.0) == pytest.approx(48.1308, abs=1e-3)
    assert psnr_from_mse(255.0 ** 2) == 0.0
    image = np.ones((3, 4, 4))
    assert psnr(image, image) == 100.0
    assert psnr_from_mse(10.0) > psnr_from_mse(11.0)


def test_metric_errors():
    a = np.zeros((3, 4, 4))
    with pytest.raises(ShapeError):
        mse(a, np.zeros((3, 4, 5)))
    with pytest.raises(ValidationError):
        fmse(a, a, np.zeros((1, 4, 4)))
    with pytest.raises(ValidationError):
        fmse(a, a, np.full((1, 4, 4), 0.3))
    assert bmse(a, a + 1, np.ones((1, 4, 4))) == 0.0


def test_parity_resampling(rng):
    image = rng.random((3, 8, 8))
    big = upsample_bilinear(image, 32)
    assert big.shape == (3, 32, 32)
    np.testing.assert_allclose(upsample_bilinear(np.full((3, 8, 8), 0.4), 32), 0.4)
    mask = np.zeros((1, 8, 8))
    mask[0, 2:5, 3:6] = 1
    assert set(np.unique(upsample_mask(mask, 32))) <= {0.0, 1.0}
    assert upsample_mask(mask, 32).mean() == pytest.approx(mask.mean())


def test_evaluate_pair_uses_the_pixel_scale(rng):
    gt = rng.random((3, 8, 8))
    mask = np.zeros((1, 8, 8))
    mask[0, 2:6, 2:6] = 1
    pred = np.where(mask > 0, np.clip(gt + 0.1, 0, 1), gt)
    record = evaluate_pair('rendered-00000-0-1', 'rendered', pred, gt, mask)
    assert record.mse <= record.fmse
    assert record.mse == pytest.approx(mse(pred * 255, gt * 255))
    parity = evaluate_pair('rendered-00000-0-1', 'rendered', pred, gt, mask, parity=True)
    assert parity.fmse > 0


# ---------------------------------------------------------------- Bradley-Terry

def test_symmetric_tally_gives_equal_scores():
    scores = bt_scores(PairwiseTally(['a', 'b'], [[0, 2], [2, 0]]))
    np.testing.assert_allclose(scores, [0.0, 0.0], atol=1e-9)


def test_two_method_closed_form():
    scores = bt_scores(PairwiseTally(['a', 'b'], [[0, 3], [1, 0]]))
    assert math.exp(scores[0] - scores[1]) == pytest.approx(3.0, rel=1e-8)
    assert scores.sum() == pytest.approx(0.0, abs=1e-12)


def test_scaling_the_tally_keeps_the_scores():
    wins = np.array([[0, 5, 3], [2, 0, 4], [1, 3, 0]])
    a = bt_scores(PairwiseTally(['a', 'b', 'c'], wins))
    b = bt_scores(PairwiseTally(['a', 'b', 'c'], wins * 7))
    np.testing.assert_allclose(a, b, atol=1e-8)
    assert list(np.argsort(a)) == list(np.argsort(b))


def test_recovers_generating_ranking():
    rng = np.random.default_rng(2024)
    recovered = 0
    for _ in range(100):
        strengths = np.sort(rng.uniform(0.5, 4.0, size=5))
        for i in range(1, 5):
            strengths[i] = max(strengths[i], strengths[i - 1] * 1.4)
        tally = simulate_tally(strengths, 1000, rng)
        recovered += list(np.argsort(bt_scores(tally))) == [0, 1, 2, 3, 4]
    assert recovered >= 95


def test_unbeaten_method_gets_a_finite_top_score():
    # plain MLE diverges here; 40.5 vs 0.5 pseudo-smoothed wins gives a ratio of 81
    scores = bt_scores(PairwiseTally(['charmnet', 'composite'], [[0, 40], [0, 0]]))
    assert np.all(np.isfinite(scores))
    assert scores[0] > scores[1]
    assert math.exp(scores[0] - scores[1]) == pytest.approx(81.0, rel=1e-8)


def test_winless_method_in_a_larger_tally_ranks_last():
    wins = np.array([[0, 6, 9], [4, 0, 7], [0, 0, 0]])
    scores = bt_scores(PairwiseTally(['a', 'b', 'c'], wins))
    assert np.all(np.isfinite(scores))
    assert list(np.argsort(scores)) == [2, 1, 0]
    assert scores.sum() == pytest.approx(0.0, abs=1e-10)


def test_ranking_errors():
    with pytest.raises(RankingError):
        bt_scores(PairwiseTally(['a', 'b'], np.zeros((2, 2))))
    disconnected = np.zeros((4, 4))
    disconnected[0, 1] = disconnected[1, 0] = 2
    disconnected[2, 3] = disconnected[3, 2] = 2
    with pytest.raises(RankingError):
        bt_scores(PairwiseTally(list('abcd'), disconnected))
    with pytest.raises(ValidationError):
        PairwiseTally(['a', 'b'], [[1, 0], [0, 0]])


def test_tally_from_records():
    def records(values):
        return [EvalRecord(f'real-00000-0-{i + 1}', 'real', 0.0, v, 0.0) for i, v in enumerate(values)]

    tally = tally_from_records({'ours': records([1.0, 2.0, 5.0]), 'base': records([3.0, 2.0, 4.0])})
    assert tally.methods == ['ours', 'base']
    np.testing.assert_array_equal(tally.wins, [[0, 1], [1, 0]])
    with pytest.raises(RankingError):
        tally_from_records({'ours': records([1.0]), 'base': []})
