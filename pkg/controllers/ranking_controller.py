"""
Ranking Controller
Bradley-Terry ranking of methods from a pairwise tally file or from evaluation reports.
"""
import json
import logging
import os

import numpy as np

from errors import DatasetError, ValidationError
from harmony.metrics import PairwiseTally, bt_scores, tally_from_records

logger = logging.getLogger(__name__)


def load_tally(path):
    """{"methods": [...], "wins": [[...], ...]} -> PairwiseTally"""
    if not os.path.isfile(path):
        raise DatasetError(f'no tally file at {path}')
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f'tally file {path} is not valid JSON', details=str(exc)) from None
    if not isinstance(payload, dict) or 'methods' not in payload or 'wins' not in payload:
        raise ValidationError(f'tally file {path} needs "methods" and "wins"')
    return PairwiseTally(list(payload['methods']), np.asarray(payload['wins']))


def tally_from_reports(reports):
    """Tally from {method: eval.csv path}; each shared sample is one judgment per method pair"""
    from controllers.train_controller import read_eval_csv
    if len(reports) < 2:
        raise ValidationError('ranking needs at least two methods')
    return tally_from_records({method: read_eval_csv(path) for method, path in reports.items()})


def rank(tally, iterations=10_000, tolerance=1e-10):
    """Methods sorted by descending B-T log-strength"""
    scores = bt_scores(tally, iterations=iterations, tolerance=tolerance)
    ranking = sorted(zip(tally.methods, scores.tolist(), tally.wins.sum(axis=1).tolist()),
                     key=lambda item: -item[1])
    logger.info('ranked %d methods over %d judgments', tally.n_methods, int(tally.wins.sum()))
    return [{'method': m, 'score': s, 'wins': int(w)} for m, s, w in ranking]
