"""
Composite Controller
Foreground exchange inside a scene group, mixed style labels, and dataset manifests.
"""
import json
import logging
import os

import numpy as np
from PIL import Image

from errors import DatasetError, ValidationError
from models.sample import HarmonySample
from models.style import K, one_hot, validate_label

logger = logging.getLogger(__name__)

MAX_PAIRS = K * (K - 1)
ORDERED_PAIRS = [(i, j) for i in range(K) for j in range(K) if i != j]


def foreground_ratio(mask):
    """sum(mask) / (H * W)"""
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValidationError('foreground_ratio: mask is not binary')
    h, w = mask.shape[-2:]
    return float(mask.sum()) / float(h * w)


def mix_style_labels(y_fg, y_bg, r):
    """r * y_fg + (1 - r) * y_bg; the boundaries return the inputs unchanged"""
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f'mix_style_labels: r={r} outside [0, 1]')
    y_fg, y_bg = validate_label(y_fg), validate_label(y_bg)
    if r == 0.0:
        return y_bg.copy()
    if r == 1.0:
        return y_fg.copy()
    return r * y_fg + (1.0 - r) * y_bg


def _group_label(group, view):
    if group.family != 'rendered':
        return None
    return one_hot(group.style_ids[view].index)


def exchange(group, i, j, r=None):
    """Composite I_{j->i}: foreground of view i on the background of view j, ground truth view j"""
    if i == j:
        raise ValidationError(f'exchange: views must differ, got i=j={i}')
    if not (0 <= i < K and 0 <= j < K):
        raise ValidationError(f'exchange: views ({i}, {j}) outside [0, {K - 1}]')
    r = foreground_ratio(group.mask) if r is None else r
    if r <= 0.0:
        raise ValidationError(f'exchange: scene {group.scene_id} has an empty mask')
    fg, bg = group.images[i], group.images[j]
    composite = np.where(group.mask.astype(bool), fg, bg)
    y_i, y_j = _group_label(group, i), _group_label(group, j)
    labelled = y_i is not None
    return HarmonySample(
        composite=composite, ground_truth=bg, mask=group.mask,
        domain=group.family, fg_ratio=r, scene_id=group.scene_id, pair=(i, j),
        composite_label=mix_style_labels(y_i, y_j, r) if labelled else None,
        gt_label=y_j if labelled else None,
    )


def make_pair(group, i, j):
    """The two symmetric exchanges (I_{j->i}, I_{i->j})"""
    r = foreground_ratio(group.mask)
    return exchange(group, i, j, r), exchange(group, j, i, r)


def build_dataset(groups, pairs_per_group, seed, split='train'):
    """pairs_per_group ordered exchanges per group, sampled without replacement"""
    if not 1 <= pairs_per_group <= MAX_PAIRS:
        raise ValidationError(f'pairs_per_group must lie in [1, {MAX_PAIRS}], got {pairs_per_group}')
    samples = []
    for group in groups:
        rng = np.random.default_rng([int(seed), int(group.scene_id)])
        chosen = rng.choice(MAX_PAIRS, size=pairs_per_group, replace=False)
        r = foreground_ratio(group.mask)
        for index in chosen:
            sample = exchange(group, *ORDERED_PAIRS[int(index)], r)
            sample.split = split
            samples.append(sample)
    logger.info('built %d %s samples from %d groups', len(samples), split, len(groups))
    return samples


def split_groups(groups, test_scenes):
    """Scene-granular split: the last test_scenes groups (by scene id) are held out"""
    if not 0 <= test_scenes < len(groups):
        raise ValidationError(f'test_scenes must lie in [0, {len(groups) - 1}], got {test_scenes}')
    ordered = sorted(groups, key=lambda g: g.scene_id)
    cut = len(ordered) - test_scenes
    return ordered[:cut], ordered[cut:]


def split_novel(train_groups, novel_scenes):
    """Reserve the last novel_scenes training groups as real data only the upper bound sees"""
    if not 0 <= novel_scenes < len(train_groups):
        raise ValidationError(f'novel_scenes must lie in [0, {len(train_groups) - 1}], got {novel_scenes}')
    return split_groups(train_groups, novel_scenes)


# ---------------------------------------------------------------- manifests

def _png(array):
    array = np.asarray(array)
    if array.dtype != np.uint8:
        array = np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(array.transpose(1, 2, 0)), mode='RGB')


def write_dataset(samples, out_dir, corpus_root, manifest='dataset.json'):
    """Write composites as PNG and the manifest; ground truths and masks point into the corpus"""
    composites = os.path.join(out_dir, 'composites')
    os.makedirs(composites, exist_ok=True)
    records = []
    for sample in samples:
        i, j = sample.pair
        scene_dir = os.path.join(corpus_root, sample.domain, 'scenes', f'{sample.scene_id:05d}')
        view = 'style' if sample.domain == 'rendered' else 'view'
        composite_path = os.path.join(composites, f'{sample.sample_id}.png')
        _png(sample.composite).save(composite_path)
        record = {
            'composite_path': os.path.relpath(composite_path, out_dir),
            'gt_path': os.path.relpath(os.path.join(scene_dir, f'{view}_{j}.png'), out_dir),
            'mask_path': os.path.relpath(os.path.join(scene_dir, 'mask.png'), out_dir),
            'domain': sample.domain,
            'r': sample.fg_ratio,
            'scene_id': sample.scene_id,
            'pair': [i, j],
            'split': sample.split,
        }
        if sample.composite_label is not None:
            record['composite_label'] = sample.composite_label.tolist()
            record['gt_label'] = sample.gt_label.tolist()
        records.append(record)
    path = os.path.join(out_dir, manifest)
    with open(path, 'w') as fh:
        json.dump(records, fh, indent=1)
    return path


class _ImageCache:
    """Ground truths and masks are shared by many records; read each file once"""

    def __init__(self):
        self.images = {}

    def read(self, path, gray=False):
        if path not in self.images:
            if not os.path.isfile(path):
                raise DatasetError(f'manifest references missing file {path}')
            data = np.asarray(Image.open(path))
            self.images[path] = (data > 127).astype(np.float64)[None] if gray else data.transpose(2, 0, 1)
        return self.images[path]


def load_dataset(path, split=None, domain=None):
    """HarmonySamples (uint8 images) from a manifest, optionally filtered by split and domain"""
    if not os.path.isfile(path):
        raise DatasetError(f'no dataset manifest at {path}')
    with open(path) as fh:
        records = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    cache = _ImageCache()
    samples = []
    for record in records:
        if split is not None and record.get('split', 'train') != split:
            continue
        if domain is not None and record['domain'] != domain:
            continue
        composite_path = os.path.join(base, record['composite_path'])
        if not os.path.isfile(composite_path):
            raise DatasetError(f'manifest references missing file {composite_path}')
        composite = np.asarray(Image.open(composite_path)).transpose(2, 0, 1)
        ground_truth = cache.read(os.path.join(base, record['gt_path']))
        mask = cache.read(os.path.join(base, record['mask_path']), gray=True)
        if composite.shape != ground_truth.shape or mask.shape[1:] != composite.shape[1:]:
            raise DatasetError(f'scene {record["scene_id"]}: image shapes disagree in {path}')
        label = record.get('composite_label')
        samples.append(HarmonySample(
            composite=composite, ground_truth=ground_truth, mask=mask,
            domain=record['domain'], fg_ratio=float(record['r']), scene_id=int(record['scene_id']),
            pair=tuple(record['pair']),
            composite_label=np.asarray(label, dtype=np.float64) if label is not None else None,
            gt_label=np.asarray(record['gt_label'], dtype=np.float64) if label is not None else None,
            split=record.get('split', 'train'),
        ))
    return samples
