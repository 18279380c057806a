"""
Sample Model
One harmonization record: composite, ground truth, mask, domain and optional style labels.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ValidationError

DOMAINS = ('rendered', 'real')


def to_unit(image):
    """uint8 images become float64 in [0, 1]; float images pass through as float64"""
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return np.asarray(image, dtype=np.float64)


@dataclass
class HarmonySample:
    composite: np.ndarray
    ground_truth: np.ndarray
    mask: np.ndarray
    domain: str
    fg_ratio: float
    scene_id: int
    pair: tuple
    composite_label: Optional[np.ndarray] = None
    gt_label: Optional[np.ndarray] = None
    split: str = 'train'

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValidationError(f'unknown domain "{self.domain}"')
        labelled = self.composite_label is not None and self.gt_label is not None
        if labelled != (self.domain == 'rendered'):
            raise ValidationError(f'{self.sample_id}: labels must be present iff the domain is rendered')
        if not 0.0 < self.fg_ratio < 1.0:
            raise ValidationError(f'{self.sample_id}: foreground ratio {self.fg_ratio} outside (0, 1)')

    @property
    def sample_id(self):
        i, j = self.pair
        return f'{self.domain}-{self.scene_id:05d}-{i}-{j}'
