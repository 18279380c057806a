"""
Scene Model
Procedural scene recipes and the group of K styled renders sharing one foreground mask.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ValidationError
from models.style import K

FAMILIES = ('rendered', 'real')
MIN_FG_RATIO = 0.02
MAX_FG_RATIO = 0.5


@dataclass(frozen=True)
class Blob:
    """Soft coloured Gaussian spot in the background"""
    cx: float
    cy: float
    sigma: float
    color: tuple
    amplitude: float


@dataclass(frozen=True)
class BackgroundRecipe:
    """Two-colour linear gradient plus blobs and a family-specific texture"""
    color0: tuple
    color1: tuple
    angle: float
    blobs: tuple
    texture_seed: int
    texture_amplitude: float
    texture_band: tuple


@dataclass(frozen=True)
class ForegroundRecipe:
    """One convex figure: an ellipse (radii) or a polygon (vertices), with base colour and shading"""
    kind: str
    center: tuple
    radii: tuple
    vertices: tuple
    color: tuple
    shade: float


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    scene_id: int
    family: str
    height: int
    width: int
    background: BackgroundRecipe
    foreground: ForegroundRecipe

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f'unknown scene family "{self.family}"')
        if self.height < 8 or self.width < 8:
            raise ValidationError(f'scene size {self.height}x{self.width} too small')
        if self.foreground.kind not in ('ellipse', 'polygon'):
            raise ValidationError(f'unknown foreground kind "{self.foreground.kind}"')


@dataclass
class SceneGroup:
    """K renders of one scene, one per style, sharing an exact binary mask.

    `images` is ordered by view; for the rendered family view k is style k. For the
    real-like family the view order is a seeded permutation and `style_ids` is only
    populated in memory right after synthesis (it is never written with the scene).
    """
    scene_id: int
    family: str
    images: list
    mask: np.ndarray
    style_ids: Optional[list] = None
    jitter_seed: int = 0

    def __post_init__(self):
        if len(self.images) != K:
            raise ValidationError(f'scene {self.scene_id}: expected {K} images, got {len(self.images)}')
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValidationError(f'scene {self.scene_id}: mask is not binary')
        if self.style_ids is not None and len({s.index for s in self.style_ids}) != K:
            raise ValidationError(f'scene {self.scene_id}: styles are not all distinct')

    @property
    def height(self):
        return self.mask.shape[-2]

    @property
    def width(self):
        return self.mask.shape[-1]
