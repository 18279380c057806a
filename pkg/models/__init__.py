"""
Models Package
Value types for styles, scenes, harmonization samples and run settings.
"""

from .style import K, STYLES, StyleId, StyleParams
from .scene import SceneGroup, SceneSpec
from .sample import HarmonySample
from .settings import ExperimentConfig, LossFlags, LossWeights, ModelConfig, TrainConfig

__all__ = [
    'K', 'STYLES', 'StyleId', 'StyleParams',
    'SceneGroup', 'SceneSpec',
    'HarmonySample',
    'ExperimentConfig', 'LossFlags', 'LossWeights', 'ModelConfig', 'TrainConfig',
]
