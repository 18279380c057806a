"""
Settings Model
Architecture, loss weighting, training and experiment settings as plain dataclasses.
"""
from dataclasses import dataclass, field

from errors import ValidationError
from models.style import K

DEPTH = 7
STRATEGIES = ('charmnet', 'fusion', 'real_only', 'two_stage', 'upper_bound')


@dataclass
class ModelConfig:
    l_enc: int = 4
    l_dec: int = 4
    channels: tuple = (16, 32, 32, 64, 64, 96, 96)
    height: int = 48
    width: int = 48
    k: int = K
    disc_channels: tuple = (64, 32)
    cls_channels: tuple = (64, 32, 16)
    zero_init_head: bool = False

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.disc_channels = tuple(int(c) for c in self.disc_channels)
        self.cls_channels = tuple(int(c) for c in self.cls_channels)
        if not (0 <= self.l_enc <= DEPTH and 0 <= self.l_dec <= DEPTH):
            raise ValidationError(f'split depths must lie in [0, {DEPTH}], got ({self.l_enc}, {self.l_dec})')
        if len(self.channels) != DEPTH or min(self.channels) < 1:
            raise ValidationError(f'channel plan needs {DEPTH} positive entries')
        # Four stride-2 encoder depths
        if self.height % 16 or self.width % 16:
            raise ValidationError(f'input size {self.height}x{self.width} must be divisible by 16')


@dataclass
class LossWeights:
    lambda_adv: float = 0.1
    lambda_sty_rd: float = 0.1
    lambda_sty_rl: float = 0.05
    margin: float = 1.0

    def __post_init__(self):
        for name in ('lambda_adv', 'lambda_sty_rd', 'lambda_sty_rl', 'margin'):
            if getattr(self, name) < 0:
                raise ValidationError(f'{name} must be non-negative')


@dataclass
class LossFlags:
    """Which optional generator losses are enabled (reconstruction is always on)"""
    adversarial: bool = True
    style_rd: bool = True
    weighted_cls: bool = True
    entropy_reduction: bool = True


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    milestones: tuple = (40, 50)
    decay_factor: float = 10.0
    seed: int = 0
    strategy: str = 'charmnet'
    rendered_fraction: float = 1.0
    sa_warmup_epochs: int = 0
    checkpoint_every: int = 10
    dataset: str = 'data/dataset.json'
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    flags: LossFlags = field(default_factory=LossFlags)

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError('epochs and batch_size must be positive')
        if self.lr <= 0 or self.decay_factor <= 0:
            raise ValidationError('learning rate and decay factor must be positive')
        if self.strategy not in STRATEGIES:
            raise ValidationError(f'unknown strategy "{self.strategy}"')
        if not 0.0 < self.rendered_fraction <= 1.0:
            raise ValidationError(f'rendered_fraction must lie in (0, 1], got {self.rendered_fraction}')


@dataclass
class CorpusSettings:
    scenes: int = 200
    real_scenes: int = 150
    size: int = 48
    seed: int = 7


@dataclass
class DatasetSettings:
    pairs_per_group: int = 4
    test_scenes: int = 30
    novel_scenes: int = 0
    seed: int = 7


@dataclass
class ExperimentConfig:
    """Everything one run needs; serializable to flat dotted keys"""
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = 'runs/default'
