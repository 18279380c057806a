"""
Differentiation Core
Reverse-mode tape, layer vocabulary, graphs, gradient checks, Adam and checkpoints.
"""

from .tensor import Tensor, as_tensor, record_patterns
from .layers import BatchNorm2d, Conv2d, ParameterStore
from .graph import Graph, evaluate, gradients, gradients_of
from .gradcheck import GradientReport, grad_check
from .optim import Adam, lr_at
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    'Tensor', 'as_tensor', 'record_patterns',
    'BatchNorm2d', 'Conv2d', 'ParameterStore',
    'Graph', 'evaluate', 'gradients', 'gradients_of',
    'GradientReport', 'grad_check',
    'Adam', 'lr_at',
    'load_checkpoint', 'save_checkpoint',
]
