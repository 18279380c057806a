"""
Harmony Package
The CharmNet model family, its training objectives and evaluation measures.
"""

from .charmnet import (CharmNet, GeneratorOutput, ParamPartition, classifier_forward,
                       discriminator_forward, generator_forward, load_net, param_partition, save_net)

__all__ = [
    'CharmNet', 'GeneratorOutput', 'ParamPartition', 'classifier_forward',
    'discriminator_forward', 'generator_forward', 'load_net', 'param_partition', 'save_net',
]
