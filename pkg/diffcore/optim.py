"""
Optimizer
Adam with checkpointable state and the milestone learning-rate schedule.
"""
from collections import OrderedDict

import numpy as np

from errors import CheckpointError


def lr_at(epoch, initial, milestones, factor):
    """Initial rate divided by factor once per milestone already reached (0-based epochs)"""
    passed = sum(1 for m in milestones if epoch >= m)
    return initial / (factor ** passed)


class Adam:
    """Adam over a named parameter dict; parameters are updated in place"""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = OrderedDict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = OrderedDict((k, np.zeros_like(p.data)) for k, p in self.params.items())
        self.v = OrderedDict((k, np.zeros_like(p.data)) for k, p in self.params.items())

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self, prefix):
        arrays = OrderedDict()
        for name in self.params:
            arrays[f'{prefix}.m.{name}'] = self.m[name].copy()
            arrays[f'{prefix}.v.{name}'] = self.v[name].copy()
        return arrays, {'t': self.t, 'lr': self.lr}

    def load_state(self, prefix, arrays, meta):
        for name in self.params:
            for slot, target in (('m', self.m[name]), ('v', self.v[name])):
                key = f'{prefix}.{slot}.{name}'
                if key not in arrays or arrays[key].shape != target.shape:
                    raise CheckpointError(f'optimizer state "{key}" missing or mis-shaped')
                target[...] = arrays[key]
        self.t = int(meta['t'])
        self.lr = float(meta['lr'])
