"""
Parameters and Layers
Named parameter store with batch-norm buffers, and the conv / batch-norm layers built on it.
"""
from collections import OrderedDict

import numpy as np

from errors import CheckpointError, ValidationError
from diffcore import functional as F
from diffcore.tensor import Tensor


def uniform_init(rng, shape, fan_in):
    """Centered uniform with variance 1/fan_in (gain 1)"""
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParameterStore:
    """Ordered trainable tensors plus non-trainable buffers, addressed by dotted names"""

    def __init__(self):
        self.params = OrderedDict()
        self.buffers = OrderedDict()

    def add(self, name, value):
        if name in self.params:
            raise ValidationError(f'parameter "{name}" registered twice')
        tensor = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = tensor
        return tensor

    def add_buffer(self, name, value):
        self.buffers[name] = np.array(value, dtype=np.float64)
        return self.buffers[name]

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def select(self, prefixes):
        """Parameters whose names start with any of the given prefixes"""
        return OrderedDict((k, v) for k, v in self.params.items() if k.startswith(tuple(prefixes)))

    def count(self, prefixes=None):
        chosen = self.params if prefixes is None else self.select(prefixes)
        return int(np.sum([p.size for p in chosen.values()], dtype=np.int64))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self):
        """Copies of every parameter and buffer, in registration order"""
        state = OrderedDict((k, v.data.copy()) for k, v in self.params.items())
        state.update((k, v.copy()) for k, v in self.buffers.items())
        return state

    def load_state(self, state):
        expected = list(self.params) + list(self.buffers)
        missing = [k for k in expected if k not in state]
        if missing:
            raise CheckpointError(f'checkpoint lacks {len(missing)} tensors', details=missing[:5])
        for name in expected:
            target = self.params[name].data if name in self.params else self.buffers[name]
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise CheckpointError(f'"{name}" has shape {value.shape}, expected {target.shape}')
            # In place so layers holding references see the new values
            target[...] = value


class Conv2d:
    """Square-kernel convolution with zero padding that preserves extent at stride 1"""

    def __init__(self, store, name, in_channels, out_channels, rng, kernel=3, stride=1, zero=False):
        shape = (out_channels, in_channels, kernel, kernel)
        fan_in = in_channels * kernel * kernel
        init = np.zeros(shape) if zero else uniform_init(rng, shape, fan_in)
        self.weight = store.add(f'{name}.weight', init)
        self.bias = store.add(f'{name}.bias', np.zeros(out_channels))
        self.stride = stride
        self.padding = kernel // 2

    def __call__(self, x, frozen=False):
        weight, bias = self.weight, self.bias
        if frozen:
            weight, bias = F.detach(weight), F.detach(bias)
        return F.conv2d(x, weight, bias, stride=self.stride, padding=self.padding)


class BatchNorm2d:
    """Per-channel batch normalization (momentum 0.1, eps 1e-5)"""

    momentum = 0.1
    eps = 1e-5

    def __init__(self, store, name, channels):
        self.gamma = store.add(f'{name}.gamma', np.ones(channels))
        self.beta = store.add(f'{name}.beta', np.zeros(channels))
        self.running_mean = store.add_buffer(f'{name}.running_mean', np.zeros(channels))
        self.running_var = store.add_buffer(f'{name}.running_var', np.ones(channels))

    def __call__(self, x, training, frozen=False):
        gamma, beta = self.gamma, self.beta
        if frozen:
            gamma, beta = F.detach(gamma), F.detach(beta)
        return F.batch_norm(x, gamma, beta, self.running_mean, self.running_var,
                            training=training, update_stats=not frozen,
                            momentum=self.momentum, eps=self.eps)
