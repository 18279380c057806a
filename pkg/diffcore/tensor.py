"""
Tensor and Reverse-Mode Tape
Float64 value carrier that records the operation producing it, and the backward sweep.
"""
from contextlib import contextmanager

import numpy as np

from errors import GraphError, ShapeError

DTYPE = np.float64

# Sentinel backward for operations that have no derivative
NONDIFF = object()

_pattern_log = None


@contextmanager
def record_patterns(log):
    """Collect the activation pattern of every kinked op evaluated inside the block"""
    global _pattern_log
    previous, _pattern_log = _pattern_log, log
    try:
        yield log
    finally:
        _pattern_log = previous


def note_pattern(op, pattern):
    """Called by non-smooth ops with the discrete branch each element took"""
    if _pattern_log is not None:
        _pattern_log.append((op, np.ascontiguousarray(pattern).tobytes()))


class Tensor:
    """N-dimensional array of float64 values with an optional gradient tape entry"""

    __slots__ = ('data', 'grad', 'requires_grad', 'name', 'op', 'parents', 'backward_fn')

    def __init__(self, data, requires_grad=False, name=None, op='leaf', parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn

    # Shape helpers
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f'{self.op}: item() needs a single element, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = self.name or self.op
        return f'Tensor({label}, shape={self.shape}, requires_grad={self.requires_grad})'

    # Arithmetic sugar, resolved lazily to keep this module free of op definitions
    def __add__(self, other):
        from diffcore import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from diffcore import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from diffcore import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from diffcore import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from diffcore import functional as F
        return F.neg(self)

    def __truediv__(self, other):
        from diffcore import functional as F
        if isinstance(other, Tensor):
            raise GraphError('division is only defined by a constant scalar')
        return F.scale(self, 1.0 / float(other))

    def backward(self):
        """Backpropagate from this scalar into every leaf that requires a gradient"""
        backward(self)


def as_tensor(value):
    """Wrap arrays and scalars as constant tensors; tensors pass through"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_node(data, parents, backward_fn, op):
    """Create an op result; the tape entry is kept only when a parent needs gradients"""
    if not any(p.requires_grad for p in parents):
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=tuple(parents), backward_fn=backward_fn)


def topological_order(root):
    """Nodes reachable from root, parents before children"""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root):
    """Accumulate d(root)/d(leaf) into leaf.grad for every leaf on the tape"""
    if root.data.size != 1:
        raise GraphError(f'loss node "{root.name or root.op}" is not scalar: shape {root.shape}')
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if node.backward_fn is NONDIFF:
            raise GraphError(f'non-differentiable node "{node.op}" on the active path')
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
