"""
Layer Vocabulary
Differentiable operations on Tensors: arithmetic, reductions, activations, convolution,
normalization, pooling, resampling, softmax and the image blending select.
"""
import numpy as np

from errors import ShapeError, ValidationError
from diffcore.tensor import Tensor, as_tensor, make_node, note_pattern

LOG_FLOOR = 1e-12


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f'{op}: cannot broadcast {a.shape} with {b.shape}') from None


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('add', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), backward, 'add')


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('sub', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), backward, 'sub')


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('mul', a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_node(a.data * b.data, (a, b), backward, 'mul')


def neg(a):
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,), 'neg')


def scale(a, factor):
    """Multiply by a constant scalar"""
    a, factor = as_tensor(a), float(factor)
    return make_node(a.data * factor, (a,), lambda g: (g * factor,), 'scale')


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f'reshape: cannot view {a.shape} as {shape}') from None
    return make_node(out, (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f'concat: incompatible shapes {shapes} along axis {axis}') from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, tensors, backward, 'concat')


def detach(a):
    """Stop-gradient: same values, no tape"""
    a = as_tensor(a)
    return Tensor(a.data, op='detach')


# ---------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(out, (a,), backward, 'sum')


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return make_node(out, (a,), backward, 'mean')


# ---------------------------------------------------------------- pointwise non-linearities

def abs(a):
    a = as_tensor(a)
    sign = np.sign(a.data)
    note_pattern('abs', sign.astype(np.int8))
    return make_node(np.abs(a.data), (a,), lambda g: (g * sign,), 'abs')


def relu(a):
    a = as_tensor(a)
    active = a.data > 0
    note_pattern('relu', active)
    return make_node(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,), 'relu')


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    active = a.data > 0
    note_pattern('leaky_relu', active)
    factor = np.where(active, 1.0, slope)
    return make_node(a.data * factor, (a,), lambda g: (g * factor,), 'leaky_relu')


def clamp(a, low=0.0, high=1.0):
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    note_pattern('clamp', np.sign(a.data - low).astype(np.int8) + np.sign(a.data - high).astype(np.int8))
    return make_node(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), 'clamp')


def log(a, floor=LOG_FLOOR):
    """Natural log of max(a, floor); zero gradient where the floor is active"""
    a = as_tensor(a)
    live = a.data > floor
    note_pattern('log', live)
    safe = np.where(live, a.data, floor)
    return make_node(np.log(safe), (a,), lambda g: (np.where(live, g / safe, 0.0),), 'log')


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_node(s, (a,), backward, 'softmax')


def blend(mask, prediction, image):
    """Blending layer: prediction inside the mask, the input image outside, exactly"""
    mask, prediction, image = as_tensor(mask), as_tensor(prediction), as_tensor(image)
    if prediction.shape != image.shape:
        raise ShapeError(f'blend: prediction {prediction.shape} vs image {image.shape}')
    inside = np.broadcast_to(mask.data > 0.5, image.shape)
    out = np.where(inside, prediction.data, image.data)

    def backward(g):
        return None, np.where(inside, g, 0.0), np.where(inside, 0.0, g)

    return make_node(out, (mask, prediction, image), backward, 'blend')


# ---------------------------------------------------------------- spatial ops

def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation over NCHW input with zero padding"""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f'conv2d: expected NCHW input and OCKK kernel, got {x.shape} and {weight.shape}')
    n, c, h, w = x.shape
    o, c_w, kh, kw = weight.shape
    if c != c_w:
        raise ShapeError(f'conv2d: input has {c} channels, kernel expects {c_w}')
    if stride not in (1, 2):
        raise ValidationError(f'conv2d: stride must be 1 or 2, got {stride}')
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f'conv2d: input {x.shape} too small for kernel {weight.shape}')

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # im2col: one row per output pixel, built once and reused by the backward pass
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    w_mat = weight.data.reshape(o, c * kh * kw)
    out = (cols @ w_mat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError(f'conv2d: bias shape {bias.shape} does not match {o} output channels')
        out = out + bias.data.reshape(1, o, 1, 1)
        parents.append(bias)

    def backward(g):
        g_mat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (g_mat.T @ cols).reshape(weight.shape)
        gcols = (g_mat @ w_mat).reshape(n, ho, wo, c, kh, kw)
        gxp = np.zeros_like(xp)
        # col2im
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding:padding + h, padding:padding + w]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_node(np.ascontiguousarray(out), parents, backward, 'conv2d')


def upsample2x(x):
    """Nearest-neighbour upsampling by two in both spatial directions"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f'upsample2x: expected NCHW input, got {x.shape}')
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_node(out, (x,), backward, 'upsample2x')


def max_pool2d(x):
    """2x2 max-pooling with stride 2; a trailing odd row or column is dropped"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f'max_pool2d: expected NCHW input, got {x.shape}')
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise ShapeError(f'max_pool2d: input {x.shape} smaller than the 2x2 window')
    blocks = x.data[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    winner = blocks.argmax(axis=-1)
    note_pattern('max_pool2d', winner.astype(np.int8))
    out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    def backward(g):
        scattered = np.zeros((n, c, ho, wo, 4))
        np.put_along_axis(scattered, winner[..., None], g[..., None], axis=-1)
        scattered = scattered.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(x.data)
        gx[:, :, :2 * ho, :2 * wo] = scattered.reshape(n, c, 2 * ho, 2 * wo)
        return (gx,)

    return make_node(out, (x,), backward, 'max_pool2d')


def global_avg_pool(x):
    """Mean over the spatial axes: (N, C, H, W) -> (N, C)"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f'global_avg_pool: expected NCHW input, got {x.shape}')
    return mean(x, axis=(2, 3))


def batch_norm(x, gamma, beta, running_mean, running_var, training, update_stats=True,
               momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over (N, H, W).

    In training mode batch statistics are used and, when update_stats is set, the
    running buffers are updated in place with the unbiased batch variance. In
    evaluation mode the running buffers are used as constants.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4 or gamma.shape != (x.shape[1],):
        raise ShapeError(f'batch_norm: input {x.shape} does not match {gamma.shape[0]} channels')
    shape = (1, x.shape[1], 1, 1)
    g_, b_ = gamma.data.reshape(shape), beta.data.reshape(shape)

    if not training:
        inv = 1.0 / np.sqrt(running_var.reshape(shape) + eps)
        xhat = (x.data - running_mean.reshape(shape)) * inv

        def backward_eval(g):
            return g * g_ * inv, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

        return make_node(xhat * g_ + b_, (x, gamma, beta), backward_eval, 'batch_norm')

    count = x.data.size // x.shape[1]
    mu = x.data.mean(axis=(0, 2, 3), keepdims=True)
    var = x.data.var(axis=(0, 2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    if update_stats:
        unbiased = var.reshape(-1) * (count / max(count - 1, 1))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased

    def backward_train(g):
        gxhat = g * g_
        gx = inv * (gxhat - gxhat.mean(axis=(0, 2, 3), keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True))
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_node(xhat * g_ + b_, (x, gamma, beta), backward_train, 'batch_norm')
