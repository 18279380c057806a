"""
CharmNet
Three-stage generator with domain-specific encoder/decoder branches around a shared trunk,
a blending layer, a feature-level domain discriminator and shared style classifiers.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from errors import ShapeError, ValidationError
from diffcore import functional as F
from diffcore.checkpoint import load_checkpoint, save_checkpoint
from diffcore.layers import BatchNorm2d, Conv2d, ParameterStore
from diffcore.tensor import as_tensor
from models.sample import DOMAINS
from models.settings import DEPTH, ModelConfig

logger = logging.getLogger(__name__)

BRANCH_PREFIX = {'rendered': 'rd', 'real': 'rl'}
MODES = ('train', 'eval')


@dataclass
class GeneratorOutput:
    harmonized: object
    f_in: object
    f_out: object
    raw: object


@dataclass
class ParamPartition:
    trunk_encoder: int
    trunk_decoder: int
    rendered: int
    real: int
    discriminator: int
    classifier_in: int
    classifier_out: int

    @property
    def trunk(self):
        return self.trunk_encoder + self.trunk_decoder

    @property
    def total(self):
        return (self.trunk + self.rendered + self.real + self.discriminator
                + self.classifier_in + self.classifier_out)


class ConvBlock:
    """Optional 2x upsample, 3x3 conv, optional batch-norm, then activation"""

    def __init__(self, store, name, c_in, c_out, rng, stride=1, upsample=False,
                 norm=True, activation='leaky', zero=False):
        self.conv = Conv2d(store, f'{name}.conv', c_in, c_out, rng, stride=stride, zero=zero)
        self.norm = BatchNorm2d(store, f'{name}.bn', c_out) if norm else None
        self.upsample = upsample
        self.activation = activation

    def __call__(self, x, training, frozen=False):
        if self.upsample:
            x = F.upsample2x(x)
        x = self.conv(x, frozen=frozen)
        if self.norm is not None:
            x = self.norm(x, training=training, frozen=frozen)
        if self.activation == 'leaky':
            return F.leaky_relu(x, 0.2)
        if self.activation == 'relu':
            return F.relu(x)
        return x


class CharmNet:
    """Generator, discriminator and classifiers over one ParameterStore.

    Parameter names are prefixed by owner: `enc_rd`/`enc_rl`/`dec_rd`/`dec_rl` for the
    domain branches, `trunk.enc`/`trunk.dec` for the shared stage, `disc`, `cls_in`
    and `cls_out`.
    """

    def __init__(self, config=None, seed=0):
        self.config = config or ModelConfig()
        self.seed = seed
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        cfg = self.config
        plan = (4,) + cfg.channels

        # Encoder depth d: plan[d-1] -> plan[d], stride 2 for the first four depths
        self.encoders = {}
        for domain in DOMAINS:
            self.encoders[domain] = [self._encoder_block(f'enc_{BRANCH_PREFIX[domain]}.d{d}', d, plan, rng)
                                     for d in range(1, cfg.l_enc + 1)]
        self.trunk_encoder = [self._encoder_block(f'trunk.enc.d{d}', d, plan, rng)
                              for d in range(cfg.l_enc + 1, DEPTH + 1)]

        # Decoder depth j mirrors encoder depth 8 - j
        shared_dec = DEPTH - cfg.l_dec
        self.trunk_decoder = [self._decoder_block(f'trunk.dec.d{j}', j, plan, rng)
                              for j in range(1, shared_dec + 1)]
        self.decoders = {}
        for domain in DOMAINS:
            self.decoders[domain] = [self._decoder_block(f'dec_{BRANCH_PREFIX[domain]}.d{j}', j, plan, rng)
                                     for j in range(shared_dec + 1, DEPTH + 1)]

        self.discriminator = self._head('disc', self._f_in_channels(), cfg.disc_channels, 1, rng, norm=False)
        self.classifiers = {
            'in': self._head('cls_in', self._f_in_channels(), cfg.cls_channels, cfg.k, rng, norm=True),
            'out': self._head('cls_out', self._f_out_channels(), cfg.cls_channels, cfg.k, rng, norm=True),
        }
        logger.debug('built CharmNet L=(%d, %d) with %d parameters', cfg.l_enc, cfg.l_dec, self.store.count())

    # ------------------------------------------------------------ construction helpers

    def _encoder_block(self, name, depth, plan, rng):
        stride = 2 if depth <= 4 else 1
        return ConvBlock(self.store, name, plan[depth - 1], plan[depth], rng, stride=stride, activation='leaky')

    def _decoder_block(self, name, j, plan, rng):
        mirror = DEPTH + 1 - j
        upsample = mirror <= 4
        if j == DEPTH:
            return ConvBlock(self.store, name, plan[1], 3, rng, upsample=upsample, norm=False,
                             activation=None, zero=self.config.zero_init_head)
        return ConvBlock(self.store, name, plan[mirror], plan[mirror - 1], rng, upsample=upsample,
                         activation='relu')

    def _head(self, name, c_in, hidden, c_out, rng, norm):
        blocks, c = [], c_in
        for i, width in enumerate(hidden):
            blocks.append(ConvBlock(self.store, f'{name}.c{i}', c, width, rng, norm=norm,
                                    activation='relu' if norm else 'leaky'))
            c = width
        blocks.append(ConvBlock(self.store, f'{name}.c{len(hidden)}', c, c_out, rng, norm=False, activation=None))
        return blocks

    def _f_in_channels(self):
        return 4 if self.config.l_enc == 0 else self.config.channels[self.config.l_enc - 1]

    def _f_out_channels(self):
        shared_dec = DEPTH - self.config.l_dec
        if shared_dec == 0:
            return self.config.channels[-1]
        if shared_dec == DEPTH:
            return 3
        return self.config.channels[DEPTH - shared_dec - 1]

    def skip_active(self, depth):
        """Encoder depth d feeds decoder depth 8 - d only when both sit in the shared trunk"""
        cfg = self.config
        return depth <= DEPTH - 1 and depth > cfg.l_enc and (DEPTH + 1 - depth) <= DEPTH - cfg.l_dec

    # ------------------------------------------------------------ state

    def parameters(self, prefixes=None):
        return self.store.params if prefixes is None else self.store.select(prefixes)

    def generator_parameters(self):
        return self.store.select(('enc_', 'dec_', 'trunk.'))

    def state(self):
        return self.store.state()

    def load_state(self, state):
        self.store.load_state(state)


# ---------------------------------------------------------------- operations

def _check_inputs(net, image, mask):
    image, mask = as_tensor(image), as_tensor(mask)
    if image.ndim == 3:
        image = F.reshape(image, (1,) + image.shape)
    if mask.ndim == 3:
        mask = F.reshape(mask, (1,) + mask.shape)
    cfg = net.config
    expected = (3, cfg.height, cfg.width)
    if image.ndim != 4 or image.shape[1:] != expected:
        raise ShapeError(f'generator input: image shape {image.shape} does not end with {expected}')
    if mask.shape != (image.shape[0], 1, cfg.height, cfg.width):
        raise ShapeError(f'generator input: mask shape {mask.shape} does not match image {image.shape}')
    if not np.all((mask.data == 0) | (mask.data == 1)):
        raise ValidationError('generator input: mask is not binary')
    return image, mask


def generator_forward(net, image, mask, domain, mode='train'):
    """Route (image, mask) through E^domain, the shared trunk and D^domain, then blend"""
    if domain not in DOMAINS:
        raise ValidationError(f'unknown domain "{domain}"')
    if mode not in MODES:
        raise ValidationError(f'unknown mode "{mode}"')
    training = mode == 'train'
    image, mask = _check_inputs(net, image, mask)

    x = F.concat([image, mask], axis=1)
    activations = {}
    depth = 0
    for block in net.encoders[domain] + net.trunk_encoder:
        depth += 1
        x = block(x, training)
        activations[depth] = x
        if depth == net.config.l_enc:
            f_in = x
    if net.config.l_enc == 0:
        f_in = F.concat([image, mask], axis=1)

    # Decoder depth j; y_0 is the bottleneck activation
    y = x
    shared_dec = DEPTH - net.config.l_dec
    f_out = y if shared_dec == 0 else None
    for j, block in enumerate(net.trunk_decoder + net.decoders[domain], start=1):
        mirror = DEPTH + 1 - j
        if j > 1 and net.skip_active(mirror):
            y = F.add(y, activations[mirror])
        y = block(y, training)
        if j == shared_dec:
            f_out = y

    raw = F.clamp(y, 0.0, 1.0)
    harmonized = F.blend(mask, raw, image)
    return GeneratorOutput(harmonized=harmonized, f_in=f_in, f_out=f_out, raw=raw)


def _run_head(blocks, f, training, frozen):
    x = as_tensor(f)
    if x.ndim == 3:
        x = F.reshape(x, (1,) + x.shape)
    for block in blocks[:-1]:
        x = block(x, training, frozen=frozen)
        if x.shape[2] >= 2 and x.shape[3] >= 2:
            x = F.max_pool2d(x)
    x = blocks[-1](x, training, frozen=frozen)
    return F.global_avg_pool(x)


def discriminator_forward(net, f_in, frozen=False):
    """One unbounded score per sample (hinge formulation, no output nonlinearity)"""
    f_in = as_tensor(f_in)
    expected = net._f_in_channels()
    if f_in.shape[-3] != expected:
        raise ShapeError(f'discriminator: feature has {f_in.shape[-3]} channels, expected {expected}')
    scores = _run_head(net.discriminator, f_in, training=True, frozen=frozen)
    return F.reshape(scores, (scores.shape[0],))


def classifier_forward(net, f, which, mode='train', frozen=False):
    """K-way style distribution from P^in (f_in) or P^out (f_out), shared by both domains"""
    if which not in net.classifiers:
        raise ValidationError(f'unknown classifier "{which}"')
    f = as_tensor(f)
    expected = net._f_in_channels() if which == 'in' else net._f_out_channels()
    if f.shape[-3] != expected:
        raise ShapeError(f'classifier {which}: feature has {f.shape[-3]} channels, expected {expected}')
    logits = _run_head(net.classifiers[which], f, training=mode == 'train', frozen=frozen)
    return F.softmax(logits, axis=-1)


def param_partition(net):
    store = net.store
    return ParamPartition(
        trunk_encoder=store.count(('trunk.enc.',)),
        trunk_decoder=store.count(('trunk.dec.',)),
        rendered=store.count(('enc_rd.', 'dec_rd.')),
        real=store.count(('enc_rl.', 'dec_rl.')),
        discriminator=store.count(('disc.',)),
        classifier_in=store.count(('cls_in.',)),
        classifier_out=store.count(('cls_out.',)),
    )


# ---------------------------------------------------------------- persistence

def save_net(path, net, extra_arrays=None, meta=None):
    """Checkpoint parameters and buffers; the manifest records the ModelConfig"""
    arrays = net.state()
    if extra_arrays:
        arrays.update(extra_arrays)
    header = {'model_config': asdict(net.config), 'seed': net.seed}
    header.update(meta or {})
    save_checkpoint(path, arrays, header)


def load_net(path):
    """Rebuild a CharmNet from a checkpoint; returns (net, arrays, meta)"""
    arrays, meta = load_checkpoint(path)
    net = CharmNet(ModelConfig(**meta['model_config']), seed=meta.get('seed', 0))
    net.load_state(arrays)
    return net, arrays, meta
