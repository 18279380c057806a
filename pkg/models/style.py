"""
Style Model
The K = 10 capture-condition styles, their parametric appearance transforms and style labels.
"""
from dataclasses import dataclass, replace

import numpy as np

from errors import ValidationError

K = 10
WEATHERS = ('Clear', 'PartlyCloudy', 'Cloudy', 'Night')
TIMES = ('SunriseSunset', 'Noon', 'OtherTimes', 'Night')
LUMA = np.array([0.299, 0.587, 0.114])
LABEL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class StyleId:
    """One capture condition: a weather x time-of-day combination, or Night"""
    index: int
    weather: str
    time: str

    def __post_init__(self):
        if not 0 <= self.index < K:
            raise ValidationError(f'style index {self.index} outside [0, {K - 1}]')
        if self.weather not in WEATHERS or self.time not in TIMES:
            raise ValidationError(f'unknown style {self.weather}/{self.time}')

    @property
    def label(self):
        return 'Night' if self.weather == 'Night' else f'{self.weather}/{self.time}'


STYLES = tuple(
    [StyleId(3 * w + t, weather, time)
     for w, weather in enumerate(WEATHERS[:3])
     for t, time in enumerate(TIMES[:3])]
    + [StyleId(9, 'Night', 'Night')]
)


@dataclass(frozen=True)
class StyleParams:
    """Per-channel gain and bias, gamma, saturation and additive brightness"""
    gain: tuple = (1.0, 1.0, 1.0)
    bias: tuple = (0.0, 0.0, 0.0)
    gamma: float = 1.0
    saturation: float = 1.0
    brightness: float = 0.0

    def __post_init__(self):
        if len(self.gain) != 3 or len(self.bias) != 3 or min(self.gain) <= 0:
            raise ValidationError('style gains must be three positive reals, biases three reals')
        if self.gamma <= 0 or not 0.0 <= self.saturation <= 1.0:
            raise ValidationError(f'gamma {self.gamma} / saturation {self.saturation} out of range')

    def apply(self, image):
        """Map a (3, H, W) image in [0, 1] through the transform, clamped to [0, 1]"""
        x = image * np.asarray(self.gain).reshape(3, 1, 1) + np.asarray(self.bias).reshape(3, 1, 1)
        # Identity stages are skipped so the identity transform is exact
        if self.saturation != 1.0:
            luma = np.tensordot(LUMA, x, axes=1)
            x = luma + self.saturation * (x - luma)
        if self.gamma != 1.0:
            x = np.clip(x, 0.0, 1.0) ** self.gamma
        if self.brightness != 0.0:
            x = x + self.brightness
        return np.clip(x, 0.0, 1.0)

    def jittered(self, rng, amount=0.03):
        """Small seeded perturbation around the base values"""
        gain = tuple(float(g * (1.0 + rng.uniform(-amount, amount))) for g in self.gain)
        bias = tuple(float(b + rng.uniform(-amount / 3, amount / 3)) for b in self.bias)
        return StyleParams(
            gain=gain,
            bias=bias,
            gamma=float(self.gamma * (1.0 + rng.uniform(-amount, amount))),
            saturation=float(np.clip(self.saturation + rng.uniform(-amount, amount), 0.0, 1.0)),
            brightness=float(self.brightness + rng.uniform(-amount / 3, amount / 3)),
        )


def _time_params(time):
    if time == 'Noon':
        return StyleParams(gain=(1.1, 1.1, 1.1), brightness=0.05)
    if time == 'SunriseSunset':
        return StyleParams(gain=(1.15, 0.95, 0.75), bias=(0.03, 0.0, -0.02), gamma=0.8)
    return StyleParams(gain=(0.95, 0.95, 0.95), brightness=-0.05)


def _with_weather(params, weather):
    # Cloud cover pulls toward mid grey and drains colour; PartlyCloudy sits halfway
    contrast, saturation = {'Clear': (1.0, 1.0), 'PartlyCloudy': (0.925, 0.775), 'Cloudy': (0.85, 0.55)}[weather]
    lift = (1.0 - contrast) * 0.45
    return replace(
        params,
        gain=tuple(g * contrast for g in params.gain),
        bias=tuple(b + lift for b in params.bias),
        saturation=saturation,
    )


NIGHT_PARAMS = StyleParams(gain=(0.22, 0.24, 0.32), bias=(0.0, 0.01, 0.04), gamma=1.1,
                           saturation=0.4, brightness=-0.02)

STYLE_TABLE = {
    style.index: NIGHT_PARAMS if style.weather == 'Night' else _with_weather(_time_params(style.time), style.weather)
    for style in STYLES
}


def perturb_for_real(params):
    """Shifted style table of the real-like family"""
    r, g, b = params.gain
    return replace(
        params,
        gain=(r * 1.06, g, b * 0.93),
        gamma=params.gamma * 1.1,
        saturation=float(np.clip(params.saturation * 0.9, 0.0, 1.0)),
        brightness=params.brightness - 0.02,
    )


def style_params(style, jitter_seed, family='rendered'):
    """Deterministic StyleParams for (style, jitter seed, family)"""
    base = STYLE_TABLE[style.index]
    if family == 'real':
        base = perturb_for_real(base)
    rng = np.random.default_rng([int(jitter_seed), style.index])
    return base.jittered(rng)


# ---------------------------------------------------------------- style labels

def one_hot(index, k=K):
    label = np.zeros(k)
    label[index] = 1.0
    return label


def validate_label(probs, name='style label'):
    """Check a K-vector (or batch of them) is a probability distribution"""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[-1] != K:
        raise ValidationError(f'{name} must have {K} entries, got shape {probs.shape}')
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > LABEL_TOLERANCE):
        raise ValidationError(f'{name} is not a probability vector')
    return probs
