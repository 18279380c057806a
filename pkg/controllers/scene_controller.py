"""
Scene Controller
Procedural scene synthesis, K-style group rendering and corpus persistence.
"""
import json
import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image, ImageDraw

from errors import DatasetError, ValidationError
from models.scene import (FAMILIES, MAX_FG_RATIO, MIN_FG_RATIO, BackgroundRecipe, Blob,
                          ForegroundRecipe, SceneGroup, SceneSpec)
from models.style import K, STYLES, style_params

logger = logging.getLogger(__name__)

FAMILY_CODE = {'rendered': 0, 'real': 1}
ORACLE_FILE = 'oracle_styles.json'


# ---------------------------------------------------------------- recipes

def make_scene_spec(scene_id, height, width, family, seed, attempt=0):
    """Draw a scene recipe deterministically from (seed, family, scene_id, attempt)"""
    if family not in FAMILIES:
        raise ValidationError(f'unknown family "{family}"')
    rng = np.random.default_rng([int(seed), FAMILY_CODE[family], int(scene_id), int(attempt)])

    blobs = tuple(
        Blob(cx=float(rng.uniform(0, width)), cy=float(rng.uniform(0, height)),
             sigma=float(rng.uniform(0.08, 0.25) * min(height, width)),
             color=tuple(rng.uniform(0.1, 0.9, size=3).tolist()),
             amplitude=float(rng.uniform(0.2, 0.6)))
        for _ in range(int(rng.integers(2, 6)))
    )
    background = BackgroundRecipe(
        color0=tuple(rng.uniform(0.2, 0.8, size=3).tolist()),
        color1=tuple(rng.uniform(0.2, 0.8, size=3).tolist()),
        angle=float(rng.uniform(0, 2 * np.pi)),
        blobs=blobs,
        texture_seed=int(rng.integers(0, 2 ** 31 - 1)),
        texture_amplitude=float(rng.uniform(0.04, 0.08) if family == 'rendered' else rng.uniform(0.08, 0.14)),
        texture_band=(0.05, 0.18) if family == 'rendered' else (0.2, 0.45),
    )

    # Area target first, then a figure sized to meet it; rasterised ratio is checked later
    target = rng.uniform(0.05, 0.3)
    kind = 'ellipse' if rng.random() < 0.5 else 'polygon'
    aspect = rng.uniform(0.5, 2.0)
    area = target * height * width
    ry = np.sqrt(area / (np.pi * aspect))
    rx = ry * aspect
    rx, ry = min(rx, width / 2 - 2), min(ry, height / 2 - 2)
    cx = rng.uniform(rx + 1, width - rx - 1)
    cy = rng.uniform(ry + 1, height - ry - 1)
    vertices = ()
    if kind == 'polygon':
        n = int(rng.integers(3, 8))
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
        vertices = tuple((float(cx + rx * np.cos(a)), float(cy + ry * np.sin(a))) for a in angles)
    foreground = ForegroundRecipe(
        kind=kind, center=(float(cx), float(cy)), radii=(float(rx), float(ry)), vertices=vertices,
        color=tuple(rng.uniform(0.15, 0.95, size=3).tolist()), shade=float(rng.uniform(0.1, 0.35)),
    )
    return SceneSpec(seed=int(seed), scene_id=int(scene_id), family=family,
                     height=int(height), width=int(width), background=background, foreground=foreground)


def _foreground_mask(spec):
    fg = spec.foreground
    canvas = Image.new('L', (spec.width, spec.height), 0)
    draw = ImageDraw.Draw(canvas)
    if fg.kind == 'ellipse':
        (cx, cy), (rx, ry) = fg.center, fg.radii
        draw.ellipse((cx - rx, cy - ry, cx + rx, cy + ry), fill=1)
    else:
        draw.polygon(list(fg.vertices), fill=1)
    return np.asarray(canvas, dtype=np.float64)


def _band_noise(seed, height, width, band):
    """Zero-mean unit-std noise keeping only radial frequencies inside band"""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((3, height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    radius = np.sqrt(fx ** 2 + fy ** 2)
    keep = (radius >= band[0]) & (radius <= band[1])
    filtered = np.real(np.fft.ifft2(np.fft.fft2(noise) * keep))
    std = filtered.std(axis=(1, 2), keepdims=True)
    return (filtered - filtered.mean(axis=(1, 2), keepdims=True)) / np.where(std > 0, std, 1.0)


def base_render(spec):
    """Unstyled (3, H, W) image in [0, 1] and the (1, H, W) binary mask"""
    h, w = spec.height, spec.width
    bg = spec.background
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    t = (np.cos(bg.angle) * xx / w + np.sin(bg.angle) * yy / h)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    c0, c1 = np.asarray(bg.color0)[:, None, None], np.asarray(bg.color1)[:, None, None]
    image = c0 + (c1 - c0) * t[None]
    for blob in bg.blobs:
        weight = blob.amplitude * np.exp(-((xx - blob.cx) ** 2 + (yy - blob.cy) ** 2) / (2 * blob.sigma ** 2))
        image = image * (1 - weight[None]) + np.asarray(blob.color)[:, None, None] * weight[None]
    image = image + bg.texture_amplitude * _band_noise(bg.texture_seed, h, w, bg.texture_band)

    mask = _foreground_mask(spec)
    fg = spec.foreground
    shading = 1.0 - fg.shade * (yy - fg.center[1]) / max(h, 1)
    figure = np.asarray(fg.color)[:, None, None] * shading[None]
    if spec.family == 'real':
        figure = figure + 0.5 * bg.texture_amplitude * _band_noise(bg.texture_seed + 1, h, w, bg.texture_band)
    image = np.where(mask[None] > 0, figure, image)
    return np.clip(image, 0.0, 1.0), mask[None]


def _fitted_spec(scene_id, height, width, family, seed):
    """First recipe (over derived seeds) whose rasterised mask meets the area bounds"""
    for attempt in range(64):
        spec = make_scene_spec(scene_id, height, width, family, seed, attempt)
        mask = _foreground_mask(spec)
        ratio = mask.mean()
        inner = mask[1:-1, 1:-1].sum() == mask.sum()
        if MIN_FG_RATIO <= ratio <= MAX_FG_RATIO and inner:
            return spec
    raise ValidationError(f'scene {scene_id}: no valid foreground after 64 draws')


# ---------------------------------------------------------------- rendering

def render_scene(spec, style, jitter_seed):
    """clamp(style_transform(base_render(spec))) and the style-independent mask"""
    image, mask = base_render(spec)
    return style_params(style, jitter_seed, spec.family).apply(image), mask


def render_group(scene_id, height, width, family, seed):
    spec = _fitted_spec(scene_id, height, width, family, seed)
    rng = np.random.default_rng([int(seed), FAMILY_CODE[family], int(scene_id), 1])
    jitter_seed = int(rng.integers(0, 2 ** 31 - 1))
    base, mask = base_render(spec)
    # Real-like views are stored in a seeded order so file names carry no style
    order = rng.permutation(K) if family == 'real' else np.arange(K)
    styles = [STYLES[int(k)] for k in order]
    images = [style_params(s, jitter_seed, family).apply(base) for s in styles]
    return SceneGroup(scene_id=int(scene_id), family=family, images=images, mask=mask,
                      style_ids=styles, jitter_seed=jitter_seed)


def build_corpus(n_scenes, height, width, family, seed, workers=1):
    """n_scenes groups of K styled renders; order and content depend only on the arguments"""
    if n_scenes < 1:
        raise ValidationError(f'n_scenes must be at least 1, got {n_scenes}')
    if family not in FAMILIES:
        raise ValidationError(f'unknown family "{family}"')
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        groups = list(pool.map(lambda i: render_group(i, height, width, family, seed), range(n_scenes)))
    logger.info('rendered %d %s scenes at %dx%d', n_scenes, family, height, width)
    return groups


# ---------------------------------------------------------------- persistence

def _to_png(array, path, mode):
    data = np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)
    if mode == 'RGB':
        data = np.ascontiguousarray(data.transpose(1, 2, 0))
    else:
        data = data[0]
    Image.fromarray(data, mode=mode).save(path)


def view_name(family, k):
    return f'style_{k}.png' if family == 'rendered' else f'view_{k}.png'


def write_corpus(groups, root, seed):
    """scenes/<id>/{style_k|view_k}.png, mask.png and meta.json under root/<family>/; real-like
    style ids go to root/oracle_styles.json only.

    A family being written replaces whatever an earlier run left under root/<family>/scenes,
    and the oracle is rewritten from the real-like groups given here.
    """
    for family in sorted({group.family for group in groups}):
        stale = os.path.join(root, family, 'scenes')
        if os.path.isdir(stale):
            logger.info('replacing existing %s scenes under %s', family, root)
            shutil.rmtree(stale)
    oracle = {}
    for group in groups:
        scene_dir = os.path.join(root, group.family, 'scenes', f'{group.scene_id:05d}')
        os.makedirs(scene_dir, exist_ok=True)
        for k, image in enumerate(group.images):
            _to_png(image, os.path.join(scene_dir, view_name(group.family, k)), 'RGB')
        _to_png(group.mask, os.path.join(scene_dir, 'mask.png'), 'L')
        meta = {'scene_id': group.scene_id, 'family': group.family, 'jitter_seed': group.jitter_seed,
                'seed': seed, 'views': K}
        if group.family == 'rendered':
            meta['style_ids'] = [s.index for s in group.style_ids]
            meta['styles'] = [s.label for s in group.style_ids]
        else:
            oracle[group.scene_id] = [s.index for s in group.style_ids]
        with open(os.path.join(scene_dir, 'meta.json'), 'w') as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    if oracle:
        with open(os.path.join(root, ORACLE_FILE), 'w') as fh:
            json.dump({str(k): v for k, v in sorted(oracle.items())}, fh, indent=2)


def _read_png(path):
    if not os.path.isfile(path):
        raise DatasetError(f'missing corpus image {path}')
    return np.asarray(Image.open(path))


def load_group(root, family, scene_id):
    """Read one scene back as a SceneGroup of uint8 images; real-like style ids stay unknown"""
    scene_dir = os.path.join(root, family, 'scenes', f'{scene_id:05d}')
    meta_path = os.path.join(scene_dir, 'meta.json')
    if not os.path.isfile(meta_path):
        raise DatasetError(f'missing scene metadata {meta_path}')
    with open(meta_path) as fh:
        meta = json.load(fh)
    images = [_read_png(os.path.join(scene_dir, view_name(family, k))).transpose(2, 0, 1) for k in range(K)]
    mask = (_read_png(os.path.join(scene_dir, 'mask.png')) > 127).astype(np.float64)[None]
    style_ids = [STYLES[i] for i in meta['style_ids']] if family == 'rendered' else None
    return SceneGroup(scene_id=scene_id, family=family, images=images, mask=mask,
                      style_ids=style_ids, jitter_seed=meta['jitter_seed'])


def scene_ids(root, family):
    scenes = os.path.join(root, family, 'scenes')
    if not os.path.isdir(scenes):
        raise DatasetError(f'no {family} corpus under {root}')
    return sorted(int(name) for name in os.listdir(scenes) if name.isdigit())


def load_corpus(root, family):
    return [load_group(root, family, i) for i in scene_ids(root, family)]


def load_oracle(root):
    """Sealed scene_id -> per-view style index map for the real-like family"""
    path = os.path.join(root, ORACLE_FILE)
    if not os.path.isfile(path):
        raise DatasetError(f'no style oracle at {path}')
    with open(path) as fh:
        return {int(k): v for k, v in json.load(fh).items()}
