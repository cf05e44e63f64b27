"""Seeded generator of endoscopy-like frames with elliptical lesions.

Every frame is a smooth low-contrast background field with one or more
elliptical lesions painted in. Each lesion class has its own base intensity,
correlation length and amplitude, so the classes differ in GLCM contrast,
sum average and correlation. Frame ``k`` draws from its own child seed, so
frames can be generated independently and in any order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ParameterError
from .patching import LESION_CLASSES, Ellipse, LesionMask


@dataclass(frozen=True)
class Texture:
    base: float
    corr_length: float
    amplitude: float


DEFAULT_BACKGROUND = Texture(base=112.0, corr_length=6.0, amplitude=9.0)
DEFAULT_TEXTURES = {
    "GU": Texture(base=176.0, corr_length=1.0, amplitude=42.0),
    "GRS": Texture(base=96.0, corr_length=1.4, amplitude=38.0),
    "GPs": Texture(base=150.0, corr_length=2.0, amplitude=34.0),
    "GB": Texture(base=62.0, corr_length=0.8, amplitude=40.0),
}


@dataclass
class GeneratorConfig:
    n_frames: int = 100
    frame_size: tuple = (256, 256)  # (width, height)
    class_mix: dict = field(default_factory=lambda: {c: 0.25 for c in LESION_CLASSES})
    lesions_per_frame: tuple = (1, 2)  # inclusive range
    semi_axis_range: tuple = (22.0, 52.0)
    background: Texture = DEFAULT_BACKGROUND
    textures: dict = field(default_factory=lambda: dict(DEFAULT_TEXTURES))
    illumination: float = 10.0  # peak-to-edge vignette depth in gray levels
    label_noise: float = 0.0
    seed: int = 0

    def validate(self):
        if self.n_frames < 1:
            raise ParameterError("n_frames must be >= 1")
        w, h = self.frame_size
        if w < 16 or h < 16:
            raise ParameterError("frame_size must be at least 16x16")
        if set(self.class_mix) - set(LESION_CLASSES):
            raise ParameterError("class_mix has unknown classes")
        mix = np.array([self.class_mix.get(c, 0.0) for c in LESION_CLASSES])
        if np.any(mix < 0) or not math.isclose(mix.sum(), 1.0, abs_tol=1e-9):
            raise ParameterError("class_mix must be non-negative and sum to 1")
        lo, hi = self.lesions_per_frame
        if not 0 <= lo <= hi:
            raise ParameterError("lesions_per_frame must be an ordered non-negative range")
        a0, a1 = self.semi_axis_range
        if not 0 < a0 <= a1 or 2 * a1 >= min(w, h):
            raise ParameterError("semi_axis_range must be positive and fit the frame")
        if not 0.0 <= self.label_noise < 1.0:
            raise ParameterError("label_noise must be in [0, 1)")
        if set(LESION_CLASSES) - set(self.textures):
            raise ParameterError("textures must cover every lesion class")

    def to_dict(self):
        d = asdict(self)
        d["frame_size"] = list(self.frame_size)
        d["lesions_per_frame"] = list(self.lesions_per_frame)
        d["semi_axis_range"] = list(self.semi_axis_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "background" in d and isinstance(d["background"], dict):
            d["background"] = Texture(**d["background"])
        if "textures" in d:
            d["textures"] = {k: Texture(**v) if isinstance(v, dict) else v
                             for k, v in d["textures"].items()}
        for key in ("frame_size", "lesions_per_frame", "semi_axis_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SynthFrame:
    frame_id: int
    image: np.ndarray
    masks: list

    def manifest_entry(self):
        return {"frame_id": self.frame_id,
                "file": f"frame_{self.frame_id:04d}.pgm",
                "masks": [m.to_dict() for m in self.masks]}


@dataclass
class SynthDataset:
    config: GeneratorConfig
    frames: list

    @property
    def manifest(self):
        return {"generator": self.config.to_dict(),
                "seed": self.config.seed,
                "frames": [f.manifest_entry() for f in self.frames]}


def texture_field(rng, shape, tex):
    """Gaussian-filtered white noise rescaled to unit std, then ``base + amplitude * z``."""
    z = rng.standard_normal(shape)
    if tex.corr_length > 0:
        z = gaussian_filter(z, tex.corr_length, mode="wrap")
    z = z / (z.std() + 1e-12)
    return tex.base + tex.amplitude * z


def _random_ellipse(rng, w, h, axis_range):
    a = rng.uniform(*axis_range)
    b = rng.uniform(max(axis_range[0], 0.55 * a), a)
    ang = rng.uniform(0.0, math.pi)
    e = Ellipse(0.0, 0.0, a, b, ang)
    hx, hy = e.half_extent()
    cx = rng.uniform(hx, w - 1 - hx)
    cy = rng.uniform(hy, h - 1 - hy)
    return Ellipse(cx, cy, a, b, ang)


def generate_frame(config, frame_id, rng):
    w, h = config.frame_size
    img = texture_field(rng, (h, w), config.background)
    if config.illumination:
        yy, xx = np.mgrid[0:h, 0:w]
        r2 = ((xx - w / 2) / (w / 2)) ** 2 + ((yy - h / 2) / (h / 2)) ** 2
        img -= config.illumination * np.clip(r2, 0, 2) / 2
    mix = np.array([config.class_mix.get(c, 0.0) for c in LESION_CLASSES])
    lo, hi = config.lesions_per_frame
    n_les = int(rng.integers(lo, hi + 1))
    masks = []
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_les):
        cls = LESION_CLASSES[int(rng.choice(len(LESION_CLASSES), p=mix))]
        e = _random_ellipse(rng, w, h, config.semi_axis_range)
        inside = e.contains(xx, yy)
        tex = texture_field(rng, (h, w), config.textures[cls])
        img[inside] = tex[inside]
        masks.append(LesionMask((e,), cls))
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return SynthFrame(frame_id, img, masks)


def generate(config=None, **overrides):
    """Build the full dataset; identical ``(config, seed)`` gives identical bytes."""
    cfg = replace(config or GeneratorConfig(), **overrides)
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_frames)
    frames = [generate_frame(cfg, k, np.random.default_rng(s)) for k, s in enumerate(seeds)]
    return SynthDataset(cfg, frames)


def plant_noise(labels, rate, seed):
    """Flip exactly ``round(rate * n)`` labels chosen uniformly without replacement.

    Returns ``(noisy_labels, flipped_ids)`` with ids sorted ascending.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError("noise rate must be in [0, 1)")
    y = np.asarray(labels, dtype=bool).copy()
    k = int(round(rate * y.size))
    flipped = np.sort(np.random.default_rng(seed).choice(y.size, size=k, replace=False))
    y[flipped] = ~y[flipped]
    return y, flipped.astype(np.int64)


def _rot90_ellipse(e, w):
    # np.rot90 (counter-clockwise): pixel (x, y) -> (y, w - 1 - x)
    return Ellipse(e.cy, w - 1 - e.cx, e.a, e.b, (e.angle - math.pi / 2) % math.pi)


def _hflip_ellipse(e, w):
    return Ellipse(w - 1 - e.cx, e.cy, e.a, e.b, (-e.angle) % math.pi)


def _vflip_ellipse(e, h):
    return Ellipse(e.cx, h - 1 - e.cy, e.a, e.b, (-e.angle) % math.pi)


def _map_masks(masks, fn):
    return [LesionMask(tuple(fn(e) for e in m.ellipses), m.class_label) for m in masks]


def rotate90(frame, k=1):
    img, masks = frame.image, frame.masks
    for _ in range(k % 4):
        w = img.shape[1]
        masks = _map_masks(masks, lambda e, w=w: _rot90_ellipse(e, w))
        img = np.rot90(img)
    return SynthFrame(frame.frame_id, np.ascontiguousarray(img), masks)


def hflip(frame):
    w = frame.image.shape[1]
    return SynthFrame(frame.frame_id, np.ascontiguousarray(frame.image[:, ::-1]),
                      _map_masks(frame.masks, lambda e: _hflip_ellipse(e, w)))


def vflip(frame):
    h = frame.image.shape[0]
    return SynthFrame(frame.frame_id, np.ascontiguousarray(frame.image[::-1]),
                      _map_masks(frame.masks, lambda e: _vflip_ellipse(e, h)))


def jitter(frame, rng, gain=(0.9, 1.1), offset=(-10.0, 10.0)):
    g = rng.uniform(*gain)
    o = rng.uniform(*offset)
    img = np.clip(np.rint(frame.image.astype(np.float64) * g + o), 0, 255).astype(np.uint8)
    return SynthFrame(frame.frame_id, img, list(frame.masks))


def scale(frame, factor):
    """Nearest-neighbour rescale; off by default because it breaks patch alignment."""
    from scipy.ndimage import zoom

    img = zoom(frame.image, factor, order=0)
    masks = _map_masks(frame.masks, lambda e: Ellipse(e.cx * factor, e.cy * factor,
                                                      e.a * factor, e.b * factor, e.angle))
    return SynthFrame(frame.frame_id, img, masks)


DEFAULT_AUGMENT_OPS = ("rotate90", "hflip", "vflip", "jitter")


def augment(frame, ops=DEFAULT_AUGMENT_OPS, seed=0, scale_factor=None):
    """One transformed copy of ``frame`` per op; masks follow the image.

    Patch ground truth must be recomputed from the returned masks with
    ``patching.label_patches``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for op in ops:
        if op == "rotate90":
            out.extend(rotate90(frame, k) for k in (1, 2, 3))
        elif op == "hflip":
            out.append(hflip(frame))
        elif op == "vflip":
            out.append(vflip(frame))
        elif op == "jitter":
            out.append(jitter(frame, rng))
        elif op == "scale":
            if scale_factor is None:
                raise ParameterError("scale augmentation needs scale_factor")
            out.append(scale(frame, scale_factor))
        else:
            raise ParameterError(f"unknown augmentation {op!r}")
    return out
