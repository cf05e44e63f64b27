"""Non-overlapping patch decomposition, elliptical ground truth, frame split."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoPatchesError, ParameterError, SplitError

LESION_CLASSES = ("GU", "GRS", "GPs", "GB")
DEFAULT_PATCH_SIZE = 32
DEFAULT_OVERLAP = 0.5


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    angle: float = 0.0  # radians, major axis direction measured from +x

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ParameterError("ellipse semi-axes must be positive")

    def contains(self, x, y):
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx = np.asarray(x, dtype=np.float64) - self.cx
        dy = np.asarray(y, dtype=np.float64) - self.cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0

    def half_extent(self):
        c, s = math.cos(self.angle), math.sin(self.angle)
        hx = math.sqrt((self.a * c) ** 2 + (self.b * s) ** 2)
        hy = math.sqrt((self.a * s) ** 2 + (self.b * c) ** 2)
        return hx, hy


@dataclass(frozen=True)
class LesionMask:
    ellipses: tuple
    class_label: str

    def __post_init__(self):
        if self.class_label not in LESION_CLASSES:
            raise ParameterError(f"unknown lesion class {self.class_label!r}")
        object.__setattr__(self, "ellipses", tuple(self.ellipses))

    def to_dict(self):
        return {
            "class_label": self.class_label,
            "ellipses": [[e.cx, e.cy, e.a, e.b, e.angle] for e in self.ellipses],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Ellipse(*map(float, e)) for e in d["ellipses"]), d["class_label"])


@dataclass
class PatchRecord:
    patch_id: int
    frame_id: int
    grid_xy: tuple
    patch_size: int
    features: np.ndarray | None = None
    score: float | None = None
    gt: bool = False
    lesion_class: str | None = None
    split: str | None = None
    pixels: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def origin(self):
        return self.grid_xy[0] * self.patch_size, self.grid_xy[1] * self.patch_size


def patch_grid(img, patch_size):
    """View ``img`` as ``(rows, cols, P, P)`` after dropping the right/bottom remainder."""
    a = np.asarray(img)
    P = int(patch_size)
    if P < 2:
        raise ParameterError("patch size must be at least 2")
    h, w = a.shape
    nr, nc = h // P, w // P
    if nr == 0 or nc == 0:
        raise NoPatchesError(f"patch size {P} exceeds image size {w}x{h}")
    return a[: nr * P, : nc * P].reshape(nr, P, nc, P).swapaxes(1, 2)


def decompose(img, patch_size=DEFAULT_PATCH_SIZE, frame_id=0, start_id=0):
    """Split a frame into row-major P x P patch records."""
    grid = patch_grid(img, patch_size)
    nr, nc = grid.shape[:2]
    out = []
    for r in range(nr):
        for c in range(nc):
            out.append(PatchRecord(start_id + r * nc + c, frame_id, (c, r),
                                   int(patch_size), pixels=grid[r, c]))
    return out


def rasterize(masks, shape):
    """Integer class map: 0 is background, k is ``LESION_CLASSES[k - 1]``.

    Pixel (x, y) is tested at its integer coordinates; later masks paint over
    earlier ones.
    """
    h, w = shape
    out = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    for m in masks:
        k = LESION_CLASSES.index(m.class_label) + 1
        for e in m.ellipses:
            out[e.contains(xx, yy)] = k
    return out


def patch_coverage(masks, shape, patch_size):
    """Per-patch lesion fraction and dominant lesion class index (0 if none).

    Both arrays have the patch grid shape ``(rows, cols)``.
    """
    cmap = rasterize(masks, shape)
    grid = patch_grid(cmap, patch_size)
    nr, nc = grid.shape[:2]
    flat = grid.reshape(nr, nc, -1)
    frac = (flat > 0).mean(axis=2)
    counts = np.stack([(flat == k).sum(axis=2) for k in range(1, len(LESION_CLASSES) + 1)], -1)
    cls = np.where(counts.max(axis=2) > 0, counts.argmax(axis=2) + 1, 0)
    return frac, cls


def label_patches(patches, masks, overlap_threshold=DEFAULT_OVERLAP, shape=None):
    """Return copies of ``patches`` with ``gt`` and ``lesion_class`` filled in.

    ``masks`` is one ``LesionMask`` or a list of them. A patch is a lesion when
    the fraction of its pixels inside any ellipse reaches ``overlap_threshold``.
    """
    if not 0.0 < overlap_threshold <= 1.0:
        raise ParameterError("overlap_threshold must be in (0, 1]")
    if isinstance(masks, LesionMask):
        masks = [masks]
    if not patches:
        return []
    P = patches[0].patch_size
    if shape is None:
        nc = max(p.grid_xy[0] for p in patches) + 1
        nr = max(p.grid_xy[1] for p in patches) + 1
        shape = (nr * P, nc * P)
    frac, cls = patch_coverage(masks, shape, P)
    out = []
    for p in patches:
        c, r = p.grid_xy
        lesion = bool(frac[r, c] >= overlap_threshold)
        label = LESION_CLASSES[cls[r, c] - 1] if lesion else None
        out.append(replace(p, gt=lesion, lesion_class=label))
    return out


def split_frames(frame_ids, ratio=0.7, seed=0):
    """Frame-level train/test assignment: ``{frame_id: "train" | "test"}``."""
    frames = sorted(set(int(f) for f in frame_ids))
    n = len(frames)
    if n < 2:
        raise SplitError("need at least 2 frames to split")
    n_train = int(round(ratio * n))
    if not 1 <= n_train <= n - 1:
        raise SplitError(f"ratio {ratio} leaves an empty split for {n} frames")
    perm = np.random.default_rng(seed).permutation(n)
    train = {frames[k] for k in perm[:n_train]}
    return {f: ("train" if f in train else "test") for f in frames}


def split_dataset(patches, ratio=0.7, seed=0):
    """Assign every patch the split of its frame (frame-atomic, seeded)."""
    assign = split_frames([p.frame_id for p in patches], ratio, seed)
    return [replace(p, split=assign[p.frame_id]) for p in patches]
