"""Gray-level co-occurrence matrices and the 22-feature texture catalog.

Gray levels are 0-based. The catalog (``FEATURE_NAMES``) is the common
Haralick set plus the usual extensions::

    f01 autocorrelation            f12 sum_average
    f02 contrast                   f13 sum_variance
    f03 correlation                f14 sum_entropy
    f04 cluster_prominence         f15 difference_variance
    f05 cluster_shade              f16 difference_entropy
    f06 dissimilarity              f17 imc1
    f07 energy                     f18 imc2
    f08 entropy                    f19 inverse_difference_normalized
    f09 homogeneity                f20 inverse_difference_moment_normalized
    f10 max_probability            f21 inverse_difference_moment
    f11 sum_of_squares_variance    f22 inverse_variance

``energy`` is the angular second moment (sum of p**2), ``homogeneity`` uses
1/(1+|i-j|) and ``inverse_difference_moment`` uses 1/(1+(i-j)**2). Entropies
use the natural log. Any feature with a zero denominator (correlation and
imc1 on a constant patch) is 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import EmptyPairsError, ParameterError

FEATURE_NAMES = (
    "autocorrelation",
    "contrast",
    "correlation",
    "cluster_prominence",
    "cluster_shade",
    "dissimilarity",
    "energy",
    "entropy",
    "homogeneity",
    "max_probability",
    "sum_of_squares_variance",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "difference_variance",
    "difference_entropy",
    "imc1",
    "imc2",
    "inverse_difference_normalized",
    "inverse_difference_moment_normalized",
    "inverse_difference_moment",
    "inverse_variance",
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: k for k, name in enumerate(FEATURE_NAMES)}
CSV_COLUMNS = tuple(f"f{k + 1:02d}" for k in range(N_FEATURES))

DEFAULT_LEVELS = 8
DEFAULT_OFFSETS = ((1, 0), (0, 1))

_EPS = 1e-12


def catalog_hash():
    """Short digest of the feature catalog, stored alongside saved models."""
    return hashlib.sha256(",".join(FEATURE_NAMES).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CoMatrix:
    levels: int
    offset: tuple
    counts: np.ndarray
    normalized: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())


def _as_image(img):
    a = np.asarray(img)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ParameterError(f"expected a non-empty 2-D image, got shape {a.shape}")
    return a


def quantize(img, levels=DEFAULT_LEVELS):
    """Map 8-bit intensities onto ``levels`` bins with floor(v * levels / 256)."""
    if not 2 <= int(levels) <= 256:
        raise ParameterError(f"levels must be in [2, 256], got {levels}")
    a = _as_image(img).astype(np.int64)
    if a.min() < 0 or a.max() > 255:
        raise ParameterError("intensities must lie in [0, 255]")
    return (a * int(levels)) // 256


def _pair_views(q, offset):
    dx, dy = int(offset[0]), int(offset[1])
    if dx == 0 and dy == 0:
        raise ParameterError("offset must not be (0, 0)")
    h, w = q.shape[-2:]
    if abs(dx) >= w or abs(dy) >= h:
        return None, None
    ys = slice(max(0, -dy), h - max(0, dy))
    xs = slice(max(0, -dx), w - max(0, dx))
    ys2 = slice(max(0, dy), h - max(0, -dy))
    xs2 = slice(max(0, dx), w - max(0, -dx))
    return q[..., ys, xs], q[..., ys2, xs2]


def cooccurrence(img, levels=DEFAULT_LEVELS, offset=(1, 0), symmetric=True,
                 prequantized=False):
    """Co-occurrence matrix of pixel pairs ``(p, p + offset)``.

    ``offset`` is ``(dx, dy)`` with x along columns. With ``prequantized`` the
    image already holds level indices in ``[0, levels)`` and is used as is.
    """
    q = _as_image(img).astype(np.int64) if prequantized else quantize(img, levels)
    if prequantized and (q.min() < 0 or q.max() >= levels):
        raise ParameterError("prequantized image has values outside [0, levels)")
    a, b = _pair_views(q, offset)
    if a is None or a.size == 0:
        raise EmptyPairsError(f"no valid pixel pairs for offset {tuple(offset)} "
                              f"in a {q.shape[1]}x{q.shape[0]} image")
    counts = np.bincount((a * levels + b).ravel(), minlength=levels * levels)
    counts = counts.reshape(levels, levels)
    if symmetric:
        counts = counts + counts.T
    return CoMatrix(levels, tuple(offset), counts, counts / counts.sum())


def cooccurrence_batch(patches, levels=DEFAULT_LEVELS, offset=(1, 0), symmetric=True):
    """Normalized matrices for a stack of already-quantized patches.

    ``patches`` has shape ``(n, P, P)``; returns ``(n, levels, levels)``.
    """
    q = np.asarray(patches, dtype=np.int64)
    n = q.shape[0]
    a, b = _pair_views(q, offset)
    if a is None or a[0].size == 0:
        raise EmptyPairsError(f"no valid pixel pairs for offset {tuple(offset)}")
    base = (np.arange(n) * levels * levels).reshape(n, 1, 1)
    idx = (base + a * levels + b).ravel()
    counts = np.bincount(idx, minlength=n * levels * levels).reshape(n, levels, levels)
    counts = counts.astype(np.float64)
    if symmetric:
        counts = counts + counts.transpose(0, 2, 1)
    return counts / counts.sum(axis=(1, 2), keepdims=True)


def _xlogx(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def features_batch(p):
    """Feature rows for a stack of normalized matrices ``(n, L, L)`` -> ``(n, 22)``."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    n, L, _ = p.shape
    i = np.arange(L, dtype=np.float64).reshape(1, L, 1)
    j = np.arange(L, dtype=np.float64).reshape(1, 1, L)
    d = i - j
    ad = np.abs(d)

    px = p.sum(axis=2)
    py = p.sum(axis=1)
    lv = np.arange(L, dtype=np.float64)
    mux = px @ lv
    muy = py @ lv
    sx = np.sqrt(np.maximum(px @ lv**2 - mux**2, 0.0))
    sy = np.sqrt(np.maximum(py @ lv**2 - muy**2, 0.0))

    ij = (p * i * j).sum(axis=(1, 2))
    out = np.empty((n, N_FEATURES))
    out[:, 0] = ij
    out[:, 1] = (p * d**2).sum(axis=(1, 2))
    den = sx * sy
    ok = den > _EPS
    out[:, 2] = np.where(ok, (ij - mux * muy) / np.where(ok, den, 1.0), 0.0)
    c = i + j - (mux + muy).reshape(n, 1, 1)
    out[:, 3] = (p * c**4).sum(axis=(1, 2))
    out[:, 4] = (p * c**3).sum(axis=(1, 2))
    out[:, 5] = (p * ad).sum(axis=(1, 2))
    out[:, 6] = (p**2).sum(axis=(1, 2))
    hxy = -_xlogx(p).sum(axis=(1, 2))
    out[:, 7] = hxy
    out[:, 8] = (p / (1.0 + ad)).sum(axis=(1, 2))
    out[:, 9] = p.max(axis=(1, 2))
    out[:, 10] = (p * (i - mux.reshape(n, 1, 1)) ** 2).sum(axis=(1, 2))

    # sum and difference distributions
    k_sum = (i + j).astype(np.int64).ravel()
    k_dif = ad.astype(np.int64).ravel()
    flat = p.reshape(n, L * L)
    psum = np.zeros((n, 2 * L - 1))
    pdif = np.zeros((n, L))
    for k in range(2 * L - 1):
        psum[:, k] = flat[:, k_sum == k].sum(axis=1)
    for k in range(L):
        pdif[:, k] = flat[:, k_dif == k].sum(axis=1)
    ks = np.arange(2 * L - 1, dtype=np.float64)
    kd = np.arange(L, dtype=np.float64)
    savg = psum @ ks
    out[:, 11] = savg
    out[:, 12] = (psum * (ks - savg[:, None]) ** 2).sum(axis=1)
    out[:, 13] = -_xlogx(psum).sum(axis=1)
    dmean = pdif @ kd
    out[:, 14] = (pdif * (kd - dmean[:, None]) ** 2).sum(axis=1)
    out[:, 15] = -_xlogx(pdif).sum(axis=1)

    # information measures of correlation
    hx = -_xlogx(px).sum(axis=1)
    hy = -_xlogx(py).sum(axis=1)
    pxy = px[:, :, None] * py[:, None, :]
    with np.errstate(divide="ignore"):
        logpxy = np.where(pxy > 0, np.log(np.where(pxy > 0, pxy, 1.0)), 0.0)
    hxy1 = -(p * logpxy).sum(axis=(1, 2))
    hxy2 = -(pxy * logpxy).sum(axis=(1, 2))
    hmax = np.maximum(hx, hy)
    ok = hmax > _EPS
    out[:, 16] = np.where(ok, (hxy - hxy1) / np.where(ok, hmax, 1.0), 0.0)
    out[:, 17] = np.sqrt(np.clip(1.0 - np.exp(-2.0 * (hxy2 - hxy)), 0.0, 1.0))

    out[:, 18] = (p / (1.0 + ad / L)).sum(axis=(1, 2))
    out[:, 19] = (p / (1.0 + d**2 / L**2)).sum(axis=(1, 2))
    out[:, 20] = (p / (1.0 + d**2)).sum(axis=(1, 2))
    with np.errstate(divide="ignore"):
        inv = np.where(ad > 0, 1.0 / np.where(ad > 0, d**2, 1.0), 0.0)
    out[:, 21] = (p * inv).sum(axis=(1, 2))
    return out


def features(m):
    """22-element feature vector of one co-occurrence matrix."""
    p = m.normalized if isinstance(m, CoMatrix) else np.asarray(m, dtype=np.float64)
    if not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ParameterError("features need a normalized matrix with positive total")
    return features_batch(p)[0]


def patch_features(patches, levels=DEFAULT_LEVELS, offsets=DEFAULT_OFFSETS,
                   symmetric=True):
    """Offset-averaged features for 8-bit patches of shape ``(n, P, P)`` or ``(P, P)``."""
    a = np.asarray(patches)
    single = a.ndim == 2
    if single:
        a = a[None]
    q = (a.astype(np.int64) * int(levels)) // 256
    acc = np.zeros((a.shape[0], N_FEATURES))
    for off in offsets:
        acc += features_batch(cooccurrence_batch(q, levels, off, symmetric))
    acc /= len(offsets)
    return acc[0] if single else acc


# Calibrated on the default synthetic generator: lesion textures raise
# contrast/dissimilarity and lower homogeneity relative to background mucosa.
DEFAULT_WEIGHTS = np.zeros(N_FEATURES)
DEFAULT_WEIGHTS[FEATURE_INDEX["contrast"]] = 1.5
DEFAULT_WEIGHTS[FEATURE_INDEX["dissimilarity"]] = 4.0
DEFAULT_WEIGHTS[FEATURE_INDEX["entropy"]] = 1.0
DEFAULT_BIAS = -4.0


def fuse_score(f, weights=None, bias=None):
    """Squash a weighted feature sum into [0, 1].

    Works on a single vector or a ``(n, 22)`` matrix. Explicit ``weights``
    without a ``bias`` use a bias of 0, so all-zero weights give 0.5.
    """
    if weights is None:
        weights = DEFAULT_WEIGHTS
        bias = DEFAULT_BIAS if bias is None else bias
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (N_FEATURES,) or not np.all(np.isfinite(w)):
        raise ParameterError("weights must be 22 finite reals")
    z = np.asarray(f, dtype=np.float64) @ w + (0.0 if bias is None else float(bias))
    s = expit(z)
    return float(s) if np.ndim(s) == 0 else s
