"""End-to-end wiring: frames -> patch features -> FDT-GS -> twin-cross model -> metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import core, fdtgs, glcm, metrics, patching, synth
from .errors import ParameterError


@dataclass
class FeatureTable:
    """Column store of every patch in a dataset.

    ``fplus`` holds features of the identity view and ``fminus`` of the
    inverted view; ``cls`` is 0 for background and ``k`` for
    ``LESION_CLASSES[k - 1]``.
    """

    patch_id: np.ndarray
    frame_id: np.ndarray
    grid_xy: np.ndarray
    fplus: np.ndarray
    fminus: np.ndarray
    gt: np.ndarray
    cls: np.ndarray
    patch_size: int = patching.DEFAULT_PATCH_SIZE
    grid_shape: tuple = (0, 0)

    def __len__(self):
        return len(self.patch_id)

    def subset(self, mask):
        return FeatureTable(self.patch_id[mask], self.frame_id[mask], self.grid_xy[mask],
                            self.fplus[mask], self.fminus[mask], self.gt[mask], self.cls[mask],
                            self.patch_size, self.grid_shape)

    def train_mask(self, ratio=0.7, seed=0):
        assign = patching.split_frames(self.frame_id, ratio, seed)
        return np.array([assign[int(f)] == "train" for f in self.frame_id])


def extract_frame(image, masks, patch_size=patching.DEFAULT_PATCH_SIZE,
                  levels=glcm.DEFAULT_LEVELS, overlap=patching.DEFAULT_OVERLAP):
    """Features of both twin views plus ground truth for one frame."""
    grid = patching.patch_grid(image, patch_size)
    nr, nc = grid.shape[:2]
    pats = grid.reshape(-1, patch_size, patch_size)
    fp = glcm.patch_features(pats, levels)
    fm = glcm.patch_features(255 - pats.astype(np.int64), levels)
    frac, cls = patching.patch_coverage(masks, np.asarray(image).shape, patch_size)
    gt = frac.ravel() >= overlap
    cls = np.where(gt, cls.ravel(), 0)
    cols, rows = np.meshgrid(np.arange(nc), np.arange(nr))
    xy = np.stack([cols.ravel(), rows.ravel()], axis=1)
    return fp, fm, gt, cls, xy, (nr, nc)


def extract(frames, patch_size=patching.DEFAULT_PATCH_SIZE, levels=glcm.DEFAULT_LEVELS,
            overlap=patching.DEFAULT_OVERLAP):
    """Build a ``FeatureTable`` from frames with ``image``, ``masks`` and ``frame_id``."""
    parts = []
    shape = None
    for fr in frames:
        fp, fm, gt, cls, xy, gs = extract_frame(fr.image, fr.masks, patch_size, levels, overlap)
        shape = shape or gs
        parts.append((fp, fm, gt, cls, xy, np.full(len(gt), fr.frame_id)))
    if not parts:
        raise ParameterError("no frames to extract")
    fp, fm, gt, cls, xy, fr_id = (np.concatenate([p[k] for p in parts]) for k in range(6))
    return FeatureTable(np.arange(len(gt)), fr_id.astype(np.int64), xy.astype(np.int64),
                        fp, fm, gt.astype(bool), cls.astype(np.int64), patch_size, shape)


@dataclass
class PipelineConfig:
    n_frames: int = 100
    seed: int = 0
    patch_size: int = patching.DEFAULT_PATCH_SIZE
    levels: int = glcm.DEFAULT_LEVELS
    overlap: float = patching.DEFAULT_OVERLAP
    train_ratio: float = 0.7
    search: fdtgs.SearchConfig = field(default_factory=fdtgs.SearchConfig)
    epochs: int = 200
    l2: float = 1e-3


@dataclass
class PipelineResult:
    thresholds: fdtgs.ThresholdSet
    search_trace: list
    model: core.TwinCrossModel
    test_ids: np.ndarray
    predictions: np.ndarray
    scores: np.ndarray
    report: metrics.MetricReport
    timings: dict


def fit_predict(table, train, config=None):
    """Search thresholds on training patches, fit the twin model on rp/ns, score the rest."""
    cfg = config or PipelineConfig()
    timings = {}
    t0 = time.perf_counter()
    tr_ids = np.nonzero(train)[0]
    s = glcm.fuse_score(table.fplus[tr_ids])
    ts, _, trace = fdtgs.search(s, table.gt[tr_ids], cfg.search)
    part = fdtgs.partition(s, ts.d1, ts.d2, ids=tr_ids)
    rp, ns = fdtgs.select_rp_ns(part)
    timings["search"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = core.TwinCrossModel(seed=cfg.seed)
    core.train_classifier(model.classifier, table.fplus[rp], table.fminus[rp],
                          table.fplus[ns], table.fminus[ns], epochs=cfg.epochs,
                          seed=cfg.seed, l2=cfg.l2)
    timings["train"] = time.perf_counter() - t0

    te_ids = np.nonzero(~train)[0]
    pos, _, score = model.predict(table.fplus[te_ids], table.fminus[te_ids])
    gt = table.gt[te_ids]
    auc = metrics.roc_auc(score, gt)[1] if 0 < gt.sum() < gt.size else None
    rep = metrics.report(metrics.from_predictions(pos, gt), auc)
    return PipelineResult(ts, trace, model, te_ids, pos, score, rep, timings)


def run(config=None):
    """Generate the default synthetic dataset and run the full pipeline on it."""
    cfg = config or PipelineConfig()
    t0 = time.perf_counter()
    ds = synth.generate(n_frames=cfg.n_frames, seed=cfg.seed)
    table = extract(ds.frames, cfg.patch_size, cfg.levels, cfg.overlap)
    t_prep = time.perf_counter() - t0
    res = fit_predict(table, table.train_mask(cfg.train_ratio, cfg.seed), cfg)
    res.timings["prepare"] = t_prep
    return table, res
