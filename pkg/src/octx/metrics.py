"""Confusion statistics, PC/OP aggregation, ROC/AUC and the speed-performance index.

Zero-denominator conventions: a rate whose denominator is zero is 0, and MCC
is 0 whenever any confusion marginal is 0. ``fnr`` and ``fpr`` are defined as
the complements of sensitivity and specificity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import EmptyConfusionError, ParameterError, UndefinedAUCError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    f_measure: float
    mcc: float
    dice: float
    jaccard: float
    iou: float
    fnr: float
    fpr: float
    auc: float | None = None
    aggregation: str = "OP"

    @property
    def recall(self):
        return self.sensitivity

    def to_dict(self):
        return asdict(self)


METRIC_FIELDS = tuple(f.name for f in fields(MetricReport) if f.name not in ("auc", "aggregation"))


def _to_bool(a):
    a = np.asarray(a)
    if a.dtype.kind in "US":
        return a == "P"
    return a.astype(bool)


def from_predictions(preds, gt):
    p, g = _to_bool(preds), _to_bool(gt)
    if p.shape != g.shape:
        raise ParameterError(f"length mismatch: {p.shape} vs {g.shape}")
    return Confusion(int((p & g).sum()), int((p & ~g).sum()),
                     int((~p & ~g).sum()), int((~p & g).sum()))


def _ratio(num, den):
    return num / den if den else 0.0


def report(c, auc=None, aggregation="OP"):
    if c.total == 0:
        raise EmptyConfusionError("confusion matrix is empty")
    tp, fp, tn, fn = c.tp, c.fp, c.tn, c.fn
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    prec = _ratio(tp, tp + fp)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    marg = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(marg) if marg else 0.0
    jac = _ratio(tp, tp + fp + fn)
    return MetricReport(
        accuracy=(tp + tn) / c.total,
        sensitivity=sens,
        specificity=spec,
        precision=prec,
        f_measure=f1,
        mcc=mcc,
        dice=f1,
        jaccard=jac,
        iou=jac,
        fnr=1.0 - sens,
        fpr=1.0 - spec,
        auc=auc,
        aggregation=aggregation,
    )


def f1_score(preds, gt):
    c = from_predictions(preds, gt)
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def roc_curve(scores, gt):
    """ROC points ``(fpr, tpr, thresholds)`` over sorted unique thresholds.

    The first point is (0, 0) at threshold +inf; ties share a single point.
    """
    s = np.asarray(scores, dtype=np.float64)
    g = _to_bool(gt)
    if s.shape != g.shape:
        raise ParameterError("scores and gt must have equal length")
    n_pos = int(g.sum())
    n_neg = g.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs both classes in gt")
    order = np.argsort(-s, kind="stable")
    s_sorted, g_sorted = s[order], g[order]
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], s.size - 1]
    tp = np.r_[0, np.cumsum(g_sorted)[last]]
    fp = np.r_[0, (last + 1) - tp[1:]]
    thr = np.r_[np.inf, s_sorted[last]]
    return fp, tp, thr, n_neg, n_pos


def roc_auc(scores, gt):
    """``((fpr, tpr, thresholds), auc)`` with the trapezoid rule.

    The area is accumulated on integer counts and divided once, so ties count
    one half exactly as in the Mann-Whitney statistic.
    """
    fp, tp, thr, n_neg, n_pos = roc_curve(scores, gt)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return (fp / n_neg, tp / n_pos, thr), auc


def pc_op_aggregate(confusions, aucs=None):
    """Per-class macro mean (PC) and pooled-count (OP) reports."""
    cs = list(confusions)
    if not cs:
        raise ParameterError("need at least one class")
    per = [report(c, None if aucs is None else aucs[k], "PC") for k, c in enumerate(cs)]
    mean = {name: float(np.mean([getattr(r, name) for r in per])) for name in METRIC_FIELDS}
    pc_auc = None if aucs is None else float(np.mean(aucs))
    pc = MetricReport(**mean, auc=pc_auc, aggregation="PC")
    pooled = cs[0]
    for c in cs[1:]:
        pooled = pooled + c
    op = report(pooled, None, "OP")
    return pc, op


def speed_performance_index(accuracy, frames_per_second, reference_fps):
    """``accuracy * min(1, fps / reference_fps)``."""
    if frames_per_second <= 0 or reference_fps <= 0:
        raise ParameterError("frame rates must be positive")
    return accuracy * min(1.0, frames_per_second / reference_fps)


# Report JSON column groups, in percent.
SUMMARY_COLUMNS = {"Accuracy (%)": "accuracy", "Precision (%)": "precision",
                  "Recall (%)": "sensitivity", "Specificity (%)": "specificity",
                  "Fmeasure (%)": "f_measure"}
ERROR_RATE_COLUMNS = {"Accuracy (%)": "accuracy", "AUC Value (%)": "auc", "FNR (%)": "fnr",
                  "FPR (%)": "fpr", "Fmeasure (%)": "f_measure"}


def table_columns(r, columns):
    out = {}
    for col, name in columns.items():
        v = getattr(r, name)
        out[col] = None if v is None else 100.0 * v
    return out


def binary_pc_op(preds, gt, auc=None):
    """PC/OP over the two roles (lesion as positive, background as positive)."""
    p, g = _to_bool(preds), _to_bool(gt)
    c_les = from_predictions(p, g)
    c_bg = from_predictions(~p, ~g)
    aucs = None if auc is None else [auc, auc]
    return pc_op_aggregate([c_les, c_bg], aucs)
