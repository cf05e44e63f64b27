import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import mannwhitneyu
from sklearn.metrics import roc_auc_score

from octx import metrics
from octx.errors import EmptyConfusionError, ParameterError, UndefinedAUCError
from octx.metrics import Confusion
from oracles import naive_report

counts = st.integers(0, 500)


def test_from_predictions_examples():
    assert metrics.from_predictions([1, 0, 1], [1, 0, 1]) == Confusion(2, 0, 1, 0)
    assert metrics.from_predictions([0, 1], [1, 0]) == Confusion(0, 1, 0, 1)
    c = metrics.from_predictions(["P", "N", "P", "N"], ["P", "N", "N", "N"])
    assert c == Confusion(tp=1, fp=1, tn=2, fn=0)
    with pytest.raises(ParameterError):
        metrics.from_predictions([1, 0], [1])


def test_report_examples():
    r = metrics.report(Confusion(tp=9, fp=1, tn=89, fn=1))
    assert r.accuracy == pytest.approx(0.98)
    assert r.precision == pytest.approx(0.9) and r.recall == pytest.approx(0.9)
    assert r.f_measure == pytest.approx(0.9) and r.dice == pytest.approx(0.9)
    r = metrics.report(Confusion(0, 0, 10, 0))
    assert (r.accuracy, r.precision, r.mcc) == (1.0, 0.0, 0.0)
    with pytest.raises(EmptyConfusionError):
        metrics.report(Confusion(0, 0, 0, 0))
    with pytest.raises(ParameterError):
        Confusion(-1, 0, 0, 0)


@given(counts, counts, counts, counts)
def test_report_matches_naive_oracle_and_identities(tp, fp, tn, fn):
    c = Confusion(tp, fp, tn, fn)
    if c.total == 0:
        return
    r = metrics.report(c)
    ref = naive_report(tp, fp, tn, fn)
    for k, v in ref.items():
        assert getattr(r, k) == v, k
    assert abs(r.jaccard - r.dice / (2 - r.dice)) <= 1e-12
    assert r.fnr == 1 - r.sensitivity and r.fpr == 1 - r.specificity
    assert -1 <= r.mcc <= 1
    for k in ("accuracy", "sensitivity", "specificity", "precision", "f_measure", "iou"):
        assert 0 <= getattr(r, k) <= 1


def test_auc_examples():
    assert metrics.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[1] == 1.0
    rng = np.random.default_rng(0)
    s, g = rng.random(20_000), rng.random(20_000) < 0.3
    assert abs(metrics.roc_auc(s, g)[1] - 0.5) <= 0.05
    with pytest.raises(UndefinedAUCError):
        metrics.roc_auc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=80))
def test_auc_matches_sklearn_and_mann_whitney(rows):
    s = np.array([r[0] for r in rows], float) / 20
    g = np.array([r[1] for r in rows])
    if g.all() or not g.any():
        return
    _, auc = metrics.roc_auc(s, g)
    assert auc == pytest.approx(roc_auc_score(g, s), abs=1e-12)
    u = mannwhitneyu(s[g], s[~g]).statistic
    assert auc == pytest.approx(u / (g.sum() * (~g).sum()), abs=1e-12)
    # complement symmetry and invariance under strictly monotone transforms
    assert auc + metrics.roc_auc(1 - s, g)[1] == pytest.approx(1.0, abs=1e-12)
    assert metrics.roc_auc(np.exp(3 * s) - 7, g)[1] == pytest.approx(auc, abs=1e-12)


def test_roc_curve_endpoints():
    (fpr, tpr, thr), _ = metrics.roc_auc([0.3, 0.3, 0.7, 0.1], [1, 0, 1, 0])
    assert (fpr[0], tpr[0], thr[0]) == (0, 0, np.inf)
    assert (fpr[-1], tpr[-1]) == (1, 1)
    assert len(fpr) == 4  # +inf plus three unique thresholds


def test_pc_op_examples():
    c = Confusion(5, 1, 10, 2)
    pc, op = metrics.pc_op_aggregate([c])
    assert pc.accuracy == op.accuracy and pc.f_measure == op.f_measure
    pc, op = metrics.pc_op_aggregate([c, c])
    assert pc.accuracy == pytest.approx(op.accuracy) and pc.mcc == pytest.approx(op.mcc)
    big, small = Confusion(900, 10, 80, 10), Confusion(1, 5, 90, 4)
    pc, op = metrics.pc_op_aggregate([big, small])
    rb, rs = metrics.report(big), metrics.report(small)
    assert pc.precision == pytest.approx((rb.precision + rs.precision) / 2)
    assert op.precision == pytest.approx(901 / 916)
    assert abs(op.precision - rb.precision) < abs(pc.precision - rb.precision)
    with pytest.raises(ParameterError):
        metrics.pc_op_aggregate([])


def test_speed_performance_index():
    assert metrics.speed_performance_index(1.0, 30, 30) == 1.0
    assert metrics.speed_performance_index(0.8, 100, 30) == 0.8
    assert metrics.speed_performance_index(0.9, 15, 30) == pytest.approx(0.45)
    with pytest.raises(ParameterError):
        metrics.speed_performance_index(0.9, 0, 30)


def test_table_columns_in_percent():
    r = metrics.report(Confusion(9, 1, 89, 1), auc=0.97)
    t2 = metrics.table_columns(r, metrics.ERROR_RATE_COLUMNS)
    assert t2["Accuracy (%)"] == pytest.approx(98.0) and t2["AUC Value (%)"] == pytest.approx(97.0)
    t1 = metrics.table_columns(metrics.report(Confusion(9, 1, 89, 1)), metrics.SUMMARY_COLUMNS)
    assert t1["Recall (%)"] == pytest.approx(90.0)


def test_binary_pc_op():
    pc, op = metrics.binary_pc_op([1, 1, 0, 0, 0], [1, 0, 0, 0, 1])
    les = metrics.report(Confusion(1, 1, 2, 1))
    bg = metrics.report(Confusion(2, 1, 1, 1))
    assert pc.f_measure == pytest.approx((les.f_measure + bg.f_measure) / 2)
    assert op.accuracy == pytest.approx(0.6)
