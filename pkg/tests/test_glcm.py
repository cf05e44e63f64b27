import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.feature import graycomatrix, graycoprops

from octx import glcm, metrics
from octx.errors import EmptyPairsError, ParameterError
from oracles import naive_cooccurrence, naive_features

images = arrays(np.uint8, st.tuples(st.integers(2, 12), st.integers(2, 12)),
                elements=st.integers(0, 255))
offsets = st.sampled_from([(1, 0), (0, 1), (1, 1), (-1, 1), (2, 0), (0, -1)])


def test_catalog_has_22_named_features():
    assert glcm.N_FEATURES == 22
    assert len(set(glcm.FEATURE_NAMES)) == 22
    assert glcm.CSV_COLUMNS[0] == "f01" and glcm.CSV_COLUMNS[-1] == "f22"


# quantize

def test_quantize_constant_100_to_3():
    assert np.all(glcm.quantize(np.full((3, 3), 100), 8) == 3)


def test_quantize_256_levels_is_identity(rng):
    img = rng.integers(0, 256, (7, 5))
    assert np.array_equal(glcm.quantize(img, 256), img)


def test_quantize_extreme_bins():
    assert glcm.quantize(np.array([[0, 255]]), 2).tolist() == [[0, 1]]


@pytest.mark.parametrize("levels", [1, 257, 0])
def test_quantize_rejects_bad_levels(levels):
    with pytest.raises(ParameterError):
        glcm.quantize(np.zeros((2, 2)), levels)


@given(images, st.integers(2, 256))
def test_quantize_is_floor_rule_and_monotone(img, levels):
    q = glcm.quantize(img, levels)
    assert np.array_equal(q, np.floor(img.astype(float) * levels / 256).astype(int))
    order = np.argsort(img.ravel(), kind="stable")
    assert np.all(np.diff(q.ravel()[order]) >= 0)
    assert q.min() >= 0 and q.max() <= levels - 1


# co-occurrence

def test_constant_2x2_single_entry():
    m = glcm.cooccurrence(np.full((2, 2), 200), levels=4, offset=(1, 0), symmetric=False)
    q = 200 * 4 // 256
    expected = np.zeros((4, 4))
    expected[q, q] = 2
    assert np.array_equal(m.counts, expected)


def test_checkerboard_levels_2():
    m = glcm.cooccurrence(np.array([[0, 1], [1, 0]]), levels=2, offset=(1, 0),
                          symmetric=True, prequantized=True)
    assert np.allclose(m.normalized, [[0, 0.5], [0.5, 0]])
    f = glcm.features(m)
    assert f[glcm.FEATURE_INDEX["contrast"]] == pytest.approx(1.0)
    assert f[glcm.FEATURE_INDEX["energy"]] == pytest.approx(0.5)


def test_single_pixel_has_no_pairs():
    with pytest.raises(EmptyPairsError):
        glcm.cooccurrence(np.array([[7]]), offset=(1, 0))


def test_zero_offset_rejected():
    with pytest.raises(ParameterError):
        glcm.cooccurrence(np.zeros((3, 3)), offset=(0, 0))


@pytest.mark.parametrize("symmetric", [False, True])
def test_matches_skimage_horizontal(rng, symmetric):
    for _ in range(20):
        img = rng.integers(0, 256, (rng.integers(3, 20), rng.integers(3, 20))).astype(np.uint8)
        q = glcm.quantize(img, 8).astype(np.uint8)
        ref = graycomatrix(q, [1], [0], levels=8, symmetric=symmetric)[:, :, 0, 0]
        ours = glcm.cooccurrence(img, 8, (1, 0), symmetric)
        assert np.array_equal(ours.counts, ref)


def test_matches_skimage_vertical(rng):
    # skimage's angle pi/2 steps one row down, i.e. offset (0, 1)
    for _ in range(20):
        img = rng.integers(0, 256, (9, 11)).astype(np.uint8)
        q = glcm.quantize(img, 8).astype(np.uint8)
        ref = graycomatrix(q, [1], [np.pi / 2], levels=8, symmetric=False)[:, :, 0, 0]
        assert np.array_equal(glcm.cooccurrence(img, 8, (0, 1), False).counts, ref)


@given(images, st.integers(2, 16), offsets, st.booleans())
@settings(max_examples=60, deadline=None)
def test_matches_naive_enumeration(img, levels, offset, symmetric):
    h, w = img.shape
    if abs(offset[0]) >= w or abs(offset[1]) >= h:
        with pytest.raises(EmptyPairsError):
            glcm.cooccurrence(img, levels, offset, symmetric)
        return
    m = glcm.cooccurrence(img, levels, offset, symmetric)
    ref = naive_cooccurrence(glcm.quantize(img, levels), levels, *offset, symmetric)
    assert np.array_equal(m.counts, ref)
    assert abs(m.normalized.sum() - 1.0) < 1e-9
    if symmetric:
        assert np.array_equal(m.normalized, m.normalized.T)


def test_batch_matches_single(rng):
    pats = rng.integers(0, 256, (10, 16, 16))
    q = glcm.quantize(pats.reshape(-1, 16), 8).reshape(pats.shape)
    for off in [(1, 0), (0, 1), (1, 1)]:
        batch = glcm.cooccurrence_batch(q, 8, off, True)
        for k in range(10):
            assert np.allclose(batch[k], glcm.cooccurrence(pats[k], 8, off).normalized)


# features

def test_constant_image_features():
    for levels in (2, 8, 32):
        for off in [(1, 0), (0, 1), (2, 1)]:
            f = glcm.features(glcm.cooccurrence(np.full((5, 5), 77), levels, off))
            ix = glcm.FEATURE_INDEX
            assert f[ix["contrast"]] == 0
            assert f[ix["energy"]] == pytest.approx(1.0)
            assert f[ix["homogeneity"]] == pytest.approx(1.0)
            assert f[ix["entropy"]] == 0
            assert f[ix["correlation"]] == 0
            assert np.all(np.isfinite(f))


@given(images, st.integers(2, 12), offsets)
@settings(max_examples=40, deadline=None)
def test_features_match_naive_formulas(img, levels, offset):
    h, w = img.shape
    if abs(offset[0]) >= w or abs(offset[1]) >= h:
        return
    m = glcm.cooccurrence(img, levels, offset)
    f = glcm.features(m)
    ref = naive_features(m.normalized)
    assert np.allclose(f, ref, rtol=1e-9, atol=1e-9)
    assert np.all(np.isfinite(f))
    assert 0 < f[glcm.FEATURE_INDEX["energy"]] <= 1
    assert f[glcm.FEATURE_INDEX["contrast"]] >= 0
    assert f[glcm.FEATURE_INDEX["max_probability"]] == m.normalized.max()


def test_features_agree_with_skimage_graycoprops(rng):
    ix = glcm.FEATURE_INDEX
    for _ in range(20):
        img = rng.integers(0, 256, (16, 16)).astype(np.uint8)
        q = glcm.quantize(img, 8).astype(np.uint8)
        P = graycomatrix(q, [1], [0], levels=8, symmetric=True, normed=True)
        f = glcm.features(glcm.cooccurrence(img, 8, (1, 0)))
        assert f[ix["contrast"]] == pytest.approx(graycoprops(P, "contrast")[0, 0])
        assert f[ix["dissimilarity"]] == pytest.approx(graycoprops(P, "dissimilarity")[0, 0])
        assert f[ix["inverse_difference_moment"]] == pytest.approx(
            graycoprops(P, "homogeneity")[0, 0])
        assert f[ix["energy"]] == pytest.approx(graycoprops(P, "ASM")[0, 0])
        assert f[ix["correlation"]] == pytest.approx(graycoprops(P, "correlation")[0, 0])


@given(images, st.integers(2, 16), offsets)
@settings(max_examples=40, deadline=None)
def test_level_reversal_preserves_contrast(img, levels, offset):
    h, w = img.shape
    if abs(offset[0]) >= w or abs(offset[1]) >= h:
        return
    q = glcm.quantize(img, levels)
    a = glcm.features(glcm.cooccurrence(q, levels, offset, prequantized=True))
    b = glcm.features(glcm.cooccurrence(levels - 1 - q, levels, offset, prequantized=True))
    k = glcm.FEATURE_INDEX["contrast"]
    assert a[k] == pytest.approx(b[k])


def test_patch_features_average_offsets(rng):
    pats = rng.integers(0, 256, (4, 8, 8)).astype(np.uint8)
    got = glcm.patch_features(pats)
    for k in range(4):
        ref = np.mean([glcm.features(glcm.cooccurrence(pats[k], 8, o))
                       for o in glcm.DEFAULT_OFFSETS], axis=0)
        assert np.allclose(got[k], ref)


# fuse_score

def test_zero_weights_give_half():
    assert glcm.fuse_score(np.ones(22), np.zeros(22)) == 0.5


@given(arrays(np.float64, 22, elements=st.floats(-50, 50)),
       st.integers(0, 21), st.floats(0.01, 5), st.floats(0.001, 10))
def test_fuse_score_bounded_and_monotone(f, k, w, delta):
    weights = np.zeros(22)
    weights[k] = w
    a = glcm.fuse_score(f, weights)
    g = f.copy()
    g[k] += delta
    b = glcm.fuse_score(g, weights)
    assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
    assert b >= a
    if abs(w * f[k]) < 20 and abs(w * g[k]) < 20:
        assert b > a


def test_fuse_score_rejects_nonfinite():
    w = np.zeros(22)
    w[0] = np.nan
    with pytest.raises(ParameterError):
        glcm.fuse_score(np.zeros(22), w)


def test_default_score_ranks_lesions_above_background(default_table):
    s = glcm.fuse_score(default_table.fplus)
    # fraction of (lesion, background) pairs ordered correctly
    _, auc = metrics.roc_auc(s, default_table.gt)
    assert auc >= 0.95
