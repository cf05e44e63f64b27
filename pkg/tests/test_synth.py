import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from octx import patching, synth
from octx.errors import ParameterError


def _small(seed=0, n=3):
    return synth.generate(n_frames=n, frame_size=(128, 128), semi_axis_range=(14.0, 30.0),
                          seed=seed)


def _labels(frame, P=16):
    recs = patching.decompose(frame.image, P)
    return np.array([r.gt for r in patching.label_patches(recs, frame.masks,
                                                          shape=frame.image.shape)])


def test_generation_is_deterministic():
    a, b = _small(4), _small(4)
    for fa, fb in zip(a.frames, b.frames):
        assert fa.image.tobytes() == fb.image.tobytes()
    assert a.manifest == b.manifest
    assert _small(5).frames[0].image.tobytes() != a.frames[0].image.tobytes()


def test_frames_are_independent_of_count():
    a, b = _small(2, n=2), _small(2, n=4)
    assert a.frames[1].image.tobytes() == b.frames[1].image.tobytes()


def test_masks_inside_frame():
    ds = synth.generate(n_frames=20, seed=1)
    w, h = ds.config.frame_size
    for f in ds.frames:
        for m in f.masks:
            for e in m.ellipses:
                hx, hy = e.half_extent()
                assert hx <= e.cx <= w - 1 - hx and hy <= e.cy <= h - 1 - hy


def test_config_validation():
    with pytest.raises(ParameterError):
        synth.generate(n_frames=0)
    with pytest.raises(ParameterError):
        synth.generate(class_mix={"GU": 0.5, "GB": 0.4})
    with pytest.raises(ParameterError):
        synth.generate(label_noise=1.0)
    cfg = synth.GeneratorConfig(n_frames=3)
    assert synth.GeneratorConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_noise_labels_equal_geometry(default_dataset, default_table):
    noisy, flipped = synth.plant_noise(default_table.gt, 0.0, seed=3)
    assert flipped.size == 0 and np.array_equal(noisy, default_table.gt)
    f = default_dataset.frames[0]
    lab = _labels(f, default_table.patch_size)
    assert np.array_equal(default_table.gt[default_table.frame_id == 0], lab)


def test_plant_noise_counts():
    y = np.zeros(100, bool)
    noisy, ids = synth.plant_noise(y, 0.2, seed=1)
    assert ids.size == 20 and noisy.sum() == 20 and np.all(np.diff(ids) > 0)
    again, ids2 = synth.plant_noise(y, 0.2, seed=1)
    assert np.array_equal(ids, ids2)
    clean = np.setdiff1d(np.arange(100), ids)
    assert np.array_equal(noisy[clean], y[clean])
    with pytest.raises(ParameterError):
        synth.plant_noise(y, 1.0, 0)


def test_default_features_linearly_separable(default_table):
    t = default_table
    train = t.train_mask(0.7, seed=0)
    sc = StandardScaler().fit(t.fplus[train])
    clf = LogisticRegression(max_iter=2000).fit(sc.transform(t.fplus[train]), t.gt[train])
    assert clf.score(sc.transform(t.fplus[~train]), t.gt[~train]) >= 0.95


def test_augment_identities():
    f = _small(0, 1).frames[0]
    r4 = synth.rotate90(f, 4)
    assert np.array_equal(r4.image, f.image)
    hh = synth.hflip(synth.hflip(f))
    assert np.array_equal(hh.image, f.image)
    assert np.array_equal(_labels(hh), _labels(f))
    out = synth.augment(f, seed=1)
    assert len(out) == 6
    j1, j2 = synth.augment(f, ("jitter",), seed=2), synth.augment(f, ("jitter",), seed=2)
    assert np.array_equal(j1[0].image, j2[0].image)
    with pytest.raises(ParameterError):
        synth.augment(f, ("scale",))
    with pytest.raises(ParameterError):
        synth.augment(f, ("warp",))


def _grid(lab, P=16, size=128):
    n = size // P
    return lab.reshape(n, n)


@given(st.integers(0, 200), st.sampled_from(["r1", "r2", "r3", "h", "v"]))
@settings(max_examples=15, deadline=None)
def test_transforms_commute_with_labeling(seed, op):
    f = _small(seed, 1).frames[0]
    g = _grid(_labels(f))
    if op[0] == "r":
        k = int(op[1])
        t, expect = synth.rotate90(f, k), np.rot90(g, k)
    elif op == "h":
        t, expect = synth.hflip(f), g[:, ::-1]
    else:
        t, expect = synth.vflip(f), g[::-1]
    # image moves like the array, masks like the image
    got = _grid(_labels(t))
    assert np.array_equal(got, expect)
    assert _labels(t).sum() == _labels(f).sum()
