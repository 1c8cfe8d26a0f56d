import warnings

import pytest
import numpy as np

from triggerxai import preprocessing
from triggerxai.errors import ClampWarning


def test_gray_to_rgb():
    out = preprocessing.gray_to_rgb(np.full((4, 4), 0.5))
    assert out.shape == (3, 4, 4)
    assert np.allclose(out, 0.5)
    with pytest.warns(ClampWarning):
        out = preprocessing.gray_to_rgb([[1.5, -0.5]])
    assert np.array_equal(out[0], [[1, 0]])


def test_resize_normalize():
    img = np.random.default_rng(0).random((3, 6, 6)).astype(np.float32)
    assert np.array_equal(preprocessing.resize_normalize(img, 6, 6), img)
    out = preprocessing.resize_normalize(img, 12, 9)
    assert out.shape == (3, 12, 9)
    assert out.min() >= 0 and out.max() <= 1
    with pytest.raises(ValueError):
        preprocessing.resize_normalize(img, 0, 4)


def test_otsu_bimodal():
    gray = np.zeros((4, 4))
    gray[:, 2:] = 1
    t = preprocessing.otsu_threshold(gray)
    assert 0 <= t < 255
    assert np.array_equal(preprocessing.otsu_mask(gray), gray)
    with pytest.raises(ValueError, match='degenerate histogram'):
        preprocessing.otsu_threshold(np.full((3, 3), 0.4))


def test_otsu_tie_goes_to_smallest():
    # two levels far apart: every t between them scores the same
    gray = np.array([[10, 200]]) / 255
    assert preprocessing.otsu_threshold(gray) == 10


def test_adaptive_threshold():
    gray = np.zeros((9, 9))
    gray[4, 4] = 1
    out = preprocessing.adaptive_threshold(gray, block=3)
    assert out[4, 4] == 1
    assert out.sum() == 1
    with pytest.raises(ValueError):
        preprocessing.adaptive_threshold(gray, block=4)


def test_glcm():
    m = preprocessing.glcm(np.full((4, 4), 0.3), levels=8)
    q = int(0.3 * 8)
    assert m.counts[q, q] == pytest.approx(1.0)

    checker = np.array([[0, 1], [1, 0]], dtype=np.float64)
    m = preprocessing.glcm(checker, d=1, theta=0, levels=2)
    assert m.counts[0, 1] == pytest.approx(0.5)
    assert m.counts[1, 0] == pytest.approx(0.5)
    assert m.counts[0, 0] == 0 and m.counts[1, 1] == 0
    assert preprocessing.glcm_contrast(m) == pytest.approx(1.0)

    with pytest.raises(ValueError):
        preprocessing.glcm(checker, d=2, theta=0, levels=2)
    with pytest.raises(ValueError):
        preprocessing.glcm(checker, theta=30)


def test_glcm_symmetric_and_normalized():
    gray = np.random.default_rng(1).random((10, 10))
    for theta in preprocessing.GLCM_ANGLES:
        m = preprocessing.glcm(gray, 1, theta, 8)
        assert np.allclose(m.counts, m.counts.T)
        assert m.counts.sum() == pytest.approx(1.0)
        assert preprocessing.glcm_contrast(m) >= 0
    diag = preprocessing.glcm(np.full((5, 5), 0.9), levels=4)
    feats = preprocessing.glcm_features(diag)
    assert feats['contrast'] == 0
    assert feats['homogeneity'] == pytest.approx(1.0)
    assert feats['energy'] == pytest.approx(1.0)


def test_glcm_diagonal_offsets():
    q = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]])
    gray = (q + 0.5) / 3
    m = preprocessing.glcm(gray, 1, 45, 3)
    assert np.allclose(m.counts, np.diag([0.25, 0.25, 0.5]))

    m = preprocessing.glcm(gray, 1, 135, 3)
    expected = np.array([[0, 0.25, 0.125], [0.25, 0, 0.125], [0.125, 0.125, 0]])
    assert np.allclose(m.counts, expected)
    feats = preprocessing.glcm_features(m)
    assert feats['contrast'] == pytest.approx(1.75)
    assert feats['dissimilarity'] == pytest.approx(1.25)
    assert feats['homogeneity'] == pytest.approx(0.425)
    assert feats['energy'] == pytest.approx(np.sqrt(0.1875))
    assert feats['entropy'] == pytest.approx(0.5 * np.log(32))

    with pytest.raises(ValueError):
        preprocessing.glcm(gray, levels=300)


def test_color_histogram():
    img = np.zeros((3, 4, 4))
    img[1] = 0.7
    h = preprocessing.color_histogram(img, bins=4)
    assert h.frequencies.shape == (3, 4)
    assert h.frequencies[0, 0] == 1 and h.frequencies[1, 2] == 1

    img = np.zeros((3, 4, 4))
    img[0, :, :2] = 1
    img[1, :, 2:] = 1
    h = preprocessing.color_histogram(img, bins=2)
    assert np.allclose(h.frequencies[0], [0.5, 0.5])
    assert np.allclose(h.frequencies.sum(axis=1), 1)


def test_gini_impurity():
    assert preprocessing.gini_impurity([0.6, 0.3, 0.1]) == pytest.approx(0.54)
    assert preprocessing.gini_impurity([1, 0, 0, 0]) == 0
    assert preprocessing.gini_impurity([0.25] * 4) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        preprocessing.gini_impurity([1.0])


def test_channel_stats():
    stats = preprocessing.channel_stats(np.full((3, 4, 4), 0.5))
    assert stats.std == (0, 0, 0)
    assert stats.skewness == (0, 0, 0)
    assert stats.red_green_ratio == pytest.approx(1.0, abs=1e-5)

    red = np.zeros((3, 4, 4))
    red[0] = 1
    assert preprocessing.channel_stats(red).red_green_ratio == pytest.approx(1e6)

    img = np.random.default_rng(2).random((3, 8, 8))
    stats = preprocessing.channel_stats(img)
    assert np.allclose(stats.mean, img.reshape(3, -1).mean(axis=1), atol=1e-6)


def test_leaf_mask():
    img = np.zeros((3, 8, 8))
    img[1, 2:6, 2:6] = 0.8
    mask = preprocessing.leaf_mask(img)
    assert mask.sum() == 16
    assert mask[3, 3] == 1
    with warnings.catch_warnings():
        warnings.simplefilter('error')
        assert np.all(preprocessing.leaf_mask(np.full((3, 4, 4), 0.5)) == 1)


def test_yellow_band_and_ratio():
    img = np.zeros((3, 2, 2))
    img[:, 0, 0] = (0.9, 0.85, 0.1)
    img[:, 1, 1] = (0.5, 0.25, 0.0)
    assert np.array_equal(preprocessing.yellow_band(img), [[1, 0], [0, 0]])
    ratio = preprocessing.red_green_ratio_map(img)
    assert ratio[1, 1] == pytest.approx(2.0, rel=1e-5)


def test_rgb_to_gray():
    img = np.stack([np.full((2, 2), v) for v in (0.3, 0.6, 0.9)])
    assert np.allclose(preprocessing.rgb_to_gray(img), 0.6)
    with pytest.raises(ValueError):
        preprocessing.rgb_to_gray(np.zeros((2, 2)))
