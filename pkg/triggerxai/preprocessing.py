r"""
Image preprocessing and classical features: grayscale promotion,
resize/normalize, Otsu and adaptive thresholds, GLCM texture, colour
histograms, colour moments and Gini impurity.
"""
import warnings
from collections import namedtuple
from fractions import Fraction
from typing import Dict, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel
from skimage.feature import graycomatrix, graycoprops

from .errors import ClampWarning
from .numeric import as_grid, as_image, as_prob_vector, bilinear_resize
from .typing import Grid2D, ImageRGB


__all__ = [
    'GLCM_ANGLES',
    'GlcmMatrix',
    'ColorHistogram',
    'ChannelStats',
    'gray_to_rgb',
    'rgb_to_gray',
    'resize_normalize',
    'quantize',
    'otsu_threshold',
    'otsu_mask',
    'adaptive_threshold',
    'glcm',
    'glcm_contrast',
    'glcm_features',
    'color_histogram',
    'gini_impurity',
    'channel_stats',
    'excess_green',
    'leaf_mask',
    'yellow_band',
    'red_green_ratio_map',
]


GLCM_ANGLES = (0, 45, 90, 135)
# (row, col) step for distance 1
_OFFSETS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}
RATIO_EPS = 1e-6
RATIO_CAP = 1e6
STD_TOL = 1e-9


class GlcmMatrix(BaseModel):
    r"""
    Normalized symmetric co-occurrence probabilities P(i,j | d, theta)
    """
    levels: int
    distance: int
    angle: int
    counts: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class ColorHistogram(BaseModel):
    r""" frequencies: shape (3, bins), each row sums to 1 """
    bins: int
    frequencies: np.ndarray

    class Config:
        arbitrary_types_allowed = True


ChannelStats = namedtuple('ChannelStats', ['mean', 'std', 'skewness', 'red_green_ratio'])
r"""
- mean, std, skewness: per-channel tuples (R, G, B), population moments
- red_green_ratio: mean(R) / (mean(G) + 1e-6), capped at 1e6
"""


def gray_to_rgb(gray: Grid2D) -> ImageRGB:
    gray = as_grid(gray, 'gray')
    if gray.min() < 0 or gray.max() > 1:
        warnings.warn('gray values outside [0, 1] were clamped', ClampWarning)
        gray = gray.clip(0, 1)
    return np.stack([gray, gray, gray]).astype(np.float32)


def rgb_to_gray(img: ImageRGB) -> Grid2D:
    r""" luminance as the mean of the three planes """
    img = as_image(img)
    return img.astype(np.float64).mean(axis=0)


def resize_normalize(img: ImageRGB, h: int, w: int) -> ImageRGB:
    img = as_image(img)
    if h < 1 or w < 1:
        raise ValueError(f'output size should be positive, got ({h}, {w})')
    if img.shape[1:] == (h, w):
        return img.copy()
    planes = [bilinear_resize(img[c], h, w) for c in range(3)]
    return np.stack(planes).clip(0, 1).astype(np.float32)


def quantize(gray: Grid2D, levels: int) -> np.ndarray:
    r""" values in [0,1] -> integer levels 0..levels-1 """
    gray = as_grid(gray, 'gray').clip(0, 1)
    return np.minimum(np.floor(gray * levels), levels - 1).astype(np.int64)


def _otsu_levels(gray: Grid2D, levels: int) -> np.ndarray:
    gray = as_grid(gray, 'gray').clip(0, 1)
    return np.rint(gray * (levels - 1)).astype(np.int64)


def otsu_threshold(gray: Grid2D, levels: int = 256) -> int:
    r"""
    Threshold level t* maximizing w1(t) w2(t) [mu1(t) - mu2(t)]^2 where class 1
    holds levels <= t. Scores are compared exactly (integer cross products);
    ties go to the smallest t.
    """
    q = _otsu_levels(gray, levels)
    hist = np.bincount(q.ravel(), minlength=levels)
    if np.count_nonzero(hist) < 2:
        raise ValueError('degenerate histogram')
    N = int(hist.sum())
    S = int((hist * np.arange(levels)).sum())
    n1 = 0
    s1 = 0
    best_t, best = None, None
    for t in range(levels - 1):
        n1 += int(hist[t])
        s1 += t * int(hist[t])
        n2 = N - n1
        if n1 == 0 or n2 == 0:
            score = Fraction(0)
        else:
            # N^2 * w1 w2 (mu1-mu2)^2 = (N s1 - n1 S)^2 / (n1 n2) up to the constant N^2
            score = Fraction((N * s1 - n1 * S) ** 2, n1 * n2)
        if best is None or score > best:
            best_t, best = t, score
    return best_t


def otsu_mask(gray: Grid2D, levels: int = 256) -> Grid2D:
    t = otsu_threshold(gray, levels)
    return (_otsu_levels(gray, levels) > t).astype(np.float64)


def adaptive_threshold(gray: Grid2D, block: int = 15, offset: float = 0.0) -> Grid2D:
    r""" pixel is foreground when it exceeds the mean of its block x block neighbourhood minus offset """
    gray = as_grid(gray, 'gray')
    if block < 1 or block % 2 == 0:
        raise ValueError(f'block should be a positive odd integer, got {block}')
    r = block // 2
    windows = sliding_window_view(np.pad(gray, r, mode='edge'), (block, block))
    local_mean = windows.mean(axis=(-2, -1))
    return (gray > local_mean - offset).astype(np.float64)


def glcm(gray: Grid2D, d: int = 1, theta: int = 0, levels: int = 8) -> GlcmMatrix:
    if d < 1:
        raise ValueError(f'distance should be >= 1, got {d}')
    if theta not in _OFFSETS:
        raise ValueError(f'angle should be one of {GLCM_ANGLES}, got {theta}')
    if not 2 <= levels <= 256:
        raise ValueError(f'levels should be in [2, 256], got {levels}')
    q = quantize(gray, levels)
    dr, dc = _OFFSETS[theta][0] * d, _OFFSETS[theta][1] * d
    if abs(dr) >= q.shape[0] or abs(dc) >= q.shape[1]:
        raise ValueError(f'image {q.shape} smaller than offset ({dr}, {dc})')
    counts = graycomatrix(q.astype(np.uint8), [d], [np.deg2rad(theta)],
                          levels=levels, symmetric=True, normed=True)
    return GlcmMatrix(levels=levels, distance=d, angle=theta, counts=counts[:, :, 0, 0])


def _graycoprop(m: GlcmMatrix, prop: str) -> float:
    return float(graycoprops(m.counts[:, :, None, None], prop)[0, 0])


def glcm_contrast(m: GlcmMatrix) -> float:
    return _graycoprop(m, 'contrast')


def glcm_features(m: GlcmMatrix) -> Dict[str, float]:
    feats = {prop: _graycoprop(m, prop) for prop in ('contrast', 'dissimilarity', 'homogeneity', 'energy')}
    # older graycoprops releases have no entropy
    nz = m.counts[m.counts > 0]
    feats['entropy'] = float(-(nz * np.log(nz)).sum())
    return feats


def color_histogram(img: ImageRGB, bins: int = 8) -> ColorHistogram:
    if bins < 2:
        raise ValueError(f'bins should be >= 2, got {bins}')
    img = as_image(img).astype(np.float64)
    idx = np.minimum(np.floor(img * bins), bins - 1).astype(np.int64)
    N = img.shape[1] * img.shape[2]
    freqs = np.stack([np.bincount(idx[c].ravel(), minlength=bins) / N for c in range(3)])
    return ColorHistogram(bins=bins, frequencies=freqs)


def gini_impurity(class_probs: Sequence[float]) -> float:
    p = as_prob_vector(class_probs)
    if p.size < 2:
        raise ValueError('gini impurity needs at least 2 classes')
    return float(1 - (p ** 2).sum())


def channel_stats(img: ImageRGB) -> ChannelStats:
    img = as_image(img).astype(np.float64)
    flat = img.reshape(3, -1)
    mean = flat.mean(axis=1)
    centered = flat - mean[:, None]
    std = np.sqrt((centered ** 2).mean(axis=1))
    third = (centered ** 3).mean(axis=1)
    flat_std = std <= STD_TOL
    skew = np.where(flat_std, 0.0, third / np.where(flat_std, 1, std) ** 3)
    std = np.where(flat_std, 0.0, std)
    ratio = min(mean[0] / (mean[1] + RATIO_EPS), RATIO_CAP)
    return ChannelStats(tuple(mean), tuple(std), tuple(skew), float(ratio))


def excess_green(img: ImageRGB) -> Grid2D:
    r""" (2G - R - B) rescaled from [-2, 2] to [0, 1] """
    img = as_image(img).astype(np.float64)
    return ((2 * img[1] - img[0] - img[2]) + 2) / 4


def leaf_mask(img: ImageRGB) -> Grid2D:
    r""" foreground (leaf) mask by Otsu on the excess-green index; all-ones when degenerate """
    exg = excess_green(img)
    try:
        return otsu_mask(exg)
    except ValueError:
        return np.ones_like(exg)


def yellow_band(img: ImageRGB, r_min: float = 0.5, g_min: float = 0.5, b_max: float = 0.35) -> Grid2D:
    r""" per-pixel yellow rule R > r_min and G > g_min and B < b_max """
    img = as_image(img).astype(np.float64)
    return ((img[0] > r_min) & (img[1] > g_min) & (img[2] < b_max)).astype(np.float64)


def red_green_ratio_map(img: ImageRGB) -> Grid2D:
    img = as_image(img).astype(np.float64)
    return np.minimum(img[0] / (img[1] + RATIO_EPS), RATIO_CAP)
