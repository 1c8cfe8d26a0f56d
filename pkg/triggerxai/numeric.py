r"""
Deterministic numeric primitives shared by every other module.

Conventions:
- Grid2D: 2-D float64 array (H, W)
- ImageRGB: channel-first array (3, H, W) in [0, 1]
- ProbVector: 1-D float64 array summing to 1
"""
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, validator

from .typing import Grid2D, ImageRGB, ProbVector


__all__ = [
    'as_grid',
    'as_image',
    'as_prob_vector',
    'softmax',
    'shannon_entropy',
    'normalize01',
    'bilinear_resize',
    'cosine_flat',
    'ThresholdRule',
    'binarize',
    'iou_binary',
    'pairwise_sum',
    'spatial_entropy',
]


PROB_TOL = 1e-6
FLAT_RANGE_TOL = 1e-12


def as_grid(values, name: str = 'grid') -> Grid2D:
    grid = np.asarray(values, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ValueError(f'{name} should be a non-empty 2-D array, got shape {grid.shape}')
    if not np.all(np.isfinite(grid)):
        raise ValueError(f'{name} has non-finite values')
    return grid


def as_image(values, dtype=np.float32, clamp: bool = True) -> ImageRGB:
    image = np.asarray(values, dtype=dtype)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f'image should have shape (3,H,W), got {image.shape}')
    if not np.all(np.isfinite(image)):
        raise ValueError('image has non-finite values')
    if clamp:
        image = image.clip(0, 1)
    return image


def as_prob_vector(values) -> ProbVector:
    p = np.asarray(values, dtype=np.float64).ravel()
    if p.size < 1:
        raise ValueError('empty probability vector')
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        raise ValueError('probability entries should lie in [0, 1]')
    if abs(p.sum() - 1) > PROB_TOL:
        raise ValueError(f'probabilities should sum to 1, got {p.sum()}')
    return p


def softmax(logits: Sequence[float]) -> ProbVector:
    z = np.asarray(logits, dtype=np.float64).ravel()
    if z.size == 0:
        raise ValueError('empty logits')
    if not np.all(np.isfinite(z)):
        raise ValueError('non-finite logit')
    e = np.exp(z - z.max())
    return e / e.sum()


def shannon_entropy(p: Sequence[float]) -> float:
    r""" entropy in nats, 0*ln(0) := 0 """
    p = as_prob_vector(p)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def normalize01(g: Grid2D) -> Grid2D:
    g = as_grid(g)
    lo, hi = g.min(), g.max()
    if hi - lo <= FLAT_RANGE_TOL * max(1.0, abs(hi)):
        return np.zeros_like(g)
    return ((g - lo) / (hi - lo)).clip(0, 1)


def _interp_axis(n_in: int, n_out: int):
    pos = np.linspace(0, n_in - 1, n_out) if n_out > 1 else np.zeros(1)
    lo = np.floor(pos).astype(int).clip(0, n_in - 1)
    hi = (lo + 1).clip(0, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def bilinear_resize(g: Grid2D, out_h: int, out_w: int) -> Grid2D:
    r"""
    Corner-aligned bilinear interpolation: output corners sample input corners.
    Same size returns an exact copy.
    """
    g = as_grid(g)
    if out_h < 1 or out_w < 1:
        raise ValueError(f'output size should be positive, got ({out_h}, {out_w})')
    H, W = g.shape
    if (H, W) == (out_h, out_w):
        return g.copy()
    y0, y1, fy = _interp_axis(H, out_h)
    x0, x1, fx = _interp_axis(W, out_w)
    fy = fy[:, None]
    fx = fx[None, :]
    top = g[y0][:, x0] * (1 - fx) + g[y0][:, x1] * fx
    bottom = g[y1][:, x0] * (1 - fx) + g[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def cosine_flat(a: Grid2D, b: Grid2D) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f'shape mismatch {a.shape} vs {b.shape}')
    a = a.ravel()
    b = b.ravel()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError('zero-norm map')
    return float(np.clip(np.dot(a, b) / (na * nb), -1, 1))


class ThresholdRule(BaseModel):
    r"""
    mode 'relative': threshold = fraction * max(g)
    mode 'absolute': threshold = value
    """
    mode: str = 'relative'
    fraction: float = 0.5
    value: float = 0.5

    @validator('mode')
    def _check_mode(cls, v):
        if v not in ('relative', 'absolute'):
            raise ValueError(f'Unknown threshold mode {v}')
        return v

    @validator('fraction')
    def _check_fraction(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('fraction should lie in [0, 1]')
        return v

    def threshold(self, g: Grid2D) -> float:
        if self.mode == 'relative':
            return self.fraction * float(np.max(g))
        return self.value


def binarize(g: Grid2D, rule: Optional[ThresholdRule] = None) -> Grid2D:
    g = as_grid(g)
    rule = rule or ThresholdRule()
    thr = rule.threshold(g)
    # an all-zero map is "nothing salient", never "everything salient"
    return ((g >= thr) & (g > 0)).astype(np.float64)


def iou_binary(a: Grid2D, b: Grid2D) -> float:
    a = np.asarray(a) > 0.5
    b = np.asarray(b) > 0.5
    if a.shape != b.shape:
        raise ValueError(f'mask shape mismatch {a.shape} vs {b.shape}')
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def pairwise_sum(parts: Iterable[Union[np.ndarray, float]]):
    r""" Order-fixed tree reduction; the result depends only on the order of `parts`. """
    items: List = list(parts)
    if not items:
        raise ValueError('nothing to sum')
    while len(items) > 1:
        paired = [items[i] + items[i+1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


def spatial_entropy(g: Grid2D) -> float:
    r""" entropy (nats) of the map viewed as a distribution over pixels """
    g = as_grid(g).clip(0, None)
    total = g.sum()
    if total <= 0:
        return float(np.log(g.size))
    p = (g / total).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
