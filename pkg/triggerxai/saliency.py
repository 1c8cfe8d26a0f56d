r"""
Attribution engines producing per-pixel saliency against any ModelBackend.

- gradcam: gradient-weighted activations of a spatial layer
- fullgrad: input-gradient term plus per-layer bias-gradient terms
- rise: black-box average of random masks weighted by masked scores

TCAV lives in `triggerxai.tcav` and registers itself on `method_manager`.
"""
import logging
import math
import warnings
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, validator

from .base import BaseManager
from .errors import EmptySaliencyWarning, UnsupportedMethodError
from .model import ModelBackend
from .numeric import (
    as_grid, as_image, bilinear_resize, cosine_flat, normalize01, pairwise_sum, softmax,
)
from .typing import Grid2D, ImageRGB


__all__ = [
    'METHODS',
    'EMPTY_SALIENCY',
    'SaliencyMap',
    'RiseConfig',
    'FullGradDecomposition',
    'method_manager',
    'explain_method',
    'grad_cam',
    'full_grad',
    'full_grad_decomposition',
    'rise_masks',
    'rise_saliency',
    'rise_alignment_weight',
]


logger = logging.getLogger(__name__)

METHODS = ('gradcam', 'fullgrad', 'rise', 'tcav')
MAP_TAGS = METHODS + ('tcav-concept', 'fused-intra', 'fused-inter', 'fused-weighted', 'fused-gated')
EMPTY_SALIENCY = 'empty saliency'


class SaliencyMap(BaseModel):
    r"""
    Normalized per-class attribution grid at input resolution.

    `extras` carries method-specific scalars (e.g. the TCAV score or the
    CAV accuracy) that end up in the report.
    """
    grid: np.ndarray
    method: str
    model_id: str = ''
    class_index: int = 0
    layer: Optional[str] = None
    flags: List[str] = []
    extras: Dict[str, float] = {}

    class Config:
        arbitrary_types_allowed = True

    @validator('grid')
    def _check_grid(cls, v):
        v = as_grid(v, 'saliency grid')
        if v.min() < 0 or v.max() > 1:
            raise ValueError('saliency grid should lie in [0, 1]')
        return v

    @validator('method')
    def _check_method(cls, v):
        if v not in MAP_TAGS:
            raise ValueError(f'Unknown saliency method tag "{v}"')
        return v

    @property
    def shape(self):
        return self.grid.shape

    @property
    def empty(self) -> bool:
        return EMPTY_SALIENCY in self.flags


def make_map(raw: Grid2D, method: str, **kwargs) -> SaliencyMap:
    r""" normalize01 a raw map and flag it when nothing is salient """
    grid = normalize01(raw)
    flags = list(kwargs.pop('flags', []))
    if not np.any(grid > 0) and EMPTY_SALIENCY not in flags:
        warnings.warn(f'{method} produced an all-zero map', EmptySaliencyWarning)
        flags.append(EMPTY_SALIENCY)
    return SaliencyMap(grid=grid, method=method, flags=flags, **kwargs)


class MethodManager(BaseManager):
    def get_mode(self, name: str) -> str:
        return str(name).strip().lower()


method_manager = MethodManager()


def explain_method(
        name: str,
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        **kwargs,
        ) -> SaliencyMap:
    r"""
    Dispatch to a registered attribution method. Keyword arguments are
    forwarded untouched (e.g. `layer=` for gradcam, `cfg=` for rise).
    """
    mode, func = method_manager.get_func(name)
    if func is None:
        raise UnsupportedMethodError(f'Unknown saliency method "{name}". Valid: {method_manager.modes}')
    logger.debug(f'Running {mode} on {model.model_id} for class {class_index}')
    return func(model, image, class_index, **kwargs)


def _upsample(g: Grid2D, h: int, w: int) -> Grid2D:
    if g.shape == (h, w):
        return g
    return bilinear_resize(g, h, w)


@method_manager.register('gradcam')
def grad_cam(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        layer: Optional[str] = None,
        ) -> SaliencyMap:
    model.check_class(class_index)
    layer = layer or model.spatial_layers[-1]
    model.check_layer(layer)
    image = as_image(image)
    fwd = model.forward(image)
    phi = np.asarray(fwd.tape[layer], dtype=np.float64)
    if phi.ndim != 3:
        raise ValueError(f'layer "{layer}" is not spatial (activation shape {phi.shape})')
    grads = np.asarray(model.grad_wrt_activations(fwd.tape, class_index, layer), dtype=np.float64)
    if grads.shape != phi.shape:
        raise ValueError(f'gradient shape {grads.shape} does not match activation {phi.shape}')
    delta = grads.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(delta, phi, axes=1), 0)
    cam = normalize01(cam)
    H, W = image.shape[1:]
    return make_map(
        _upsample(cam, H, W), 'gradcam',
        model_id=model.model_id, class_index=class_index, layer=layer,
    )


class FullGradDecomposition(namedtuple('FullGradDecomposition', ['input_term', 'bias_terms', 'logit'])):
    r"""
    Signed scalar contributions of one FullGrad explanation.

    - input_term: sum(x * df/dx)
    - bias_terms: {layer: sum(b * df/db)}
    - logit: f(x), the pre-softmax class score
    """
    __slots__ = ()

    @property
    def total(self) -> float:
        return self.input_term + sum(self.bias_terms.values())


def _check_fullgrad(model: ModelBackend):
    if not model.supports_bias_gradients:
        raise UnsupportedMethodError('fullgrad unsupported')


def full_grad_decomposition(model: ModelBackend, image: ImageRGB, class_index: int) -> FullGradDecomposition:
    r""" completeness report; for piecewise-linear nets `total == logit` """
    _check_fullgrad(model)
    model.check_class(class_index)
    x = as_image(image, dtype=np.float64)
    logit = float(model.forward(x).logits[class_index])
    gx = model.grad_wrt_input(x, class_index)
    biases = model.biases()
    bias_grads = model.grad_wrt_biases(x, class_index)
    bias_terms = {name: float(np.dot(biases[name], bias_grads[name])) for name in bias_grads}
    return FullGradDecomposition(float((x * gx).sum()), bias_terms, logit)


@method_manager.register('fullgrad')
def full_grad(model: ModelBackend, image: ImageRGB, class_index: int) -> SaliencyMap:
    _check_fullgrad(model)
    model.check_class(class_index)
    x = as_image(image, dtype=np.float64)
    H, W = x.shape[1:]
    gx = model.grad_wrt_input(x, class_index)
    total = np.abs(x * gx).sum(axis=0)
    biases = model.biases()
    for name, g in model.grad_wrt_biases(x, class_index, spatial=True).items():
        b = biases[name]
        if g.ndim == 3:
            term = np.abs(b.reshape(-1, 1, 1) * g).sum(axis=0)
            total = total + _upsample(term, H, W)
        else:
            # non-spatial layers spread their contribution uniformly
            total = total + np.abs(b * g).sum() / (H * W)
    return make_map(total, 'fullgrad', model_id=model.model_id, class_index=class_index)


class RiseConfig(BaseModel):
    n_masks: int = 4000
    cells: int = 7
    p: float = 0.5
    seed: int = 0
    unbias: bool = True
    hard_masks: bool = False
    batch_size: int = 64
    workers: int = 1
    score: str = 'logit'

    class Config:
        extra = 'forbid'

    @validator('n_masks')
    def _check_n(cls, v):
        if v < 1:
            raise ValueError('rise.n_masks should be >= 1')
        return v

    @validator('cells')
    def _check_cells(cls, v):
        if v < 2:
            raise ValueError('rise.cells should be >= 2')
        return v

    @validator('p')
    def _check_p(cls, v):
        if not 0 < v < 1:
            raise ValueError('rise.p should lie in (0, 1)')
        return v

    @validator('batch_size', 'workers')
    def _check_positive(cls, v):
        if v < 1:
            raise ValueError('should be >= 1')
        return v

    @validator('score')
    def _check_score(cls, v):
        if v not in ('logit', 'prob'):
            raise ValueError(f'rise.score should be "logit" or "prob", got {v}')
        return v


def _nearest_resize(g: np.ndarray, h: int, w: int) -> np.ndarray:
    rows = np.minimum(np.arange(h) * g.shape[0] // h, g.shape[0] - 1)
    cols = np.minimum(np.arange(w) * g.shape[1] // w, g.shape[1] - 1)
    return g[rows][:, cols]


def _rise_mask(cfg: RiseConfig, index: int, h: int, w: int) -> np.ndarray:
    rng = np.random.default_rng((cfg.seed, index))
    s = cfg.cells
    grid = (rng.random((s, s)) < cfg.p).astype(np.float64)
    cell_h, cell_w = math.ceil(h / s), math.ceil(w / s)
    up_h, up_w = (s + 1) * cell_h, (s + 1) * cell_w
    if cfg.hard_masks:
        up = _nearest_resize(grid, up_h, up_w)
    else:
        up = bilinear_resize(grid, up_h, up_w)
    dy = int(rng.integers(0, cell_h))
    dx = int(rng.integers(0, cell_w))
    return up[dy:dy + h, dx:dx + w]


def rise_masks(cfg: RiseConfig, h: int, w: int, start: int = 0, count: Optional[int] = None) -> np.ndarray:
    r"""
    Masks `start .. start+count-1` of the sequence, shape (count, h, w).
    Mask i depends only on (cfg, i, h, w).
    """
    if h < 1 or w < 1:
        raise ValueError(f'mask size should be positive, got ({h}, {w})')
    if count is None:
        count = cfg.n_masks - start
    return np.stack([_rise_mask(cfg, i, h, w) for i in range(start, start + count)])


def _rise_batch(model: ModelBackend, x: np.ndarray, class_index: int, cfg: RiseConfig, start: int, count: int):
    masks = rise_masks(cfg, x.shape[1], x.shape[2], start, count)
    logits = np.asarray(model.predict(x[None] * masks[:, None]), dtype=np.float64)
    if cfg.score == 'prob':
        scores = np.array([softmax(z)[class_index] for z in logits])
    else:
        scores = logits[:, class_index]
    return np.tensordot(scores, masks, axes=1), masks.sum(axis=0)


@method_manager.register('rise')
def rise_saliency(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        cfg: Optional[RiseConfig] = None,
        ) -> SaliencyMap:
    r"""
    Black-box: only `model.predict` is called. Batches are reduced in
    sequence order with `pairwise_sum`, so the result does not depend on
    `cfg.workers`.
    """
    cfg = cfg or RiseConfig()
    if cfg.n_masks < 1:
        raise ValueError('rise needs at least one mask')
    model.check_class(class_index)
    x = as_image(image, dtype=np.float64)
    starts = list(range(0, cfg.n_masks, cfg.batch_size))
    counts = [min(cfg.batch_size, cfg.n_masks - s) for s in starts]

    def run(args):
        return _rise_batch(model, x, class_index, cfg, *args)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, zip(starts, counts)))
    else:
        parts = [run(a) for a in zip(starts, counts)]
    weighted = pairwise_sum([p[0] for p in parts])
    coverage = pairwise_sum([p[1] for p in parts])
    if cfg.unbias:
        sal = np.divide(weighted, coverage, out=np.zeros_like(weighted), where=coverage > 0)
    else:
        sal = weighted / cfg.n_masks
    logger.debug(f'RISE {cfg.n_masks} masks in {len(starts)} batches, workers={cfg.workers}')
    return make_map(sal, 'rise', model_id=model.model_id, class_index=class_index)


def _as_values(m: Any) -> np.ndarray:
    return m.grid if isinstance(m, SaliencyMap) else np.asarray(m, dtype=np.float64)


def rise_alignment_weight(rise_map, gradcam_map) -> float:
    r""" cosine between the RISE and Grad-CAM maps; 0 when either is empty """
    a, b = _as_values(rise_map), _as_values(gradcam_map)
    try:
        return cosine_flat(a, b)
    except ValueError:
        if a.shape != b.shape:
            raise
        warnings.warn('alignment weight of an empty map set to 0', EmptySaliencyWarning)
        return 0.0
