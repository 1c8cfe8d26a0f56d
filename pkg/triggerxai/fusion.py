r"""
Saliency fusion: intra-model and inter-model averaging, method-weighted
fusion and attention-gated fusion. Every output is renormalized to [0, 1].
"""
import itertools
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, validator

from .numeric import ThresholdRule, binarize, iou_binary
from .saliency import METHODS, SaliencyMap, make_map
from .typing import Grid2D


__all__ = [
    'MethodWeights',
    'AttentionGates',
    'fuse_intra_model',
    'fuse_inter_model',
    'fuse_weighted',
    'attention_gates',
    'fuse_attention_gated',
    'calibrate_weights',
]


logger = logging.getLogger(__name__)

GATE_TOL = 1e-6


class MethodWeights(BaseModel):
    r"""
    Non-negative weight per method; `normalized()` rescales them to sum to 1.
    """
    gradcam: float = 0.25
    fullgrad: float = 0.25
    rise: float = 0.25
    tcav: float = 0.25

    class Config:
        extra = 'forbid'

    @validator('*')
    def _check_nonneg(cls, v):
        if v < 0:
            raise ValueError('method weights should be >= 0')
        return v

    @classmethod
    def uniform(cls, methods: Sequence[str]) -> 'MethodWeights':
        return cls(**{m: (1.0 if m in methods else 0.0) for m in METHODS}).normalized()

    def as_dict(self) -> Dict[str, float]:
        return {m: getattr(self, m) for m in METHODS}

    def normalized(self) -> 'MethodWeights':
        total = sum(self.as_dict().values())
        if total <= 0:
            raise ValueError('method weights should not all be zero')
        return MethodWeights(**{m: w / total for m, w in self.as_dict().items()})


class AttentionGates(BaseModel):
    r""" A_i per input map; per pixel the gates sum to 1 """
    gates: List[np.ndarray]

    class Config:
        arbitrary_types_allowed = True

    @validator('gates')
    def _check_partition(cls, v):
        if len(v) == 0:
            raise ValueError('no gates given')
        v = [np.asarray(g, dtype=np.float64) for g in v]
        shape = v[0].shape
        if any(g.shape != shape for g in v):
            raise ValueError('gates should share one shape')
        if any(np.any(g < -GATE_TOL) or np.any(g > 1 + GATE_TOL) for g in v):
            raise ValueError('gate values should lie in [0, 1]')
        if np.max(np.abs(np.sum(v, axis=0) - 1)) > GATE_TOL:
            raise ValueError('gates should sum to 1 at every pixel')
        return v


def _check_shapes(maps: Sequence[SaliencyMap]):
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ValueError(f'saliency maps should share dims, got {shape} vs {m.shape}')


def _average(maps: Sequence[SaliencyMap], weights: Optional[Sequence[float]]) -> Grid2D:
    if weights is None:
        weights = [1.0] * len(maps)
    if len(weights) != len(maps):
        raise ValueError(f'{len(maps)} maps but {len(weights)} weights')
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError('fusion weights should be non-negative and not all zero')
    w = w / w.sum()
    return np.tensordot(w, np.stack([m.grid for m in maps]), axes=1)


def fuse_intra_model(
        gradcam: SaliencyMap,
        rise: SaliencyMap,
        fullgrad: SaliencyMap,
        weights: Optional[Sequence[float]] = None,
        ) -> SaliencyMap:
    r""" weights are given in (gradcam, rise, fullgrad) order; default uniform """
    maps = [gradcam, rise, fullgrad]
    _check_shapes(maps)
    ids = {m.model_id for m in maps}
    if len(ids) > 1:
        raise ValueError(f'intra-model fusion mixes models {sorted(ids)}')
    return make_map(
        _average(maps, weights), 'fused-intra',
        model_id=gradcam.model_id, class_index=gradcam.class_index,
    )


def fuse_inter_model(
        cnn: SaliencyMap,
        vit: SaliencyMap,
        yolo: SaliencyMap,
        weights: Optional[Sequence[float]] = None,
        ) -> SaliencyMap:
    maps = [cnn, vit, yolo]
    _check_shapes(maps)
    return make_map(
        _average(maps, weights), 'fused-inter',
        model_id='ensemble', class_index=cnn.class_index,
    )


def fuse_weighted(maps: Dict[str, SaliencyMap], weights: MethodWeights) -> SaliencyMap:
    lam = weights.normalized().as_dict()
    missing = [m for m, w in lam.items() if w > 0 and m not in maps]
    if missing:
        raise ValueError(f'maps missing for weighted methods {missing}')
    used = [m for m in METHODS if lam[m] > 0]
    _check_shapes([maps[m] for m in used])
    first = maps[used[0]]
    total = np.tensordot(
        np.array([lam[m] for m in used]), np.stack([maps[m].grid for m in used]), axes=1,
    )
    return make_map(total, 'fused-weighted', model_id=first.model_id, class_index=first.class_index)


def attention_gates(maps: Sequence[SaliencyMap], temperature: float = 1.0) -> AttentionGates:
    r""" per-pixel softmax over the maps' values """
    if temperature <= 0:
        raise ValueError('temperature should be > 0')
    _check_shapes(maps)
    z = np.stack([m.grid for m in maps]) / temperature
    e = np.exp(z - z.max(axis=0, keepdims=True))
    a = e / e.sum(axis=0, keepdims=True)
    return AttentionGates(gates=list(a))


def fuse_attention_gated(maps: Sequence[SaliencyMap], gates: AttentionGates) -> SaliencyMap:
    if len(maps) != len(gates.gates):
        raise ValueError(f'{len(maps)} maps but {len(gates.gates)} gates')
    _check_shapes(maps)
    if gates.gates[0].shape != maps[0].shape:
        raise ValueError(f'gate dims {gates.gates[0].shape} differ from map dims {maps[0].shape}')
    total = sum(a * m.grid for a, m in zip(gates.gates, maps))
    return make_map(total, 'fused-gated', model_id=maps[0].model_id, class_index=maps[0].class_index)


def _simplex(n: int, steps: int):
    for combo in itertools.product(range(steps + 1), repeat=n):
        if sum(combo) == steps:
            yield [c / steps for c in combo]


def calibrate_weights(
        samples: Sequence[Dict[str, SaliencyMap]],
        gt_masks: Sequence[Grid2D],
        methods: Optional[Sequence[str]] = None,
        step: float = 0.1,
        rule: Optional[ThresholdRule] = None,
        ) -> MethodWeights:
    r"""
    Grid search over the weight simplex (resolution `step`) maximizing the
    mean IoU of the binarized weighted fusion against ground-truth masks.
    The first best grid point in enumeration order wins.
    """
    if len(samples) == 0 or len(samples) != len(gt_masks):
        raise ValueError('calibration needs paired, non-empty samples and masks')
    methods = list(methods or [m for m in METHODS if all(m in s for s in samples)])
    if not methods:
        raise ValueError('no method is present in every sample')
    steps = int(round(1 / step))
    best, best_score = None, -1.0
    for combo in _simplex(len(methods), steps):
        lam = MethodWeights(**{m: (combo[methods.index(m)] if m in methods else 0.0) for m in METHODS})
        ious = []
        for maps, mask in zip(samples, gt_masks):
            fused = sum(lam_m * maps[m].grid for m, lam_m in zip(methods, combo))
            ious.append(iou_binary(binarize(fused, rule), mask))
        score = float(np.mean(ious))
        if score > best_score:
            best, best_score = lam, score
    logger.debug(f'Calibrated fusion weights {best.as_dict()} (mean IoU {best_score:.3f})')
    return best.normalized()
