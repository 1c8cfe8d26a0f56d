r"""
Explanation metrics and the decision validator.

- pointing game, mean IoU
- deletion / insertion curves with trapezoid AUC
- AIC / BIC of a logistic surrogate over saliency-weighted patch features
- Brier score
- five-gate verdict (AIC, BIC, Brier, confidence, IoU)
"""
import logging
import warnings
from collections import namedtuple
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import auc

from .errors import DegenerateFitWarning
from .model import ModelBackend
from .numeric import ThresholdRule, as_grid, as_image, as_prob_vector, binarize, iou_binary, softmax
from .typing import Grid2D, ImageRGB, ProbVector


__all__ = [
    'CurvePoints',
    'GateReport',
    'GateThresholds',
    'SurrogateFit',
    'pointing_game',
    'mean_iou',
    'perturbation_curve',
    'auc_trapezoid',
    'aic',
    'bic',
    'brier',
    'log_likelihood',
    'surrogate_features',
    'surrogate_fit',
    'validate_explanation',
]


logger = logging.getLogger(__name__)

LL_EPS = 1e-12
PREDICT_CHUNK = 32
# effectively unpenalized, so AIC/BIC see the maximum likelihood
SURROGATE_C = 1e6


def _grid(m) -> Grid2D:
    return as_grid(getattr(m, 'grid', m), 'saliency')


def pointing_game(maps: Sequence, gt_masks: Sequence[Grid2D]) -> float:
    r""" hit when the first row-major argmax of a map lies inside its mask """
    if len(maps) == 0:
        raise ValueError('pointing game needs at least one pair')
    if len(maps) != len(gt_masks):
        raise ValueError(f'{len(maps)} maps but {len(gt_masks)} masks')
    hits = 0
    for m, mask in zip(maps, gt_masks):
        g = _grid(m)
        mask = np.asarray(mask) > 0.5
        if mask.shape != g.shape:
            raise ValueError(f'mask shape {mask.shape} differs from map shape {g.shape}')
        hits += bool(mask[np.unravel_index(int(np.argmax(g)), g.shape)])
    return hits / len(maps)


def mean_iou(maps: Sequence, gt_masks: Sequence[Grid2D], rule: Optional[ThresholdRule] = None) -> float:
    if len(maps) == 0:
        raise ValueError('mean IoU needs at least one pair')
    if len(maps) != len(gt_masks):
        raise ValueError(f'{len(maps)} maps but {len(gt_masks)} masks')
    return float(np.mean([iou_binary(binarize(_grid(m), rule), mask) for m, mask in zip(maps, gt_masks)]))


class CurvePoints(BaseModel):
    fractions: List[float]
    scores: List[float]

    @root_validator(skip_on_failure=True)
    def _check_curve(cls, values):
        f, s = values['fractions'], values['scores']
        if len(f) != len(s) or len(f) < 2:
            raise ValueError('curve needs >= 2 paired points')
        if f[0] != 0 or f[-1] != 1:
            raise ValueError('curve fractions should run from 0 to 1')
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError('curve fractions should be strictly increasing')
        return values


def auc_trapezoid(curve: CurvePoints) -> float:
    return float(auc(curve.fractions, curve.scores))


def _predict_probs(model: ModelBackend, images: np.ndarray, class_index: int) -> np.ndarray:
    out = []
    for start in range(0, len(images), PREDICT_CHUNK):
        logits = np.asarray(model.predict(images[start:start + PREDICT_CHUNK]), dtype=np.float64)
        out.extend(softmax(z)[class_index] for z in logits)
    return np.asarray(out)


def perturbation_curve(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        saliency,
        mode: str = 'deletion',
        step: float = 0.02,
        baseline: Optional[np.ndarray] = None,
        ) -> Tuple[CurvePoints, float]:
    r"""
    deletion: pixels are replaced by `baseline` (default 0) from the most
    salient down; insertion: pixels are revealed into `baseline` (default
    the per-channel mean colour). Ties in saliency keep row-major order.
    """
    if mode not in ('deletion', 'insertion'):
        raise ValueError(f'mode should be deletion or insertion, got {mode}')
    if not 0 < step <= 1:
        raise ValueError('step should lie in (0, 1]')
    model.check_class(class_index)
    x = as_image(image, dtype=np.float64)
    g = _grid(saliency)
    if g.shape != x.shape[1:]:
        raise ValueError(f'saliency dims {g.shape} differ from image dims {x.shape[1:]}')
    if baseline is None:
        if mode == 'deletion':
            baseline = np.zeros_like(x)
        else:
            baseline = np.broadcast_to(x.mean(axis=(1, 2)).reshape(3, 1, 1), x.shape)
    baseline = np.broadcast_to(np.asarray(baseline, dtype=np.float64), x.shape)

    n_steps = max(1, int(round(1 / step)))
    fractions = [k / n_steps for k in range(n_steps + 1)]
    order = np.argsort(-g.ravel(), kind='stable')
    n_pix = g.size
    src, dst = (baseline, x) if mode == 'deletion' else (x, baseline)
    images = []
    for frac in fractions:
        chosen = np.zeros(n_pix, dtype=bool)
        chosen[order[:int(round(frac * n_pix))]] = True
        chosen = chosen.reshape(g.shape)
        # chosen pixels take `src`, the rest `dst`
        images.append(np.where(chosen[None], src, dst))
    scores = _predict_probs(model, np.stack(images), class_index)
    curve = CurvePoints(fractions=fractions, scores=scores.tolist())
    return curve, auc_trapezoid(curve)


def aic(k: int, log_likelihood: float) -> float:
    if k < 0:
        raise ValueError('k should be >= 0')
    return 2 * k - 2 * log_likelihood


def bic(k: int, n: int, log_likelihood: float) -> float:
    if k < 0 or n < 1:
        raise ValueError('k should be >= 0 and n >= 1')
    return k * np.log(n) - 2 * log_likelihood


def brier(probs: Sequence[ProbVector], gold: Sequence[int]) -> float:
    if len(probs) == 0:
        raise ValueError('brier needs at least one sample')
    if len(probs) != len(gold):
        raise ValueError(f'{len(probs)} predictions but {len(gold)} labels')
    total = 0.0
    for p, c in zip(probs, gold):
        p = as_prob_vector(p)
        if not 0 <= c < p.size:
            raise ValueError(f'gold class {c} out of range')
        onehot = np.zeros_like(p)
        onehot[c] = 1
        total += float(((p - onehot) ** 2).sum())
    return total / len(probs)


def log_likelihood(y: Sequence[int], p: Sequence[float]) -> float:
    r""" Bernoulli log likelihood, probabilities clipped to [1e-12, 1 - 1e-12] """
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), LL_EPS, 1 - LL_EPS)
    return float((y * np.log(p) + (1 - y) * np.log(1 - p)).sum())


SurrogateFit = namedtuple('SurrogateFit', ['k', 'n', 'log_likelihood', 'aic', 'bic', 'coef', 'intercept', 'degenerate'])


def surrogate_features(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        saliency,
        patch: int = 8,
        ) -> Tuple[np.ndarray, np.ndarray]:
    r"""
    Per patch: saliency-weighted mean colour (3) and mean saliency (1).
    Target: 1 when occluding the patch drops the class logit by more than
    the median drop.
    """
    x = as_image(image, dtype=np.float64)
    g = _grid(saliency)
    H, W = g.shape
    if patch < 1 or H % patch or W % patch:
        raise ValueError(f'patch size {patch} should divide the image dims {g.shape}')
    feats, occluded = [], []
    for r in range(0, H, patch):
        for c in range(0, W, patch):
            s = g[r:r+patch, c:c+patch]
            px = x[:, r:r+patch, c:c+patch]
            weight = s.sum()
            colour = (px * s).sum(axis=(1, 2)) / weight if weight > 0 else px.mean(axis=(1, 2))
            feats.append(np.r_[colour, s.mean()])
            o = x.copy()
            o[:, r:r+patch, c:c+patch] = 0
            occluded.append(o)
    base = float(np.asarray(model.predict(x[None]), dtype=np.float64)[0, class_index])
    drops = []
    for start in range(0, len(occluded), PREDICT_CHUNK):
        logits = np.asarray(model.predict(np.stack(occluded[start:start + PREDICT_CHUNK])), dtype=np.float64)
        drops.extend(base - logits[:, class_index])
    drops = np.asarray(drops)
    return np.asarray(feats), (drops > np.median(drops)).astype(int)


def surrogate_fit(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        saliency,
        patch: int = 8,
        seed: int = 0,
        ) -> SurrogateFit:
    X, y = surrogate_features(model, image, class_index, saliency, patch)
    n, k = len(y), X.shape[1] + 1
    if len(np.unique(y)) < 2:
        warnings.warn('surrogate target has a single class; log likelihood set to 0', DegenerateFitWarning)
        ll = 0.0
        coef, intercept, degenerate = np.zeros(X.shape[1]), 0.0, True
    else:
        clf = LogisticRegression(C=SURROGATE_C, solver='lbfgs', random_state=seed, max_iter=1000)
        clf.fit(X, y)
        ll = log_likelihood(y, clf.predict_proba(X)[:, 1])
        coef, intercept, degenerate = clf.coef_[0], float(clf.intercept_[0]), False
    return SurrogateFit(k, n, ll, aic(k, ll), bic(k, n, ll), coef, intercept, degenerate)


class GateThresholds(BaseModel):
    aic: float = 200.0
    bic: float = 250.0
    brier: float = 0.2
    confidence: float = 0.85
    iou: float = 0.6

    class Config:
        extra = 'forbid'


class GateReport(BaseModel):
    aic: float
    bic: float
    brier: float
    confidence: float
    iou: float
    aic_pass: bool
    bic_pass: bool
    brier_pass: bool
    confidence_pass: bool
    iou_pass: bool
    passed: bool

    @validator('aic', 'bic', 'brier', 'confidence', 'iou')
    def _check_finite(cls, v):
        if not np.isfinite(v):
            raise ValueError('gate inputs should be finite')
        return v

    @root_validator(skip_on_failure=True)
    def _check_overall(cls, values):
        gates = [values[f'{g}_pass'] for g in ('aic', 'bic', 'brier', 'confidence', 'iou')]
        if values['passed'] != all(gates):
            raise ValueError('overall pass should be the conjunction of the gates')
        return values


def validate_explanation(
        aic: float,
        bic: float,
        brier: float,
        confidence: float,
        iou: float,
        thresholds: Optional[GateThresholds] = None,
        ) -> GateReport:
    t = thresholds or GateThresholds()
    gates = {
        'aic_pass': aic < t.aic,
        'bic_pass': bic < t.bic,
        'brier_pass': brier < t.brier,
        'confidence_pass': confidence > t.confidence,
        'iou_pass': iou >= t.iou,
    }
    return GateReport(
        aic=aic, bic=bic, brier=brier, confidence=confidence, iou=iou,
        passed=all(gates.values()), **gates,
    )
