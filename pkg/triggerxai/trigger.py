r"""
Decision layer on top of the saliency maps: the HIS controller, MAIA
method assignment, the trigger decision mechanism (TDM), concept alignment,
SC2 loss, drift flagging and pairwise consistency scoring.
"""
import logging
from collections import namedtuple
from typing import Dict, List, Sequence

import numpy as np
from pydantic import BaseModel, root_validator, validator

from .model import ModelBackend
from .numeric import as_grid, as_prob_vector, cosine_flat, iou_binary, shannon_entropy, spatial_entropy
from .saliency import METHODS, SaliencyMap, explain_method
from .typing import Grid2D, ImageRGB, ProbVector


__all__ = [
    'TRIGGER_REASONS',
    'DEFAULT_MAIA_TABLE',
    'CompatibilityScores',
    'InterpreterAssignment',
    'TriggerReport',
    'AlignmentResult',
    'DriftResult',
    'HisDecision',
    'his_scores',
    'his_select',
    'maia_assign',
    'trigger_rules',
    'trigger_decide',
    'concept_align',
    'is_aligned',
    'sc2_loss',
    'saliency_drift_flag',
    'consistency_matrix',
    'interpretability_confidence',
    'ensemble_agreement',
    'estimate_compatibility',
]


logger = logging.getLogger(__name__)

TRIGGER_REASONS = ('entropy', 'agreement', 'boundary', 'weak-label')


class CompatibilityScores(BaseModel):
    r"""
    Locality fidelity, concept traceability and perturbation robustness of a
    (model kind, method) pair, with the blend weights alpha, beta, delta.
    """
    lf: float
    ct: float
    pr: float
    alpha: float = 1 / 3
    beta: float = 1 / 3
    delta: float = 1 / 3

    @validator('lf', 'ct', 'pr')
    def _check_unit(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('compatibility scores should lie in [0, 1]')
        return v

    @validator('alpha', 'beta', 'delta')
    def _check_weight(cls, v):
        if v < 0:
            raise ValueError('blend weights should be >= 0')
        return v

    @root_validator(skip_on_failure=True)
    def _normalize_weights(cls, values):
        total = values['alpha'] + values['beta'] + values['delta']
        if total <= 0:
            raise ValueError('alpha, beta and delta should not all be zero')
        for k in ('alpha', 'beta', 'delta'):
            values[k] = values[k] / total
        return values

    @property
    def score(self) -> float:
        return self.alpha * self.lf + self.beta * self.ct + self.delta * self.pr


class InterpreterAssignment(BaseModel):
    methods: Dict[str, List[str]]
    scores: Dict[str, Dict[str, float]]

    @validator('methods')
    def _check_nonempty(cls, v):
        for kind, methods in v.items():
            if not methods:
                raise ValueError(f'model kind "{kind}" got no method')
        return v


# (lf, ct, pr) per model kind and method
DEFAULT_MAIA_TABLE = {
    'cnn': {
        'gradcam': (0.9, 0.8, 0.8),
        'fullgrad': (0.7, 0.4, 0.7),
        'rise': (0.5, 0.3, 0.6),
        'tcav': (0.6, 0.9, 0.7),
    },
    'vit-proxy': {
        'gradcam': (0.8, 0.6, 0.8),
        'fullgrad': (0.9, 0.6, 0.9),
        'rise': (0.6, 0.4, 0.7),
        'tcav': (0.4, 0.6, 0.5),
    },
    'yolo-proxy': {
        'gradcam': (0.8, 0.5, 0.8),
        'fullgrad': (0.6, 0.4, 0.7),
        'rise': (0.9, 0.5, 0.9),
        'tcav': (0.3, 0.5, 0.4),
    },
}


def maia_assign(
        pairs: Dict[str, Dict[str, CompatibilityScores]],
        top_k: int = 1,
        ) -> InterpreterAssignment:
    r"""
    Per model kind, methods ranked by alpha*LF + beta*CT + delta*PR; ties
    follow the method priority gradcam, fullgrad, rise, tcav.
    """
    if top_k < 1:
        raise ValueError('top_k should be >= 1')
    methods, scores = {}, {}
    for kind, table in pairs.items():
        if not table:
            raise ValueError(f'no methods scored for model kind "{kind}"')
        unknown = set(table) - set(METHODS)
        if unknown:
            raise ValueError(f'unknown methods {sorted(unknown)} for "{kind}"')
        ranked = sorted(table, key=lambda m: (-table[m].score, METHODS.index(m)))
        methods[kind] = ranked[:top_k]
        scores[kind] = {m: table[m].score for m in ranked}
    return InterpreterAssignment(methods=methods, scores=scores)


HisDecision = namedtuple('HisDecision', ['index', 'base_scores', 'effective_scores'])


def his_scores(
        confidences: Sequence[float],
        weights: Sequence[float],
        gamma: float = 1.0,
        uncertainty: float = 0.0,
        ) -> HisDecision:
    r"""
    lambda_i * I_i + gamma * uncertainty per candidate. The uncertainty term
    is shared by every candidate, so the index is taken on the base scores
    and the effective scores are reported alongside.
    """
    if len(confidences) == 0:
        raise ValueError('no HIS candidates')
    if len(confidences) != len(weights):
        raise ValueError(f'{len(confidences)} confidences but {len(weights)} weights')
    conf = np.asarray(confidences, dtype=np.float64)
    lam = np.asarray(weights, dtype=np.float64)
    if np.any((conf < 0) | (conf > 1)) or np.any((lam < 0) | (lam > 1)):
        raise ValueError('HIS confidences and weights should lie in [0, 1]')
    base = lam * conf
    index = int(np.argmax(base))
    return HisDecision(index, base.tolist(), (base + gamma * uncertainty).tolist())


def his_select(
        confidences: Sequence[float],
        weights: Sequence[float],
        gamma: float = 1.0,
        uncertainty: float = 0.0,
        ) -> int:
    return his_scores(confidences, weights, gamma, uncertainty).index


class TriggerReport(BaseModel):
    triggered: bool
    reasons: List[str]
    entropy: float
    agreement: float
    margin: float
    weak_labeled: bool

    @validator('reasons')
    def _check_reasons(cls, v):
        unknown = set(v) - set(TRIGGER_REASONS)
        if unknown:
            raise ValueError(f'unknown trigger reasons {sorted(unknown)}')
        return v

    @root_validator(skip_on_failure=True)
    def _check_consistency(cls, values):
        if values['triggered'] != bool(values['reasons']):
            raise ValueError('triggered should hold exactly when reasons are given')
        return values


def trigger_rules(
        entropy: float,
        agreement: float,
        margin: float,
        weak_labeled: bool,
        entropy_threshold: float = 0.3,
        agreement_threshold: float = 0.75,
        margin_threshold: float = 0.1,
        ) -> TriggerReport:
    reasons = []
    if entropy > entropy_threshold:
        reasons.append('entropy')
    if agreement < agreement_threshold:
        reasons.append('agreement')
    if margin < margin_threshold:
        reasons.append('boundary')
    if weak_labeled:
        reasons.append('weak-label')
    return TriggerReport(
        triggered=bool(reasons), reasons=reasons, entropy=entropy,
        agreement=agreement, margin=margin, weak_labeled=weak_labeled,
    )


def top2_margin(probs: ProbVector) -> float:
    p = np.sort(as_prob_vector(probs))[::-1]
    return float(p[0] - p[1]) if p.size > 1 else 1.0


def trigger_decide(
        probs: ProbVector,
        ensemble_agreement: float,
        weak_labeled: bool,
        entropy_threshold: float = 0.3,
        agreement_threshold: float = 0.75,
        margin_threshold: float = 0.1,
        ) -> TriggerReport:
    if not 0 <= ensemble_agreement <= 1:
        raise ValueError('ensemble agreement should lie in [0, 1]')
    return trigger_rules(
        shannon_entropy(probs), float(ensemble_agreement), top2_margin(probs), bool(weak_labeled),
        entropy_threshold, agreement_threshold, margin_threshold,
    )


AlignmentResult = namedtuple('AlignmentResult', ['retained', 'score', 'defined'])


def is_aligned(score: float, threshold: float = 0.6) -> bool:
    return score > threshold


def concept_align(tcav_vec, gradcam_vec, threshold: float = 0.6) -> AlignmentResult:
    a = np.asarray(getattr(tcav_vec, 'grid', tcav_vec), dtype=np.float64).ravel()
    b = np.asarray(getattr(gradcam_vec, 'grid', gradcam_vec), dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f'length mismatch {a.size} vs {b.size}')
    if not np.any(a) or not np.any(b):
        return AlignmentResult(False, None, False)
    score = cosine_flat(a, b)
    return AlignmentResult(is_aligned(score, threshold), score, True)


def sc2_loss(saliency_mask: Grid2D, concept_mask: Grid2D) -> float:
    return 1.0 - iou_binary(saliency_mask, concept_mask)


DriftResult = namedtuple('DriftResult', ['flagged', 'outside_fraction', 'reason'])


def saliency_drift_flag(
        saliency,
        foreground_mask: Grid2D,
        threshold: float = 0.5,
        ) -> DriftResult:
    g = as_grid(getattr(saliency, 'grid', saliency), 'saliency')
    fg = np.asarray(foreground_mask) > 0.5
    if fg.shape != g.shape:
        raise ValueError(f'mask shape {fg.shape} differs from map shape {g.shape}')
    if not fg.any():
        return DriftResult(True, 1.0, 'no foreground')
    total = g.sum()
    if total <= 0:
        return DriftResult(False, 0.0, None)
    outside = float(g[~fg].sum() / total)
    flagged = outside > threshold
    return DriftResult(flagged, outside, 'background' if flagged else None)


def consistency_matrix(maps: Sequence[SaliencyMap]) -> np.ndarray:
    r"""
    Symmetric pairwise cosine matrix with 1.0 on the diagonal. Rows and
    columns of zero-norm maps are NaN (undefined).
    """
    if len(maps) < 2:
        raise ValueError('consistency needs at least 2 maps')
    grids = [np.asarray(getattr(m, 'grid', m), dtype=np.float64) for m in maps]
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ValueError('maps should share dims')
    n = len(grids)
    out = np.full((n, n), np.nan)
    defined = [bool(np.any(g)) for g in grids]
    for i in range(n):
        if not defined[i]:
            continue
        out[i, i] = 1.0
        for j in range(i + 1, n):
            if defined[j]:
                out[i, j] = out[j, i] = cosine_flat(grids[i], grids[j])
    return out


def interpretability_confidence(saliency) -> float:
    r""" 1 - spatial entropy / ln(pixel count): 1 for a single hot pixel, 0 for flat or empty maps """
    g = as_grid(getattr(saliency, 'grid', saliency), 'saliency')
    if g.size < 2 or not np.any(g > 0):
        return 0.0
    return float(np.clip(1 - spatial_entropy(g) / np.log(g.size), 0, 1))


def ensemble_agreement(probs_list: Sequence[ProbVector]) -> float:
    r""" fraction of streams whose top class is the most voted one (ties: lowest class) """
    if len(probs_list) == 0:
        raise ValueError('no model streams')
    votes = [int(np.argmax(as_prob_vector(p))) for p in probs_list]
    counts = np.bincount(votes)
    return float(counts.max() / len(votes))


def _pointing_hit(g: Grid2D, mask: Grid2D) -> float:
    idx = np.unravel_index(int(np.argmax(g)), g.shape)
    return float(np.asarray(mask)[idx] > 0.5)


def estimate_compatibility(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        method: str,
        reference_mask: Grid2D,
        n_jitter: int = 5,
        seed: int = 0,
        alpha: float = 1 / 3,
        beta: float = 1 / 3,
        delta: float = 1 / 3,
        **kwargs,
        ) -> CompatibilityScores:
    r"""
    LF: pointing-game hit against `reference_mask`;
    CT: alignment (clipped cosine) with `reference_mask`;
    PR: mean clipped cosine between the map and maps of seeded jittered inputs.
    """
    base = explain_method(method, model, image, class_index, **kwargs)
    mask = as_grid(reference_mask, 'reference mask')
    lf = _pointing_hit(base.grid, mask) if np.any(base.grid) else 0.0
    ct = concept_align(mask, base.grid).score or 0.0
    rng = np.random.default_rng(seed)
    sims = []
    for _ in range(n_jitter):
        jittered = np.clip(np.asarray(image) + rng.normal(0, 0.02, np.shape(image)), 0, 1)
        other = explain_method(method, model, jittered, class_index, **kwargs)
        sims.append(concept_align(base.grid, other.grid).score or 0.0)
    pr = float(np.mean(sims)) if sims else 0.0
    return CompatibilityScores(
        lf=lf, ct=float(max(ct, 0.0)), pr=float(np.clip(pr, 0, 1)),
        alpha=alpha, beta=beta, delta=delta,
    )
