r"""
The explain pipeline.

1. every configured backend classifies the (resized) image
2. the trigger decision runs on the mean class probabilities
3. MAIA assigns methods per model kind; Grad-CAM, FullGrad and RISE always
   run (intra-model fusion needs them), TCAV runs where it is assigned.
   With `trigger.gate` on, an untriggered image only gets Grad-CAM
4. fusion: intra-model per stream, weighted and attention-gated on the
   primary stream, inter-model when all three streams ran
5. HIS, concept alignment, SC2, consistency, drift, surrogate fit and the
   five decision gates
"""
import logging
import time
from collections import OrderedDict, namedtuple
from contextlib import contextmanager
from typing import Any, Dict, List, Optional

import numpy as np

from .backends import build_backend, get_backend_preset, resolve_backends
from .config import RunConfig
from .errors import InvariantError
from .evaluation import brier, perturbation_curve, surrogate_fit, validate_explanation
from .fusion import (
    MethodWeights,
    attention_gates,
    fuse_attention_gated,
    fuse_inter_model,
    fuse_intra_model,
    fuse_weighted,
)
from .micronet import MicroNetSpec
from .numeric import ThresholdRule, as_image, binarize, iou_binary
from .overlay import render_overlay
from .preprocessing import leaf_mask, resize_normalize
from .report import (
    AlignmentSummary,
    ConsistencySummary,
    DriftSummary,
    ExplanationReport,
    FusionSummary,
    HisSummary,
    MethodError,
    MetricsSummary,
    StreamSummary,
    SurrogateSummary,
    summarize_map,
)
from .saliency import METHODS, SaliencyMap, explain_method, rise_alignment_weight
from .tcav import concept_mask
from .trigger import (
    DEFAULT_MAIA_TABLE,
    CompatibilityScores,
    InterpreterAssignment,
    concept_align,
    consistency_matrix,
    ensemble_agreement,
    estimate_compatibility,
    his_scores,
    interpretability_confidence,
    maia_assign,
    saliency_drift_flag,
    sc2_loss,
    trigger_decide,
)
from .typing import Grid2D, ImageRGB


__all__ = ['Stream', 'ExplainResult', 'method_kwargs', 'build_streams', 'assign_methods', 'explain']


logger = logging.getLogger(__name__)

Stream = namedtuple('Stream', ['backend', 'model', 'probs'])
ExplainResult = namedtuple('ExplainResult', ['report', 'maps', 'overlays'])
r"""
- report: ExplanationReport
- maps: {'<backend>/<method>' or fusion tag: SaliencyMap}
- overlays: {'<backend>_<method>' or 'fused': uint8 (3,H,W)}
"""


class _Timer(OrderedDict):
    def __init__(self, enabled: bool):
        super().__init__()
        self.enabled = enabled

    @contextmanager
    def __call__(self, stage: str):
        start = time.perf_counter()
        yield
        if self.enabled:
            self[stage] = time.perf_counter() - start


def method_kwargs(method: str, config: RunConfig) -> Dict[str, Any]:
    if method == 'rise':
        return {'cfg': config.rise}
    if method == 'tcav':
        return {
            'concept': config.tcav.concept,
            'layer': config.tcav.layer,
            'set_size': config.tcav.set_size,
            'batch_size': config.tcav.batch_size,
            'seed': config.model.seed,
        }
    return {}


def build_streams(image: ImageRGB, config: RunConfig) -> List[Stream]:
    spec = MicroNetSpec(channels=config.model.channels, num_classes=config.model.num_classes)
    streams = []
    for name in resolve_backends(config.model.backend):
        model = build_backend(name, config.model.seed, spec, config.model.weights)
        probs = model.forward(image).probs
        logger.debug(f'{name}: probs {np.round(probs, 4).tolist()}')
        streams.append(Stream(name, model, probs))
    return streams


def assign_methods(
        streams: List[Stream],
        image: ImageRGB,
        class_index: int,
        config: RunConfig,
        ) -> InterpreterAssignment:
    r"""
    Compatibility scores come from the configured table (defaults overridden
    by `maia.score.*`), or are estimated on the image when `maia.estimate`
    is set, with the concept mask as the reference region.
    """
    m = config.maia
    pairs: Dict[str, Dict[str, CompatibilityScores]] = {}
    for stream in streams:
        kind = stream.model.model_kind
        if kind in pairs:
            continue
        if m.estimate:
            reference = concept_mask(image, config.tcav.concept)
            pairs[kind] = {
                method: estimate_compatibility(
                    stream.model, image, class_index, method, reference,
                    seed=config.model.seed, alpha=m.alpha, beta=m.beta, delta=m.delta,
                    **method_kwargs(method, config),
                )
                for method in METHODS
            }
        else:
            table = {**DEFAULT_MAIA_TABLE.get(kind, DEFAULT_MAIA_TABLE['cnn']), **m.score.get(kind, {})}
            pairs[kind] = {
                method: CompatibilityScores(lf=lf, ct=ct, pr=pr, alpha=m.alpha, beta=m.beta, delta=m.delta)
                for method, (lf, ct, pr) in table.items()
            }
    return maia_assign(pairs, top_k=m.top_k)


def _run_methods(
        stream: Stream,
        methods: List[str],
        image: ImageRGB,
        class_index: int,
        config: RunConfig,
        ):
    r""" one result slot and one exception slot per method """
    results: Dict[str, SaliencyMap] = OrderedDict()
    errors: List[MethodError] = []
    for method in methods:
        try:
            results[method] = explain_method(
                method, stream.model, image, class_index, **method_kwargs(method, config),
            )
        except Exception as e:
            logger.warning(f'{stream.backend}/{method} failed: {e}')
            errors.append(MethodError(backend=stream.backend, method=method, error=f'{type(e).__name__}: {e}'))
    return results, errors


def _effective_weights(
        maps: Dict[str, SaliencyMap],
        config: RunConfig,
        rise_weight: Optional[float],
        tcav_rejected: bool,
        ) -> MethodWeights:
    r"""
    Configured (or uniform) weights restricted to the available maps. The
    RISE weight is scaled by max(alignment with Grad-CAM, 0) and TCAV is
    dropped when concept alignment rejects it.
    """
    if config.fusion.weights is None:
        lam = {m: 1.0 for m in METHODS}
    else:
        lam = dict(zip(METHODS, config.fusion.weights))
    lam = {m: (lam[m] if m in maps else 0.0) for m in METHODS}
    if rise_weight is not None:
        lam['rise'] *= max(rise_weight, 0.0)
    if tcav_rejected:
        lam['tcav'] = 0.0
    if sum(lam.values()) <= 0:
        # everything was zeroed; fall back to the first available map
        first = next(m for m in METHODS if m in maps)
        lam = {m: float(m == first) for m in METHODS}
    return MethodWeights(**lam).normalized()


def explain(
        image: ImageRGB,
        config: Optional[RunConfig] = None,
        mask: Optional[Grid2D] = None,
        image_id: str = '',
        ) -> ExplainResult:
    r"""
    :param image: (3,H,W) image; resized to explain.size
    :param mask: optional ground-truth symptom mask (any size) for the IoU gate
    """
    config = config or RunConfig()
    timer = _Timer(config.report.timing)
    size = config.explain.size
    img = resize_normalize(as_image(image), size, size)

    with timer('classify'):
        streams = build_streams(img, config)
    mean_probs = np.mean([s.probs for s in streams], axis=0)
    mean_probs = mean_probs / mean_probs.sum()
    class_index = config.explain.class_index
    if class_index is None:
        class_index = int(np.argmax(mean_probs))
    streams[0].model.check_class(class_index)

    t = config.trigger
    agreement = ensemble_agreement([s.probs for s in streams])
    trigger = trigger_decide(
        mean_probs, agreement, t.weak_labeled,
        entropy_threshold=t.entropy, agreement_threshold=t.agreement, margin_threshold=t.margin,
    )
    logger.info(f'{image_id}: class {class_index}, trigger {trigger.reasons or "none"}')

    with timer('assign'):
        assignment = assign_methods(streams, img, class_index, config)

    maps: Dict[str, SaliencyMap] = OrderedDict()
    per_stream: List[Dict[str, SaliencyMap]] = []
    intra: Dict[str, SaliencyMap] = OrderedDict()
    errors: List[MethodError] = []
    with timer('saliency'):
        for stream in streams:
            assigned = assignment.methods[stream.model.model_kind]
            if t.gate and not trigger.triggered:
                methods = ['gradcam']
            else:
                methods = [m for m in METHODS if m != 'tcav' or 'tcav' in assigned]
            results, errs = _run_methods(stream, methods, img, class_index, config)
            errors.extend(errs)
            per_stream.append(results)
            for method, m in results.items():
                maps[f'{stream.backend}/{method}'] = m
            if all(m in results for m in ('gradcam', 'rise', 'fullgrad')):
                intra[stream.backend] = fuse_intra_model(results['gradcam'], results['rise'], results['fullgrad'])
                maps[f'{stream.backend}/fused-intra'] = intra[stream.backend]

    primary = streams[0]
    pmaps = per_stream[0]
    if not pmaps:
        raise InvariantError(f'no saliency method succeeded on {primary.backend}: {[e.error for e in errors]}')
    rule = ThresholdRule(fraction=config.binarize.fraction)
    cmask = concept_mask(img, config.tcav.concept)

    with timer('fusion'):
        if 'gradcam' in pmaps:
            tcav_vec = pmaps['tcav'].grid if 'tcav' in pmaps else cmask
            alignment = concept_align(tcav_vec, pmaps['gradcam'].grid, config.align.threshold)
            sc2 = sc2_loss(binarize(pmaps['gradcam'].grid, rule), cmask)
        else:
            alignment = concept_align(np.zeros(1), np.zeros(1), config.align.threshold)
            sc2 = 1.0
        rise_weight = None
        if 'rise' in pmaps and 'gradcam' in pmaps:
            rise_weight = rise_alignment_weight(pmaps['rise'], pmaps['gradcam'])
        tcav_rejected = 'tcav' in pmaps and not alignment.retained
        weights = _effective_weights(pmaps, config, rise_weight, tcav_rejected)

        available = [pmaps[m] for m in METHODS if m in pmaps]
        fused_weighted = fuse_weighted(dict(pmaps), weights)
        maps['fused-weighted'] = fused_weighted
        outputs = [fused_weighted]
        if len(available) > 1:
            fused_gated = fuse_attention_gated(available, attention_gates(available, config.fusion.temperature))
            maps['fused-gated'] = fused_gated
            outputs.append(fused_gated)
        final = fused_weighted
        kinds = {s.model.model_kind: s.backend for s in streams}
        inter_kinds = [get_backend_preset(b)[1] for b in ('micro-cnn', 'vit-proxy', 'yolo-proxy')]
        if all(kinds.get(k) in intra for k in inter_kinds):
            fused_inter = fuse_inter_model(*[intra[kinds[k]] for k in inter_kinds])
            maps['fused-inter'] = fused_inter
            outputs.append(fused_inter)
            final = fused_inter
        outputs.extend(intra.values())

    with timer('decide'):
        candidates = [m for m in METHODS if m in pmaps]
        lam = weights.as_dict()
        his = his_scores(
            [interpretability_confidence(pmaps[m]) for m in candidates],
            [lam[m] for m in candidates],
            gamma=config.his.gamma,
            uncertainty=trigger.entropy,
        )
        if len(available) > 1:
            consistency = ConsistencySummary.from_matrix(candidates, consistency_matrix(available))
        else:
            consistency = ConsistencySummary()
        drift = saliency_drift_flag(final, leaf_mask(img), config.drift.threshold)

    with timer('evaluate'):
        model = primary.model
        fit = surrogate_fit(model, img, class_index, final, patch=config.evaluate.patch, seed=config.model.seed)
        _, del_auc = perturbation_curve(model, img, class_index, final, 'deletion', config.evaluate.step)
        _, ins_auc = perturbation_curve(model, img, class_index, final, 'insertion', config.evaluate.step)
        gold = config.explain.gold_class if config.explain.gold_class is not None else int(np.argmax(mean_probs))
        if mask is not None:
            gt = np.asarray(mask, dtype=np.float64)
            if gt.shape != (size, size):
                gt = resize_normalize(np.stack([gt] * 3), size, size)[0]
            iou, iou_source = iou_binary(binarize(final.grid, rule), gt > 0.5), 'mask'
        else:
            iou, iou_source = 1.0 - sc2, 'concept'
        gates = validate_explanation(
            fit.aic, fit.bic, brier([mean_probs], [gold]), float(mean_probs.max()), iou,
            thresholds=config.gates,
        )

    report = ExplanationReport(
        image=image_id,
        size=(size, size),
        seed=config.model.seed,
        class_index=class_index,
        probs=mean_probs.tolist(),
        streams=[
            StreamSummary(
                backend=s.backend, model_kind=s.model.model_kind, model_id=s.model.model_id,
                probs=np.asarray(s.probs).tolist(), predicted=int(np.argmax(s.probs)),
                assigned=assignment.methods[s.model.model_kind],
                maps=[summarize_map(m) for m in res.values()],
            )
            for s, res in zip(streams, per_stream)
        ],
        maia=assignment.methods,
        fusion=FusionSummary(
            weights=weights.as_dict(), rise_weight=rise_weight, tcav_rejected=tcav_rejected,
            temperature=config.fusion.temperature,
            outputs=[summarize_map(m) for m in outputs], final=final.method,
        ),
        trigger=trigger,
        alignment=AlignmentSummary(
            retained=alignment.retained, score=alignment.score, defined=alignment.defined,
            threshold=config.align.threshold, sc2_loss=sc2,
        ),
        his=HisSummary(
            candidates=candidates, base_scores=his.base_scores, effective_scores=his.effective_scores,
            gamma=config.his.gamma, uncertainty=trigger.entropy,
            selected=candidates[his.index] if candidates else None,
        ),
        consistency=consistency,
        drift=DriftSummary(
            flagged=drift.flagged, outside_fraction=drift.outside_fraction, reason=drift.reason,
            threshold=config.drift.threshold,
        ),
        surrogate=SurrogateSummary(k=fit.k, n=fit.n, log_likelihood=fit.log_likelihood, degenerate=fit.degenerate),
        metrics=MetricsSummary(deletion_auc=del_auc, insertion_auc=ins_auc, iou_source=iou_source),
        gates=gates,
        errors=errors,
        timing=dict(timer) if config.report.timing else None,
    )

    overlays = OrderedDict()
    for s, res in zip(streams, per_stream):
        for method, m in res.items():
            overlays[f'{s.backend}_{method}'] = render_overlay(img, m)
    overlays['fused'] = render_overlay(img, final)
    return ExplainResult(report, maps, overlays)
