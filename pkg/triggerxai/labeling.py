r"""
Weak labeling of leaf images.

Four labeling functions (LFs) vote a symptom class or abstain; votes are
combined by a reliability-weighted majority. LFs are registered in a fixed
order (yellow spots, silk webbing, healthy, reddish bronzing) and every
vote vector follows that order.
"""
import enum
import logging
from collections import namedtuple
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, validator
from snorkel.labeling import LFAnalysis, LFApplier, LabelingFunction

from .base import BaseManager
from .numeric import as_image
from .preprocessing import (
    GLCM_ANGLES, channel_stats, color_histogram, glcm, glcm_contrast, rgb_to_gray, yellow_band,
)
from .typing import ImageRGB


__all__ = [
    'DiseaseLabel',
    'LabelerSettings',
    'LfWeights',
    'LabelRecord',
    'ImageFeatures',
    'lf_manager',
    'lf_names',
    'extract_features',
    'lf_yellow_spots',
    'lf_silk_webbing',
    'lf_healthy',
    'lf_reddish_bronzing',
    'apply_lfs',
    'aggregate',
    'estimate_weights',
    'label_image',
    'label_matrix',
    'votes_to_matrix',
    'lf_summary',
]


logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 0.05
ABSTAIN = -1
SOURCE = 'lf-aggregate'


class DiseaseLabel(str, enum.Enum):
    Healthy = 'Healthy'
    YellowSpots = 'YellowSpots'
    ReddishBronzing = 'ReddishBronzing'
    SilkWebbing = 'SilkWebbing'
    Abstain = 'Abstain'


VOTING_LABELS = [l for l in DiseaseLabel if l is not DiseaseLabel.Abstain]


class LabelerSettings(BaseModel):
    tau_y: float = 0.08
    tau_w: float = 1.5
    tau_r: float = 1.3
    bins: int = 8
    levels: int = 8

    class Config:
        extra = 'forbid'

    @validator('tau_y')
    def _check_tau_y(cls, v):
        if not 0 < v < 1:
            raise ValueError('labeler.tau_y should lie in (0, 1)')
        return v

    @validator('tau_w', 'tau_r')
    def _check_positive(cls, v):
        if v <= 0:
            raise ValueError('threshold should be > 0')
        return v

    @validator('bins', 'levels')
    def _check_levels(cls, v):
        if v < 2:
            raise ValueError('should be >= 2')
        return v


class LfWeights(BaseModel):
    weights: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    @validator('weights')
    def _check_positive(cls, v):
        if any(w <= 0 for w in v):
            raise ValueError(f'LF weights should be > 0, got {v}')
        return v


class LabelRecord(BaseModel):
    image_id: str
    votes: List[DiseaseLabel]
    label: DiseaseLabel
    score: float
    tie: bool = False

    @validator('score')
    def _check_score(cls, v):
        if v < 0:
            raise ValueError('aggregation score should be >= 0')
        return v


ImageFeatures = namedtuple('ImageFeatures', ['histogram', 'stats', 'glcms', 'yellow_mass', 'contrast'])
r"""
- histogram: ColorHistogram
- stats: ChannelStats
- glcms: one GlcmMatrix per angle in GLCM_ANGLES (d = 1)
- yellow_mass: fraction of pixels in the yellow band
- contrast: mean GLCM contrast over the angles
"""


def extract_features(image: ImageRGB, settings: Optional[LabelerSettings] = None) -> ImageFeatures:
    settings = settings or LabelerSettings()
    img = as_image(image)
    gray = rgb_to_gray(img)
    glcms = [glcm(gray, 1, theta, settings.levels) for theta in GLCM_ANGLES]
    return ImageFeatures(
        histogram=color_histogram(img, settings.bins),
        stats=channel_stats(img),
        glcms=glcms,
        yellow_mass=float(yellow_band(img).mean()),
        contrast=float(np.mean([glcm_contrast(m) for m in glcms])),
    )


class LabelingFunctionManager(BaseManager):
    def get_mode(self, name: str) -> str:
        return name


lf_manager = LabelingFunctionManager()


@lf_manager.register('yellow_spots')
def lf_yellow_spots(features: ImageFeatures, settings: LabelerSettings) -> DiseaseLabel:
    if features.yellow_mass > settings.tau_y:
        return DiseaseLabel.YellowSpots
    return DiseaseLabel.Abstain


@lf_manager.register('silk_webbing')
def lf_silk_webbing(features: ImageFeatures, settings: LabelerSettings) -> DiseaseLabel:
    if features.contrast > settings.tau_w:
        return DiseaseLabel.SilkWebbing
    return DiseaseLabel.Abstain


@lf_manager.register('healthy')
def lf_healthy(features: ImageFeatures, settings: LabelerSettings) -> DiseaseLabel:
    r, g, b = features.stats.mean
    if (
            g > r and g > b
            and features.yellow_mass < settings.tau_y / 2
            and features.stats.red_green_ratio < 0.9
            and features.contrast <= settings.tau_w
            ):
        return DiseaseLabel.Healthy
    return DiseaseLabel.Abstain


@lf_manager.register('reddish_bronzing')
def lf_reddish_bronzing(features: ImageFeatures, settings: LabelerSettings) -> DiseaseLabel:
    if features.stats.red_green_ratio > settings.tau_r:
        return DiseaseLabel.ReddishBronzing
    return DiseaseLabel.Abstain


def lf_names() -> List[str]:
    return lf_manager.modes


def apply_lfs(features: ImageFeatures, settings: Optional[LabelerSettings] = None) -> List[DiseaseLabel]:
    settings = settings or LabelerSettings()
    votes = []
    for name in lf_names():
        _, func = lf_manager.get_func(name)
        votes.append(func(features, settings))
    return votes


def aggregate(
        votes: Sequence[DiseaseLabel],
        weights: Optional[LfWeights] = None,
        ) -> Tuple[DiseaseLabel, float, bool]:
    r"""
    Weighted majority over non-abstaining votes.

    :return: (label, score, tie). All abstaining gives (Abstain, 0, False);
        an exact tie gives (Abstain, tied score, True)
    """
    w = (weights or LfWeights()).weights
    if len(votes) != len(w):
        raise ValueError(f'{len(votes)} votes but {len(w)} weights')
    if any(x <= 0 for x in w):
        raise ValueError('LF weights should be > 0')
    scores = {label: 0.0 for label in VOTING_LABELS}
    for vote, weight in zip(votes, w):
        vote = DiseaseLabel(vote)
        if vote is not DiseaseLabel.Abstain:
            scores[vote] += weight
    best = max(scores.values())
    if best == 0:
        return DiseaseLabel.Abstain, 0.0, False
    winners = [label for label, s in scores.items() if s == best]
    if len(winners) > 1:
        return DiseaseLabel.Abstain, best, True
    return winners[0], best, False


def estimate_weights(dev: Sequence[Tuple[Sequence[DiseaseLabel], DiseaseLabel]]) -> LfWeights:
    r""" per-LF accuracy on its non-abstaining dev votes, floored at 0.05 """
    if len(dev) == 0:
        raise ValueError('empty dev set')
    n_lf = len(dev[0][0])
    weights = []
    for i in range(n_lf):
        voted = [(votes[i], gold) for votes, gold in dev if votes[i] != DiseaseLabel.Abstain]
        if not voted:
            weights.append(WEIGHT_FLOOR)
            continue
        accuracy = sum(v == g for v, g in voted) / len(voted)
        weights.append(max(accuracy, WEIGHT_FLOOR))
    return LfWeights(weights=tuple(weights))


def label_image(
        image: ImageRGB,
        image_id: str,
        settings: Optional[LabelerSettings] = None,
        weights: Optional[LfWeights] = None,
        ) -> LabelRecord:
    votes = apply_lfs(extract_features(image, settings), settings)
    label, score, tie = aggregate(votes, weights)
    logger.debug(f'{image_id}: votes={[v.value for v in votes]} -> {label.value}')
    return LabelRecord(image_id=image_id, votes=votes, label=label, score=score, tie=tie)


def _label_index(vote: DiseaseLabel) -> int:
    vote = DiseaseLabel(vote)
    return ABSTAIN if vote is DiseaseLabel.Abstain else VOTING_LABELS.index(vote)


def _snorkel_lfs(settings: LabelerSettings) -> List[LabelingFunction]:
    lfs = []
    for name in lf_names():
        _, func = lf_manager.get_func(name)
        lfs.append(LabelingFunction(
            name,
            f=lambda x, settings, func=func: _label_index(func(x, settings)),
            resources=dict(settings=settings),
        ))
    return lfs


def label_matrix(
        features: Sequence[ImageFeatures],
        settings: Optional[LabelerSettings] = None,
        ) -> np.ndarray:
    r"""
    Apply every registered LF to each feature record.

    :return: int matrix (n_images, n_lfs); cell is the index of the voted
        label in VOTING_LABELS, or -1 when the LF abstains
    """
    applier = LFApplier(lfs=_snorkel_lfs(settings or LabelerSettings()))
    return applier.apply(list(features), progress_bar=False)


def votes_to_matrix(vote_rows: Sequence[Sequence[DiseaseLabel]]) -> np.ndarray:
    return np.array([[_label_index(v) for v in row] for row in vote_rows], dtype=np.int64)


def lf_summary(vote_rows: Sequence[Sequence[DiseaseLabel]]) -> Dict[str, Any]:
    r"""
    Coverage, overlap and conflict diagnostics per LF, plus the fraction
    of rows with at least one vote.

    - coverage[lf]: fraction of rows where the LF votes
    - overlap[lf]: fraction of rows where it votes along with another LF
    - conflict[lf]: fraction of rows where another LF votes a different label
    """
    if len(vote_rows) == 0:
        raise ValueError('no vote rows')
    names = lf_names()
    analysis = LFAnalysis(votes_to_matrix(vote_rows))
    return {
        'coverage': dict(zip(names, analysis.lf_coverages().tolist())),
        'overlap': dict(zip(names, analysis.lf_overlaps().tolist())),
        'conflict': dict(zip(names, analysis.lf_conflicts().tolist())),
        'label_coverage': float(analysis.label_coverage()),
    }
