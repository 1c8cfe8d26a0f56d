r"""
Serialized form of one explain run (schema "v1").

Every record forbids unknown fields. Undefined consistency entries (zero-norm
maps) serialize as null. Floats use the shortest round-trip repr, so
`ExplanationReport.parse_raw(report.json())` gives back an equal report.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator

from .evaluation import GateReport
from .saliency import SaliencyMap
from .trigger import TriggerReport
from .typing import PathLike


__all__ = [
    'SCHEMA_VERSION',
    'MapSummary',
    'StreamSummary',
    'FusionSummary',
    'AlignmentSummary',
    'HisSummary',
    'DriftSummary',
    'ConsistencySummary',
    'SurrogateSummary',
    'MetricsSummary',
    'MethodError',
    'ExplanationReport',
    'summarize_map',
    'write_report',
    'load_report',
]


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 'v1'


class _Record(BaseModel):
    class Config:
        extra = 'forbid'


class MapSummary(_Record):
    method: str
    model_id: str
    class_index: int
    layer: Optional[str] = None
    flags: List[str] = []
    extras: Dict[str, float] = {}
    peak: Tuple[int, int]
    mean: float


def summarize_map(m: SaliencyMap) -> MapSummary:
    r""" `peak` is the first row-major argmax """
    r, c = np.unravel_index(int(np.argmax(m.grid)), m.grid.shape)
    return MapSummary(
        method=m.method, model_id=m.model_id, class_index=m.class_index, layer=m.layer,
        flags=list(m.flags), extras=dict(m.extras), peak=(int(r), int(c)), mean=float(m.grid.mean()),
    )


class StreamSummary(_Record):
    backend: str
    model_kind: str
    model_id: str
    probs: List[float]
    predicted: int
    assigned: List[str]
    maps: List[MapSummary]


class FusionSummary(_Record):
    weights: Dict[str, float]
    rise_weight: Optional[float] = None
    tcav_rejected: bool = False
    temperature: float
    outputs: List[MapSummary]
    final: str


class AlignmentSummary(_Record):
    retained: bool
    score: Optional[float] = None
    defined: bool
    threshold: float
    sc2_loss: float


class HisSummary(_Record):
    candidates: List[str]
    base_scores: List[float]
    effective_scores: List[float]
    gamma: float
    uncertainty: float
    selected: Optional[str] = None


class DriftSummary(_Record):
    flagged: bool
    outside_fraction: float
    reason: Optional[str] = None
    threshold: float


class ConsistencySummary(_Record):
    labels: List[str] = []
    matrix: List[List[Optional[float]]] = []

    @classmethod
    def from_matrix(cls, labels: List[str], matrix: np.ndarray) -> 'ConsistencySummary':
        rows = [[None if np.isnan(v) else float(v) for v in row] for row in np.asarray(matrix)]
        return cls(labels=labels, matrix=rows)


class SurrogateSummary(_Record):
    k: int
    n: int
    log_likelihood: float
    degenerate: bool


class MetricsSummary(_Record):
    deletion_auc: float
    insertion_auc: float
    iou_source: str


class MethodError(_Record):
    backend: str
    method: str
    error: str


class ExplanationReport(_Record):
    schema_version: str = SCHEMA_VERSION
    image: str
    size: Tuple[int, int]
    seed: int
    class_index: int
    probs: List[float]
    streams: List[StreamSummary]
    maia: Dict[str, List[str]]
    fusion: FusionSummary
    trigger: TriggerReport
    alignment: AlignmentSummary
    his: HisSummary
    consistency: ConsistencySummary
    drift: DriftSummary
    surrogate: SurrogateSummary
    metrics: MetricsSummary
    gates: GateReport
    errors: List[MethodError] = []
    timing: Optional[Dict[str, float]] = None

    @validator('schema_version')
    def _check_version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f'unsupported report schema {v}, expected {SCHEMA_VERSION}')
        return v

    def to_json(self) -> str:
        # `timing` stays out unless it was requested so reports compare byte-for-byte
        return self.json(indent=2, exclude_none=False, exclude={'timing'} if self.timing is None else None)


def write_report(report: ExplanationReport, path: PathLike):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(report.to_json())
        f.write('\n')
    logger.debug(f'Wrote report {path}')


def load_report(path: PathLike) -> ExplanationReport:
    return ExplanationReport.parse_file(path)
