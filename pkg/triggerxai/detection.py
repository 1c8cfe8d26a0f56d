r"""
YOLO-style box decoding and class-wise greedy NMS over externally supplied
raw head outputs. Boxes are center format in grid units.
"""
import csv
import json
import logging
import math
from collections import namedtuple
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .errors import InputError, RowError
from .numeric import as_prob_vector
from .typing import PathLike


__all__ = [
    'RawBoxPrediction',
    'Box',
    'RAW_FIELDS',
    'decode_box',
    'box_iou',
    'nms',
    'load_raw_predictions',
]


logger = logging.getLogger(__name__)

RawBoxPrediction = namedtuple(
    'RawBoxPrediction',
    ['tx', 'ty', 'tw', 'th', 'cx', 'cy', 'pw', 'ph', 'objectness', 'class_probs'],
)
Box = namedtuple('Box', ['x', 'y', 'w', 'h', 'score', 'cls'])
RAW_FIELDS = RawBoxPrediction._fields[:-1]


def _sigmoid(v: float) -> float:
    if v >= 0:
        return 1 / (1 + math.exp(-v))
    e = math.exp(v)
    return e / (1 + e)


def decode_box(raw: RawBoxPrediction) -> Box:
    scalars = [raw.tx, raw.ty, raw.tw, raw.th, raw.cx, raw.cy, raw.pw, raw.ph, raw.objectness]
    if not all(math.isfinite(v) for v in scalars):
        raise ValueError('non-finite raw prediction')
    if raw.pw <= 0 or raw.ph <= 0:
        raise ValueError('anchor priors should be > 0')
    if raw.cx < 0 or raw.cy < 0:
        raise ValueError('cell offsets should be >= 0')
    if not 0 <= raw.objectness <= 1:
        raise ValueError('objectness should lie in [0, 1]')
    probs = as_prob_vector(raw.class_probs)
    cls = int(np.argmax(probs))
    return Box(
        x=_sigmoid(raw.tx) + raw.cx,
        y=_sigmoid(raw.ty) + raw.cy,
        w=raw.pw * math.exp(raw.tw),
        h=raw.ph * math.exp(raw.th),
        score=raw.objectness * float(probs[cls]),
        cls=cls,
    )


def box_iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x + a.w / 2, b.x + b.w / 2) - max(a.x - a.w / 2, b.x - b.w / 2))
    iy = max(0.0, min(a.y + a.h / 2, b.y + b.h / 2) - max(a.y - a.h / 2, b.y - b.h / 2))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def nms(boxes: Sequence[Box], iou_threshold: float = 0.5) -> List[Box]:
    r"""
    Greedy class-wise suppression in (score descending, insertion index)
    order; a box is dropped when IoU with a kept same-class box >= threshold.
    """
    if not 0 < iou_threshold < 1:
        raise ValueError('iou_threshold should lie in (0, 1)')
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: List[int] = []
    for i in order:
        if all(boxes[k].cls != boxes[i].cls or box_iou(boxes[k], boxes[i]) < iou_threshold for k in kept):
            kept.append(i)
    return [boxes[i] for i in kept]


def _parse_row(values: dict, row: int) -> RawBoxPrediction:
    try:
        scalars = [float(values[k]) for k in RAW_FIELDS]
        probs = values['class_probs']
        if isinstance(probs, str):
            probs = [float(p) for p in probs.split(';')]
        probs = [float(p) for p in probs]
    except (KeyError, TypeError, ValueError) as e:
        raise RowError(f'malformed raw prediction ({e})', row)
    raw = RawBoxPrediction(*scalars, probs)
    try:
        decode_box(raw)
    except ValueError as e:
        raise RowError(str(e), row)
    return raw


def load_raw_predictions(path: PathLike) -> List[RawBoxPrediction]:
    r"""
    CSV: header tx,ty,tw,th,cx,cy,pw,ph,objectness,p0,p1,...
    JSON: list of objects with the same scalar keys and `class_probs`.
    Rows are numbered from 1 (first data row) in errors.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f'cannot read raw predictions {path}')
    if path.suffix.lower() == '.json':
        with open(path, 'r') as f:
            try:
                items = json.load(f)
            except json.JSONDecodeError as e:
                raise InputError(f'invalid JSON in {path}: {e}')
        if not isinstance(items, list):
            raise InputError('raw prediction JSON should hold a list')
        return [_parse_row(item if isinstance(item, dict) else {}, i + 1) for i, item in enumerate(items)]

    res = []
    with open(path, 'r', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise InputError(f'{path} is empty')
        header = [h.strip() for h in header]
        prob_cols = [i for i, h in enumerate(header) if h.startswith('p') and h[1:].isdigit()]
        if not prob_cols:
            raise InputError('no class probability columns p0, p1, ...')
        for n, line in enumerate(reader, start=1):
            if len(line) != len(header):
                raise RowError(f'expected {len(header)} fields, got {len(line)}', n)
            values = dict(zip(header, line))
            values['class_probs'] = [line[i] for i in prob_cols]
            res.append(_parse_row(values, n))
    logger.debug(f'Loaded {len(res)} raw predictions from {path}')
    return res
