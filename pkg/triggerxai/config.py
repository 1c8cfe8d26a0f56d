r"""
Run configuration.

The file format is flat `key = value` lines with `#` comments. Dotted keys
address sections (`trigger.entropy = 0.3`); deeper dots nest further
(`maia.score.cnn.gradcam = 0.9,0.8,0.8`). Values are booleans, ints,
floats, comma lists or bare strings.

Precedence: defaults < config file (`--config`, else $TRIGGER_XAI_CONFIG)
< command-line overrides.
"""
import logging
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import BaseModel, ValidationError, root_validator, validator

from .backends import resolve_backends
from .errors import ConfigError
from .evaluation import GateThresholds
from .labeling import LabelerSettings
from .saliency import RiseConfig
from .typing import PathLike


__all__ = [
    'ENV_CONFIG',
    'RunConfig',
    'parse_value',
    'parse_config_text',
    'load_config',
    'resolve_config',
]


logger = logging.getLogger(__name__)

ENV_CONFIG = 'TRIGGER_XAI_CONFIG'


class _Section(BaseModel):
    class Config:
        extra = 'forbid'


def _unit_interval(v, name):
    if not 0 <= v <= 1:
        raise ValueError(f'{name} should lie in [0, 1]')
    return v


class ExplainSection(_Section):
    size: int = 224
    class_index: Optional[int] = None
    gold_class: Optional[int] = None

    @validator('size')
    def _check_size(cls, v):
        if v < 8:
            raise ValueError('explain.size should be >= 8')
        return v


class ModelSection(_Section):
    backend: str = 'micro-cnn'
    seed: int = 0
    channels: Tuple[int, ...] = (8, 16)
    num_classes: int = 4
    weights: Optional[str] = None

    @validator('backend')
    def _check_backend(cls, v):
        resolve_backends(v)
        return v

    @validator('channels', pre=True)
    def _wrap_single(cls, v):
        return (v,) if isinstance(v, int) else v

    @validator('channels')
    def _check_channels(cls, v):
        if not v or any(c < 1 for c in v):
            raise ValueError('model.channels should be positive')
        return v

    @validator('num_classes')
    def _check_classes(cls, v):
        if v < 2:
            raise ValueError('model.num_classes should be >= 2')
        return v


class TcavSection(_Section):
    concept: str = 'yellowing'
    layer: str = 'conv2'
    set_size: int = 20
    batch_size: int = 20

    @validator('set_size')
    def _check_set(cls, v):
        if v < 10:
            raise ValueError('tcav.set_size should be >= 10')
        return v

    @validator('batch_size')
    def _check_batch(cls, v):
        if v < 1:
            raise ValueError('tcav.batch_size should be >= 1')
        return v


class FusionSection(_Section):
    weights: Optional[Tuple[float, float, float, float]] = None
    temperature: float = 1.0

    @validator('weights', pre=True)
    def _uniform(cls, v):
        if isinstance(v, str) and v.strip().lower() == 'uniform':
            return None
        return v

    @validator('weights')
    def _check_weights(cls, v):
        if v is not None and (any(w < 0 for w in v) or sum(v) <= 0):
            raise ValueError('fusion.weights should be non-negative and not all zero')
        return v

    @validator('temperature')
    def _check_temperature(cls, v):
        if v <= 0:
            raise ValueError('fusion.temperature should be > 0')
        return v


class MaiaSection(_Section):
    alpha: float = 1 / 3
    beta: float = 1 / 3
    delta: float = 1 / 3
    top_k: int = 2
    estimate: bool = False
    score: Dict[str, Dict[str, Tuple[float, float, float]]] = {}

    @validator('top_k')
    def _check_top_k(cls, v):
        if not 1 <= v <= 4:
            raise ValueError('maia.top_k should lie in [1, 4]')
        return v

    @validator('alpha', 'beta', 'delta')
    def _check_blend(cls, v):
        if v < 0:
            raise ValueError('maia blend weights should be >= 0')
        return v


class HisSection(_Section):
    gamma: float = 1.0


class TriggerSection(_Section):
    entropy: float = 0.3
    agreement: float = 0.75
    margin: float = 0.1
    weak_labeled: bool = False
    gate: bool = False

    @validator('entropy')
    def _check_entropy(cls, v):
        if v < 0:
            raise ValueError('trigger.entropy should be >= 0')
        return v

    @validator('agreement', 'margin')
    def _check_unit(cls, v, field):
        return _unit_interval(v, f'trigger.{field.name}')


class AlignSection(_Section):
    threshold: float = 0.6

    @validator('threshold')
    def _check(cls, v):
        if not -1 <= v <= 1:
            raise ValueError('align.threshold should lie in [-1, 1]')
        return v


class DriftSection(_Section):
    threshold: float = 0.5

    @validator('threshold')
    def _check(cls, v):
        return _unit_interval(v, 'drift.threshold')


class BinarizeSection(_Section):
    fraction: float = 0.5

    @validator('fraction')
    def _check(cls, v):
        return _unit_interval(v, 'binarize.fraction')


class DetectSection(_Section):
    iou: float = 0.5

    @validator('iou')
    def _check(cls, v):
        if not 0 < v < 1:
            raise ValueError('detect.iou should lie in (0, 1)')
        return v


class EvaluateSection(_Section):
    step: float = 0.02
    patch: int = 8

    @validator('step')
    def _check_step(cls, v):
        if not 0 < v <= 0.5:
            raise ValueError('evaluate.step should lie in (0, 0.5]')
        return v

    @validator('patch')
    def _check_patch(cls, v):
        if v < 1:
            raise ValueError('evaluate.patch should be >= 1')
        return v


class ReportSection(_Section):
    timing: bool = False


class RunConfig(_Section):
    explain: ExplainSection = ExplainSection()
    model: ModelSection = ModelSection()
    rise: RiseConfig = RiseConfig()
    tcav: TcavSection = TcavSection()
    fusion: FusionSection = FusionSection()
    maia: MaiaSection = MaiaSection()
    his: HisSection = HisSection()
    trigger: TriggerSection = TriggerSection()
    align: AlignSection = AlignSection()
    drift: DriftSection = DriftSection()
    binarize: BinarizeSection = BinarizeSection()
    labeler: LabelerSettings = LabelerSettings()
    detect: DetectSection = DetectSection()
    evaluate: EvaluateSection = EvaluateSection()
    gates: GateThresholds = GateThresholds()
    report: ReportSection = ReportSection()

    @root_validator(skip_on_failure=True)
    def _check_patch_divides(cls, values):
        size, patch = values['explain'].size, values['evaluate'].patch
        if size % patch:
            raise ValueError(f'evaluate.patch {patch} should divide explain.size {size}')
        return values


def parse_value(text: str) -> Any:
    text = text.strip()
    if ',' in text:
        return [parse_value(t) for t in text.split(',')]
    low = text.lower()
    if low in ('true', 'false'):
        return low == 'true'
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str, source: str = '<config>') -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{lineno}: expected "key = value", got "{line}"')
        key, value = (s.strip() for s in line.split('=', 1))
        parts = key.split('.')
        if len(parts) < 2 or not all(parts):
            raise ConfigError(f'{source}:{lineno}: key "{key}" should be "section.name"')
        node = tree
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f'{source}:{lineno}: key "{key}" collides with a value')
        if parts[-1] in node:
            raise ConfigError(f'{source}:{lineno}: duplicate key "{key}"')
        node[parts[-1]] = parse_value(value)
    return tree


def _merge(base: Dict[str, Any], extra: Mapping[str, Any]) -> Dict[str, Any]:
    res = dict(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(res.get(k), Mapping):
            res[k] = _merge(res[k], v)
        else:
            res[k] = v
    return res


def _build(tree: Mapping[str, Any], source: str) -> RunConfig:
    try:
        return RunConfig.parse_obj(tree)
    except ValidationError as e:
        raise ConfigError(f'{source}: {e}')


def load_config(path: PathLike) -> RunConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f'cannot read config {path}: {e}')
    return _build(parse_config_text(text, str(path)), str(path))


def resolve_config(
        path: Optional[PathLike] = None,
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
        ) -> RunConfig:
    r"""
    :param path: explicit config file; falls back to $TRIGGER_XAI_CONFIG
    :param overrides: dotted keys to values, applied last
    """
    environ = os.environ if environ is None else environ
    path = path or environ.get(ENV_CONFIG) or None
    tree: Dict[str, Any] = {}
    source = '<defaults>'
    if path:
        logger.debug(f'Reading config {path}')
        try:
            with open(path, 'r', encoding='utf-8') as f:
                tree = parse_config_text(f.read(), str(path))
        except OSError as e:
            raise ConfigError(f'cannot read config {path}: {e}')
        source = str(path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node: Dict[str, Any] = {}
        parts = key.split('.')
        cur = node
        for p in parts[:-1]:
            cur = cur.setdefault(p, {})
        cur[parts[-1]] = value
        tree = _merge(tree, node)
    return _build(tree, source)
