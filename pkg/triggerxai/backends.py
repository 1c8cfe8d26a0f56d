r"""
Model-stream presets. The three streams of the explain pipeline (local CNN,
global transformer, detector) are represented by distinct seeded micro nets
tagged with their model kind.
"""
import logging
from typing import List, Optional, Tuple

from .micronet import MicroNet, MicroNetSpec, build_micro_net, load_weights
from .typing import PathLike


__all__ = ['PRESET_BACKEND', 'BACKEND_KINDS', 'get_backend_preset', 'build_backend', 'resolve_backends']


logger = logging.getLogger(__name__)

# model kind -> (seed offset, kind tag used by MAIA)
PRESET_BACKEND = {
        'micro-cnn': {'seed_offset': 0, 'kind': 'cnn'},
        'vit-proxy': {'seed_offset': 101, 'kind': 'vit-proxy'},
        'yolo-proxy': {'seed_offset': 202, 'kind': 'yolo-proxy'},
        }
BACKEND_KINDS = list(PRESET_BACKEND.keys())
DEFAULT = {'seed_offset': 0, 'kind': 'cnn'}


def get_backend_preset(name: str) -> Tuple[int, str]:
    """
    :param name: backend name. Valid values: micro-cnn, vit-proxy, yolo-proxy
            otherwise the micro-cnn preset is given
    :return: seed_offset, kind
    """
    p = PRESET_BACKEND.get(name)
    if p is None:
        p = DEFAULT
    return p.get('seed_offset'), p.get('kind')


def build_backend(
        name: str,
        seed: int = 0,
        spec: Optional[MicroNetSpec] = None,
        weights: Optional[PathLike] = None,
        ) -> MicroNet:
    seed_offset, kind = get_backend_preset(name)
    if weights is not None:
        logger.debug(f'Loading {name} weights from {weights}')
        return load_weights(weights, model_kind=kind, model_id=f'{name}-file')
    return build_micro_net(seed + seed_offset, spec, model_kind=kind, model_id=f'{name}-s{seed}')


def resolve_backends(selection: str) -> List[str]:
    if selection == 'all':
        return list(BACKEND_KINDS)
    if selection not in PRESET_BACKEND:
        raise ValueError(f'Unknown backend "{selection}". Valid: {BACKEND_KINDS + ["all"]}')
    return [selection]
