import abc
from collections import namedtuple
from typing import Dict, List

import numpy as np

from .errors import UnsupportedMethodError
from .numeric import softmax
from .typing import ImageRGB


__all__ = ['ActivationTape', 'ForwardResult', 'ModelBackend']


class ActivationTape(dict):
    r"""
    Per-call record of a forward pass.

    Keys are layer names mapping to post-activation arrays Phi^L(I)
    (shape (C,h,w) for spatial layers, (K,) for dense ones). Pre-activations
    live in `pre` under the same names; `input` holds the float64 image.
    """
    def __init__(self, input: np.ndarray):
        super().__init__()
        self.input = input
        self.pre: Dict[str, np.ndarray] = {}


ForwardResult = namedtuple('ForwardResult', ['logits', 'probs', 'tape'])


class ModelBackend(abc.ABC):
    r"""
    Contract every explained model satisfies.

    - `forward` is deterministic for fixed weights
    - gradients are of the pre-softmax class logit S_c
    - `predict` is the black-box entry point (logits only, batched)
    """
    model_id: str = 'model'
    model_kind: str = 'cnn'

    @property
    @abc.abstractmethod
    def layer_names(self) -> List[str]:
        raise NotImplementedError()

    @property
    @abc.abstractmethod
    def num_classes(self) -> int:
        raise NotImplementedError()

    @property
    def spatial_layers(self) -> List[str]:
        return list(self.layer_names)

    @property
    def supports_bias_gradients(self) -> bool:
        return False

    @abc.abstractmethod
    def forward(self, image: ImageRGB) -> ForwardResult:
        raise NotImplementedError()

    def predict(self, images: np.ndarray) -> np.ndarray:
        r""" images (N,3,H,W) -> logits (N,K) """
        return np.stack([self.forward(img).logits for img in images])

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return np.stack([softmax(z) for z in self.predict(images)])

    @abc.abstractmethod
    def grad_wrt_activations(
            self,
            tape: ActivationTape,
            class_index: int,
            layer: str,
            ) -> np.ndarray:
        raise NotImplementedError()

    @abc.abstractmethod
    def grad_wrt_input(self, image: ImageRGB, class_index: int) -> np.ndarray:
        raise NotImplementedError()

    def grad_wrt_biases(
            self,
            image: ImageRGB,
            class_index: int,
            spatial: bool = False,
            ) -> Dict[str, np.ndarray]:
        raise UnsupportedMethodError(f'{type(self).__name__} exposes no bias gradients')

    def biases(self) -> Dict[str, np.ndarray]:
        return {}

    def check_class(self, class_index: int):
        if not 0 <= int(class_index) < self.num_classes:
            raise ValueError(f'class_index {class_index} out of range [0, {self.num_classes})')

    def check_layer(self, layer: str):
        if layer not in self.layer_names:
            raise ValueError(f'Unknown layer "{layer}". Valid layers: {self.layer_names}')
