r"""
Seeded synthetic scenes and test doubles.

Scenes are 32x32. The base is one leaf green per scene (R, B in
[0.15, 0.25], G in [0.6, 0.7]) plus uniform noise of +-0.02 per channel, so
the quantized gray level (8 levels) of the background never moves by more
than one step. Symptoms are painted on top without noise:

- YellowSpots: one 7x7 (0.9, 0.85, 0.1) square per quadrant
  (yellow mass 196/1024 ~ 0.19)
- ReddishBronzing: a full-width band of 24 rows of (0.85, 0.2, 0.1)
  (red/green ratio >= 2)
- SilkWebbing: a 12x12 patch of alternating white and black columns
  (mean GLCM contrast ~ 4.7)
- Healthy: nothing

With the default labeler thresholds only the matching labeling function
votes on each scene.
"""
import logging
from collections import namedtuple
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import spearmanr

from .imageio import write_ppm
from .labeling import DiseaseLabel
from .micronet import MicroNet
from .model import ActivationTape, ForwardResult, ModelBackend
from .numeric import as_image, softmax
from .typing import Grid2D, ImageRGB, PathLike


__all__ = [
    'SCENE_SIZE',
    'SyntheticScene',
    'gen_scene',
    'export_scene',
    'occlusion_oracle',
    'rank_correlation',
    'brute_force_iou_raster',
    'planted_micro_net',
    'ConstantBackend',
    'LinearPixelBackend',
    'PlantedConceptBackend',
    'CenteredEnergyBackend',
    'CountingBackend',
]


logger = logging.getLogger(__name__)

SCENE_SIZE = 32
YELLOW = (0.9, 0.85, 0.1)
BRONZE = (0.85, 0.2, 0.1)

SyntheticScene = namedtuple('SyntheticScene', ['image', 'mask', 'label', 'seed'])


def _paint(img: np.ndarray, mask: np.ndarray, r: int, c: int, h: int, w: int, colour):
    img[:, r:r+h, c:c+w] = np.asarray(colour, dtype=np.float64).reshape(3, 1, 1)
    mask[r:r+h, c:c+w] = 1


def gen_scene(label: DiseaseLabel, seed: int = 0) -> SyntheticScene:
    label = DiseaseLabel(label)
    if label is DiseaseLabel.Abstain:
        raise ValueError('no scene for Abstain')
    rng = np.random.default_rng(seed)
    n = SCENE_SIZE
    base = np.array([rng.uniform(0.15, 0.25), rng.uniform(0.6, 0.7), rng.uniform(0.15, 0.25)])
    img = base.reshape(3, 1, 1) + rng.uniform(-0.02, 0.02, (3, n, n))
    mask = np.zeros((n, n))

    if label is DiseaseLabel.YellowSpots:
        half = n // 2
        for qr in (0, half):
            for qc in (0, half):
                r, c = rng.integers(0, half - 7 + 1, size=2)
                _paint(img, mask, qr + int(r), qc + int(c), 7, 7, YELLOW)
    elif label is DiseaseLabel.ReddishBronzing:
        top = int(rng.integers(0, n - 24 + 1))
        _paint(img, mask, top, 0, 24, n, BRONZE)
    elif label is DiseaseLabel.SilkWebbing:
        r, c = (int(v) for v in rng.integers(0, n - 12 + 1, size=2))
        for k in range(12):
            _paint(img, mask, r, c + k, 12, 1, (1.0, 1.0, 1.0) if k % 2 == 0 else (0.0, 0.0, 0.0))
    return SyntheticScene(np.clip(img, 0, 1).astype(np.float32), mask, label, seed)


def export_scene(scene: SyntheticScene, directory: PathLike, stem: Optional[str] = None) -> Tuple[Path, Path]:
    r""" writes <stem>.ppm (P6) and <stem>_mask.ppm (P5); returns both paths """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or f'{scene.label.value}_{scene.seed}'
    image_path, mask_path = directory / f'{stem}.ppm', directory / f'{stem}_mask.ppm'
    write_ppm(image_path, scene.image)
    write_ppm(mask_path, scene.mask)
    return image_path, mask_path


def occlusion_oracle(model: ModelBackend, image: ImageRGB, class_index: int, patch: int = 8) -> Grid2D:
    r""" class-logit drop when each patch is zeroed, broadcast over the patch """
    x = as_image(image, dtype=np.float64)
    H, W = x.shape[1:]
    if patch < 1 or H % patch or W % patch:
        raise ValueError(f'patch {patch} should divide the image dims ({H}, {W})')
    base = float(np.asarray(model.predict(x[None]))[0, class_index])
    out = np.zeros((H, W))
    for r in range(0, H, patch):
        for c in range(0, W, patch):
            o = x.copy()
            o[:, r:r+patch, c:c+patch] = 0
            out[r:r+patch, c:c+patch] = base - float(np.asarray(model.predict(o[None]))[0, class_index])
    return out


def rank_correlation(a: Grid2D, b: Grid2D) -> float:
    rho, _ = spearmanr(np.ravel(a), np.ravel(b))
    return float(rho)


def brute_force_iou_raster(a: Grid2D, b: Grid2D) -> float:
    a, b = np.asarray(a), np.asarray(b)
    inter = union = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            x, y = a[i, j] > 0.5, b[i, j] > 0.5
            inter += x and y
            union += x or y
    return 1.0 if union == 0 else inter / union


def planted_micro_net(num_classes: int = 4) -> MicroNet:
    r"""
    Two 3-channel identity convs; conv1 subtracts 0.3 from the red plane and
    class c of the head reads channel c (c < 3). The class-0 logit is the
    mean of relu(R - 0.3).
    """
    eye = np.zeros((3, 3, 3, 3), dtype=np.float32)
    for ch in range(3):
        eye[ch, ch, 1, 1] = 1
    dense = np.zeros((num_classes, 3), dtype=np.float32)
    for c in range(min(3, num_classes)):
        dense[c, c] = 1
    return MicroNet(
        [eye, eye.copy()],
        [np.array([-0.3, 0, 0], dtype=np.float32), np.zeros(3, dtype=np.float32)],
        dense, np.zeros(num_classes, dtype=np.float32),
        model_kind='cnn', model_id='planted',
    )


class _FeatureBackend(ModelBackend):
    r""" the single layer 'features' is the input image itself """
    layer = 'features'

    def __init__(self, num_classes: int = 2, model_id: Optional[str] = None):
        self._num_classes = num_classes
        self.model_id = model_id or type(self).__name__

    @property
    def layer_names(self) -> List[str]:
        return [self.layer]

    @property
    def num_classes(self) -> int:
        return self._num_classes

    def logits(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    def grad(self, x: np.ndarray, class_index: int) -> np.ndarray:
        raise NotImplementedError()

    def forward(self, image: ImageRGB) -> ForwardResult:
        x = np.asarray(image, dtype=np.float64)
        tape = ActivationTape(x)
        tape[self.layer] = x
        z = self.logits(x)
        return ForwardResult(z, softmax(z), tape)

    def grad_wrt_activations(self, tape: ActivationTape, class_index: int, layer: str) -> np.ndarray:
        self.check_layer(layer)
        self.check_class(class_index)
        return self.grad(tape.input, class_index)

    def grad_wrt_input(self, image: ImageRGB, class_index: int) -> np.ndarray:
        self.check_class(class_index)
        return self.grad(np.asarray(image, dtype=np.float64), class_index)


class ConstantBackend(_FeatureBackend):
    r""" ignores its input """
    def __init__(self, logits=(1.0, 0.0, 0.0, 0.0), model_id: Optional[str] = None):
        self._logits = np.asarray(logits, dtype=np.float64)
        super().__init__(len(self._logits), model_id)

    def logits(self, x):
        return self._logits.copy()

    def grad(self, x, class_index):
        return np.zeros_like(x)


class LinearPixelBackend(_FeatureBackend):
    r""" logit 0 = sum(weights * x); logit 1 = 0 """
    def __init__(self, weights: np.ndarray, model_id: Optional[str] = None):
        super().__init__(2, model_id)
        self.weights = np.asarray(weights, dtype=np.float64)

    @classmethod
    def single_pixel(cls, shape: Tuple[int, int], row: int, col: int) -> 'LinearPixelBackend':
        w = np.zeros((3,) + tuple(shape))
        w[:, row, col] = 1
        return cls(w)

    def logits(self, x):
        return np.array([float((self.weights * x).sum()), 0.0])

    def grad(self, x, class_index):
        return self.weights.copy() if class_index == 0 else np.zeros_like(x)


class PlantedConceptBackend(_FeatureBackend):
    r""" logit 0 = softplus(v . (x - 0.5)); its gradient is a positive multiple of v """
    def __init__(self, direction: np.ndarray, model_id: Optional[str] = None):
        super().__init__(2, model_id)
        self.direction = np.asarray(direction, dtype=np.float64)

    def _z(self, x):
        return float((self.direction * (x - 0.5)).sum())

    def logits(self, x):
        return np.array([np.logaddexp(0, self._z(x)), 0.0])

    def grad(self, x, class_index):
        if class_index != 0:
            return np.zeros_like(x)
        return 0.5 * (1 + np.tanh(0.5 * self._z(x))) * self.direction


class CenteredEnergyBackend(_FeatureBackend):
    r""" logit 0 = ||x - 0.5||^2 / 2; its gradient is x - 0.5 """
    def logits(self, x):
        return np.array([0.5 * float(((x - 0.5) ** 2).sum()), 0.0])

    def grad(self, x, class_index):
        return x - 0.5 if class_index == 0 else np.zeros_like(x)


class CountingBackend(ModelBackend):
    r""" wraps a backend and counts calls per entry point """
    def __init__(self, inner: ModelBackend):
        self.inner = inner
        self.model_id = inner.model_id
        self.model_kind = inner.model_kind
        self.calls: Dict[str, int] = {}

    def _count(self, name: str):
        self.calls[name] = self.calls.get(name, 0) + 1

    @property
    def layer_names(self) -> List[str]:
        return self.inner.layer_names

    @property
    def spatial_layers(self) -> List[str]:
        return self.inner.spatial_layers

    @property
    def num_classes(self) -> int:
        return self.inner.num_classes

    def forward(self, image):
        self._count('forward')
        return self.inner.forward(image)

    def predict(self, images):
        self._count('predict')
        return self.inner.predict(images)

    def grad_wrt_activations(self, tape, class_index, layer):
        self._count('grad_wrt_activations')
        return self.inner.grad_wrt_activations(tape, class_index, layer)

    def grad_wrt_input(self, image, class_index):
        self._count('grad_wrt_input')
        return self.inner.grad_wrt_input(image, class_index)

    def grad_wrt_biases(self, image, class_index, spatial=False):
        self._count('grad_wrt_biases')
        return self.inner.grad_wrt_biases(image, class_index, spatial)

    @property
    def gradient_calls(self) -> int:
        return sum(v for k, v in self.calls.items() if k.startswith('grad'))
