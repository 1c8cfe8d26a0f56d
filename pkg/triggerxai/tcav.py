r"""
Concept activation vectors and TCAV scores.

A CAV is the unit normal of a logistic separator between concept images and
random images in one layer's flattened feature space. The TCAV score of a
class is the fraction of images whose class-logit gradient at that layer has
a strictly positive projection on the CAV.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, validator

from .model import ModelBackend
from .numeric import as_grid, as_image
from .preprocessing import red_green_ratio_map, yellow_band
from .saliency import EMPTY_SALIENCY, SaliencyMap, method_manager
from .typing import Grid2D, ImageRGB


__all__ = [
    'MIN_CONCEPT_SET',
    'CONCEPTS',
    'ConceptActivationVector',
    'ConceptSet',
    'train_cav',
    'tcav_directional',
    'tcav_score',
    'tcav_concept_map',
    'build_concept_set',
    'concept_mask',
    'tcav_method',
]


logger = logging.getLogger(__name__)

MIN_CONCEPT_SET = 10
EPOCHS = 200
LEARNING_RATE = 0.01
TRAIN_FRACTION = 0.8
UNIT_TOL = 1e-6

# concept -> paint colour used when building concept sets
CONCEPTS = {
    'yellowing': (0.9, 0.85, 0.1),
    'bronzing': (0.85, 0.2, 0.1),
}


class ConceptActivationVector(BaseModel):
    concept_id: str
    layer: str
    direction: np.ndarray
    accuracy: float

    class Config:
        arbitrary_types_allowed = True

    @validator('direction')
    def _check_unit(cls, v):
        v = np.asarray(v, dtype=np.float64).ravel()
        if abs(np.linalg.norm(v) - 1) > UNIT_TOL:
            raise ValueError('CAV direction should have unit norm')
        return v

    @validator('accuracy')
    def _check_accuracy(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('accuracy should lie in [0, 1]')
        return v

    def negated(self) -> 'ConceptActivationVector':
        return self.copy(update={'direction': -self.direction})


class ConceptSet(BaseModel):
    concept_id: str
    positives: List[np.ndarray]
    randoms: List[np.ndarray]

    class Config:
        arbitrary_types_allowed = True

    @validator('positives', 'randoms')
    def _check_size(cls, v):
        if len(v) < MIN_CONCEPT_SET:
            raise ValueError(f'concept sets need at least {MIN_CONCEPT_SET} items, got {len(v)}')
        return v


def _layer_features(model: ModelBackend, images: Sequence[ImageRGB], layer: str) -> np.ndarray:
    return np.stack([
        np.asarray(model.forward(img).tape[layer], dtype=np.float64).ravel()
        for img in images
    ])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1 + np.tanh(0.5 * z))


def train_cav(
        model: ModelBackend,
        layer: str,
        concepts: ConceptSet,
        seed: int = 0,
        ) -> ConceptActivationVector:
    r"""
    Full-batch gradient descent on the logistic loss, features centered on
    the training mean, 80/20 train/held-out split drawn from `seed`.
    """
    model.check_layer(layer)
    X = _layer_features(model, list(concepts.positives) + list(concepts.randoms), layer)
    y = np.r_[np.ones(len(concepts.positives)), np.zeros(len(concepts.randoms))]
    if not np.any(X.std(axis=0) > 0):
        raise ValueError(f'degenerate features at layer "{layer}" (zero variance)')

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    n_train = int(round(TRAIN_FRACTION * len(y)))
    train, held = order[:n_train], order[n_train:]
    mean = X[train].mean(axis=0)
    Xt = X[train] - mean
    yt = y[train]

    w = rng.normal(0, 0.01, X.shape[1])
    b = 0.0
    for _ in range(EPOCHS):
        err = _sigmoid(Xt @ w + b) - yt
        w -= LEARNING_RATE * (Xt.T @ err) / len(yt)
        b -= LEARNING_RATE * err.mean()

    norm = np.linalg.norm(w)
    if norm == 0:
        raise ValueError('CAV training collapsed to a zero vector')
    pred = (X[held] - mean) @ w + b > 0
    accuracy = float((pred == (y[held] == 1)).mean()) if len(held) else 0.0
    logger.debug(f'CAV {concepts.concept_id}@{layer}: held-out accuracy {accuracy:.3f}')
    return ConceptActivationVector(
        concept_id=concepts.concept_id, layer=layer, direction=w / norm, accuracy=accuracy,
    )


def tcav_directional(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        cav: ConceptActivationVector,
        ) -> float:
    model.check_layer(cav.layer)
    model.check_class(class_index)
    tape = model.forward(image).tape
    grad = np.asarray(model.grad_wrt_activations(tape, class_index, cav.layer), dtype=np.float64).ravel()
    if grad.size != cav.direction.size:
        raise ValueError(f'CAV dimension {cav.direction.size} does not match layer size {grad.size}')
    return float(grad @ cav.direction)


def tcav_score(
        model: ModelBackend,
        images: Sequence[ImageRGB],
        class_index: int,
        cav: ConceptActivationVector,
        ) -> float:
    if len(images) == 0:
        raise ValueError('empty batch')
    positive = [tcav_directional(model, img, class_index, cav) > 0 for img in images]
    return sum(positive) / len(positive)


def tcav_concept_map(
        mask: Grid2D,
        score: float,
        model_id: str = '',
        class_index: int = 0,
        layer: Optional[str] = None,
        ) -> SaliencyMap:
    if not 0 <= score <= 1:
        raise ValueError(f'TCAV score should lie in [0, 1], got {score}')
    mask = (as_grid(mask, 'concept mask') > 0.5).astype(np.float64)
    grid = score * mask
    flags = [] if np.any(grid > 0) else [EMPTY_SALIENCY]
    return SaliencyMap(
        grid=grid, method='tcav-concept', model_id=model_id, class_index=class_index,
        layer=layer, flags=flags, extras={'tcav_score': float(score)},
    )


def concept_mask(image: ImageRGB, concept: str) -> Grid2D:
    r""" pixel rule marking where `concept` is visible """
    if concept == 'yellowing':
        return yellow_band(image)
    if concept == 'bronzing':
        img = as_image(image)
        return ((red_green_ratio_map(img) > 1.3) & (img[0] > 0.4)).astype(np.float64)
    raise ValueError(f'Unknown concept "{concept}". Valid: {list(CONCEPTS)}')


def _paint_patches(img: np.ndarray, rng: np.random.Generator, colour, n_patches: int = 3) -> np.ndarray:
    out = img.copy()
    H, W = out.shape[1:]
    size = max(2, min(H, W) // 4)
    for _ in range(n_patches):
        r = int(rng.integers(0, H - size + 1))
        c = int(rng.integers(0, W - size + 1))
        out[:, r:r+size, c:c+size] = np.asarray(colour, dtype=np.float32).reshape(3, 1, 1)
    return out


def build_concept_set(image: ImageRGB, concept: str, size: int = 20, seed: int = 0) -> ConceptSet:
    r"""
    Positives are copies of `image` with concept-coloured patches painted at
    seeded positions; randoms carry patches of random colours.
    """
    if concept not in CONCEPTS:
        raise ValueError(f'Unknown concept "{concept}". Valid: {list(CONCEPTS)}')
    img = as_image(image)
    rng = np.random.default_rng(seed)
    positives = [_paint_patches(img, rng, CONCEPTS[concept]) for _ in range(size)]
    randoms = [_paint_patches(img, rng, rng.random(3)) for _ in range(size)]
    return ConceptSet(concept_id=concept, positives=positives, randoms=randoms)


def _jitter_batch(image: ImageRGB, size: int, seed: int) -> List[np.ndarray]:
    img = as_image(image)
    rng = np.random.default_rng(seed)
    return [
        np.clip(img + rng.normal(0, 0.03, img.shape), 0, 1).astype(np.float32)
        for _ in range(size)
    ]


@method_manager.register('tcav')
def tcav_method(
        model: ModelBackend,
        image: ImageRGB,
        class_index: int,
        concept: str = 'yellowing',
        layer: Optional[str] = None,
        set_size: int = 20,
        batch_size: int = 20,
        seed: int = 0,
        ) -> SaliencyMap:
    r"""
    Spatial stand-in for TCAV: score x concept mask. The score is measured
    over seeded jittered copies of the explained image.
    """
    layer = layer or model.spatial_layers[-1]
    concepts = build_concept_set(image, concept, set_size, seed)
    cav = train_cav(model, layer, concepts, seed)
    score = tcav_score(model, _jitter_batch(image, batch_size, seed), class_index, cav)
    res = tcav_concept_map(
        concept_mask(image, concept), score,
        model_id=model.model_id, class_index=class_index, layer=layer,
    )
    res.extras['cav_accuracy'] = cav.accuracy
    return res
