r"""
Seeded reference backend: conv3x3(+ReLU) x L -> global average pool -> dense.

Only ReLU nonlinearities and biases, so the pre-softmax logit is piecewise
linear in (input, biases) and FullGrad completeness holds exactly.
"""
import logging
import struct
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, validator

from .errors import WeightFileError
from .model import ActivationTape, ForwardResult, ModelBackend
from .numeric import softmax
from .typing import ImageRGB, PathLike


__all__ = [
    'MicroNetSpec',
    'MicroNet',
    'build_micro_net',
    'load_weights',
    'save_weights',
    'MIN_INPUT_SIZE',
]


logger = logging.getLogger(__name__)

MAGIC = b'TXW1'
MIN_INPUT_SIZE = 8
IN_CHANNELS = 3


class MicroNetSpec(BaseModel):
    channels: Tuple[int, ...] = (8, 16)
    num_classes: int = 4

    @validator('channels')
    def _check_channels(cls, v):
        if len(v) < 1:
            raise ValueError('at least one conv layer is required')
        if any(c < 1 for c in v):
            raise ValueError(f'conv channels should be >= 1, got {v}')
        return tuple(v)

    @validator('num_classes')
    def _check_classes(cls, v):
        if v < 1:
            raise ValueError('num_classes should be >= 1')
        return v


def _conv3x3(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    r""" x (...,C,H,W), w (O,C,3,3) -> (...,O,H,W); stride 1, zero padding 1 """
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    patches = sliding_window_view(np.pad(x, pad), (3, 3), axis=(-2, -1))
    out = np.einsum('...chwij,ocij->...ohw', patches, w, optimize=True)
    if b is not None:
        out = out + b.reshape(-1, 1, 1)
    return out


def _conv3x3_backward(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    r""" gradient w.r.t. the conv input given the gradient w.r.t. its output """
    w_flip = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return _conv3x3(dy, w_flip)


class MicroNet(ModelBackend):
    r"""
    Frozen network. Weights are stored float32; every computation runs in
    float64. Calls allocate their own tapes, so one instance can serve
    concurrent explanations.
    """
    def __init__(
            self,
            conv_weights: List[np.ndarray],
            conv_biases: List[np.ndarray],
            dense_weight: np.ndarray,
            dense_bias: np.ndarray,
            model_kind: str = 'cnn',
            model_id: Optional[str] = None,
            ):
        if len(conv_weights) != len(conv_biases) or len(conv_weights) == 0:
            raise ValueError('conv weights and biases should be non-empty and paired')
        in_ch = IN_CHANNELS
        for i, (w, b) in enumerate(zip(conv_weights, conv_biases)):
            if w.ndim != 4 or w.shape[1:] != (in_ch, 3, 3) or b.shape != (w.shape[0],):
                raise ValueError(f'conv{i+1} has inconsistent shapes {w.shape} / {b.shape}')
            in_ch = w.shape[0]
        if dense_weight.shape[1:] != (in_ch,) or dense_bias.shape != (dense_weight.shape[0],):
            raise ValueError(f'dense has inconsistent shapes {dense_weight.shape} / {dense_bias.shape}')
        self.conv_weights = [np.asarray(w, dtype=np.float32) for w in conv_weights]
        self.conv_biases = [np.asarray(b, dtype=np.float32) for b in conv_biases]
        self.dense_weight = np.asarray(dense_weight, dtype=np.float32)
        self.dense_bias = np.asarray(dense_bias, dtype=np.float32)
        for arr in self.conv_weights + self.conv_biases + [self.dense_weight, self.dense_bias]:
            arr.setflags(write=False)
        self.model_kind = model_kind
        self.model_id = model_id or f'micronet-{model_kind}'

    @property
    def spec(self) -> MicroNetSpec:
        return MicroNetSpec(
            channels=tuple(w.shape[0] for w in self.conv_weights),
            num_classes=self.num_classes,
        )

    @property
    def conv_names(self) -> List[str]:
        return [f'conv{i+1}' for i in range(len(self.conv_weights))]

    @property
    def layer_names(self) -> List[str]:
        return self.conv_names + ['dense']

    @property
    def spatial_layers(self) -> List[str]:
        return self.conv_names

    @property
    def num_classes(self) -> int:
        return self.dense_weight.shape[0]

    @property
    def supports_bias_gradients(self) -> bool:
        return True

    def biases(self) -> Dict[str, np.ndarray]:
        res = {name: b.astype(np.float64) for name, b in zip(self.conv_names, self.conv_biases)}
        res['dense'] = self.dense_bias.astype(np.float64)
        return res

    def _check_image(self, image) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim < 3 or x.shape[-3] != IN_CHANNELS:
            raise ValueError(f'image should have shape (...,3,H,W), got {x.shape}')
        if x.shape[-1] < MIN_INPUT_SIZE or x.shape[-2] < MIN_INPUT_SIZE:
            raise ValueError(f'image too small: {x.shape[-2:]} (minimum {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE})')
        return x

    def _run(self, x: np.ndarray, start: int = 0, tape: Optional[ActivationTape] = None) -> np.ndarray:
        r""" run conv layers from index `start` (x is that layer's input) through the head """
        a = x
        for i in range(start, len(self.conv_weights)):
            z = _conv3x3(a, self.conv_weights[i].astype(np.float64), self.conv_biases[i].astype(np.float64))
            a = np.maximum(z, 0)
            if tape is not None:
                tape.pre[self.conv_names[i]] = z
                tape[self.conv_names[i]] = a
        pooled = a.mean(axis=(-2, -1))
        logits = pooled @ self.dense_weight.astype(np.float64).T + self.dense_bias.astype(np.float64)
        if tape is not None:
            tape.pre['dense'] = logits
            tape['dense'] = logits
        return logits

    def forward(self, image: ImageRGB) -> ForwardResult:
        x = self._check_image(image)
        if x.ndim != 3:
            raise ValueError('forward takes a single image; use predict for batches')
        tape = ActivationTape(x)
        logits = self._run(x, tape=tape)
        return ForwardResult(logits, softmax(logits), tape)

    def predict(self, images: np.ndarray) -> np.ndarray:
        x = self._check_image(images)
        if x.ndim == 3:
            x = x[None]
        return self._run(x)

    def logits_from(self, layer: str, activation: np.ndarray) -> np.ndarray:
        r""" partial forward: logits given the post-activation of `layer` """
        self.check_layer(layer)
        a = np.asarray(activation, dtype=np.float64)
        if layer == 'dense':
            return a
        index = self.conv_names.index(layer)
        if index + 1 < len(self.conv_weights):
            return self._run(a, start=index + 1)
        pooled = a.mean(axis=(-2, -1))
        return pooled @ self.dense_weight.astype(np.float64).T + self.dense_bias.astype(np.float64)

    def _backward(self, tape: ActivationTape, class_index: int):
        r"""
        Returns (d_act, d_pre, d_input) for the class logit, where d_act and
        d_pre map layer names to gradients w.r.t. post- and pre-activations.
        """
        self.check_class(class_index)
        d_act: Dict[str, np.ndarray] = {}
        d_pre: Dict[str, np.ndarray] = {}
        onehot = np.zeros(self.num_classes)
        onehot[class_index] = 1.0
        d_act['dense'] = onehot
        d_pre['dense'] = onehot

        last = self.conv_names[-1]
        C, h, w = tape[last].shape
        d_pooled = self.dense_weight[class_index].astype(np.float64)
        da = np.broadcast_to(d_pooled.reshape(C, 1, 1) / (h * w), (C, h, w)).copy()
        for i in reversed(range(len(self.conv_weights))):
            name = self.conv_names[i]
            d_act[name] = da
            dz = da * (tape.pre[name] > 0)
            d_pre[name] = dz
            da = _conv3x3_backward(dz, self.conv_weights[i].astype(np.float64))
        return d_act, d_pre, da

    def grad_wrt_activations(self, tape: ActivationTape, class_index: int, layer: str) -> np.ndarray:
        self.check_layer(layer)
        d_act, _, _ = self._backward(tape, class_index)
        return d_act[layer]

    def grad_wrt_input(self, image: ImageRGB, class_index: int) -> np.ndarray:
        tape = self.forward(image).tape
        _, _, d_input = self._backward(tape, class_index)
        return d_input

    def grad_wrt_biases(self, image: ImageRGB, class_index: int, spatial: bool = False) -> Dict[str, np.ndarray]:
        r"""
        spatial=False: dS_c/db^l, one vector per biased layer
        spatial=True:  conv layers keep the per-position gradient (C,h,w)
                       whose spatial sum is dS_c/db^l
        """
        tape = self.forward(image).tape
        _, d_pre, _ = self._backward(tape, class_index)
        res = {}
        for name in self.conv_names:
            res[name] = d_pre[name] if spatial else d_pre[name].sum(axis=(1, 2))
        res['dense'] = d_pre['dense']
        return res


def build_micro_net(
        seed: int,
        spec: Optional[MicroNetSpec] = None,
        model_kind: str = 'cnn',
        model_id: Optional[str] = None,
        ) -> MicroNet:
    r""" weights and biases drawn from uniform(-0.1, 0.1), stored float32 """
    spec = spec or MicroNetSpec()
    rng = np.random.default_rng(seed)
    conv_weights, conv_biases = [], []
    in_ch = IN_CHANNELS
    for out_ch in spec.channels:
        conv_weights.append(rng.uniform(-0.1, 0.1, (out_ch, in_ch, 3, 3)).astype(np.float32))
        conv_biases.append(rng.uniform(-0.1, 0.1, (out_ch,)).astype(np.float32))
        in_ch = out_ch
    dense_weight = rng.uniform(-0.1, 0.1, (spec.num_classes, in_ch)).astype(np.float32)
    dense_bias = rng.uniform(-0.1, 0.1, (spec.num_classes,)).astype(np.float32)
    logger.debug(f'Built micro net seed={seed} spec={spec.channels}->{spec.num_classes}')
    return MicroNet(
        conv_weights, conv_biases, dense_weight, dense_bias,
        model_kind=model_kind,
        model_id=model_id or f'micronet-{model_kind}-s{seed}',
    )


def _pack_array(arr: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(arr, dtype='<f4').ravel()
    return struct.pack('<I', flat.size) + flat.tobytes()


def save_weights(net: MicroNet, path: PathLike):
    r"""
    Layout: magic "TXW1", u32 layer count, then per layer:
    u32 name length, UTF-8 name, u32 weight count, f32 LE weights,
    u32 bias count, f32 LE biases.
    """
    layers = list(zip(net.conv_names, net.conv_weights, net.conv_biases))
    layers.append(('dense', net.dense_weight, net.dense_bias))
    chunks = [MAGIC, struct.pack('<I', len(layers))]
    for name, w, b in layers:
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)) + encoded)
        chunks.append(_pack_array(w))
        chunks.append(_pack_array(b))
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise WeightFileError(f'truncated weight file while reading {what}', self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack('<I', self.take(4, what))[0]

    def floats(self, what: str) -> np.ndarray:
        count = self.u32(f'{what} count')
        return np.frombuffer(self.take(4 * count, what), dtype='<f4').astype(np.float32)


def load_weights(path: PathLike, model_kind: str = 'cnn', model_id: Optional[str] = None) -> MicroNet:
    with open(path, 'rb') as f:
        data = f.read()
    reader = _Reader(data)
    if reader.take(4, 'magic') != MAGIC:
        raise WeightFileError('wrong magic bytes, expected TXW1', 0)
    n_layers = reader.u32('layer count')
    if n_layers < 2:
        raise WeightFileError(f'expected at least 2 layers, got {n_layers}', 4)

    conv_weights, conv_biases = [], []
    dense = None
    in_ch = IN_CHANNELS
    for i in range(n_layers):
        start = reader.offset
        name_len = reader.u32('name length')
        try:
            name = reader.take(name_len, 'layer name').decode('utf-8')
        except UnicodeDecodeError:
            raise WeightFileError('layer name is not UTF-8', start + 4)
        w_offset = reader.offset
        w = reader.floats(f'{name} weights')
        b = reader.floats(f'{name} biases')
        if i < n_layers - 1:
            out_ch = b.size
            if out_ch == 0 or w.size != out_ch * in_ch * 9:
                raise WeightFileError(f'{name}: {w.size} weights do not fit a 3x3 conv {in_ch}->{out_ch}', w_offset)
            conv_weights.append(w.reshape(out_ch, in_ch, 3, 3))
            conv_biases.append(b)
            in_ch = out_ch
        else:
            if name != 'dense' or b.size == 0 or w.size != b.size * in_ch:
                raise WeightFileError(f'{name}: last layer should be a dense {in_ch}->{b.size}', w_offset)
            dense = (w.reshape(b.size, in_ch), b)
    if reader.offset != len(data):
        raise WeightFileError('trailing bytes after last layer', reader.offset)
    logger.debug(f'Loaded {n_layers} layers from {path}')
    return MicroNet(conv_weights, conv_biases, dense[0], dense[1], model_kind=model_kind, model_id=model_id)
