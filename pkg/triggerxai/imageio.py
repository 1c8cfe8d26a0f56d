import csv
import logging
from io import BytesIO
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import PIL.Image

from .errors import InputError
from .formats import get_nbits_from_mode, is_supported_mode
from .numeric import as_image
from .typing import Grid2D, ImageRGB, PathLike


__all__ = [
    'read_image',
    'read_image_pillow',
    'read_image_pnm',
    'read_mask',
    'image_convert',
    'to_uint8',
    'write_ppm',
    'write_labels_csv',
    'LABEL_CSV_HEADER',
]


logger = logging.getLogger(__name__)

LABEL_CSV_HEADER = ['image_path', 'label', 'score', 'source']
ImageSource = Union[str, Path, BytesIO]


def read_image(src: ImageSource, return_on_fail=None) -> Optional[ImageRGB]:
    r"""
    Decode an 8-bit image into a (3,H,W) float32 array in [0,1]. Readers are
    tried in order: Pillow, then the built-in binary PPM/PGM reader.
    """
    for method in [read_image_pillow, read_image_pnm]:
        try:
            img_arr = method(src)
            method_name = method.__qualname__
        except Exception as e:
            logger.warning(f'{method.__qualname__}: {e}')
        else:
            break
    else:
        return return_on_fail
    logger.debug(f'Read image {src} by using {method_name}')
    return img_arr


def _from_uint8(arr: np.ndarray) -> ImageRGB:
    if arr.ndim == 2:
        arr = np.stack([arr] * 3)
    else:
        arr = arr.transpose((2, 0, 1))
    return (arr.astype(np.float32) / 255).astype(np.float32)


def read_image_pillow(src: ImageSource) -> ImageRGB:
    if isinstance(src, BytesIO):
        src.seek(0)
    with PIL.Image.open(src) as img:
        if not is_supported_mode(img.mode):
            raise InputError(f'unsupported image mode {img.mode} ({get_nbits_from_mode(img.mode)} bits)')
        if img.mode == 'L':
            arr = np.array(img, dtype=np.uint8)
        else:
            arr = np.array(img.convert('RGB'), dtype=np.uint8)
    return _from_uint8(arr)


def _pnm_tokens(data: bytes, count: int):
    r""" first `count` header tokens and the offset of the raster """
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i+1].isspace():
            i += 1
        if data[i:i+1] == b'#':
            while i < len(data) and data[i:i+1] not in (b'\n', b'\r'):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i+1].isspace():
            i += 1
        if start == i:
            raise InputError('truncated PNM header')
        tokens.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_image_pnm(src: ImageSource) -> ImageRGB:
    if isinstance(src, BytesIO):
        data = src.getvalue()
    else:
        with open(src, 'rb') as f:
            data = f.read()
    magic = data[:2]
    if magic not in (b'P5', b'P6'):
        raise InputError(f'not a binary PPM/PGM file (magic {magic!r})')
    tokens, offset = _pnm_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise InputError('malformed PNM header')
    if maxval != 255:
        raise InputError(f'only 8-bit PNM is supported, maxval {maxval}')
    channels = 3 if magic == b'P6' else 1
    size = width * height * channels
    raster = data[offset:offset + size]
    if len(raster) != size:
        raise InputError(f'truncated PNM raster: {len(raster)} of {size} bytes')
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return _from_uint8(arr[..., 0] if channels == 1 else arr)


def read_mask(src: ImageSource) -> Grid2D:
    r""" binary mask: pixels whose channel mean exceeds 0.5 """
    img = read_image(src)
    if img is None:
        raise InputError(f'cannot read mask {src}')
    return (img.astype(np.float64).mean(axis=0) > 0.5).astype(np.float64)


def to_uint8(image: ImageRGB) -> np.ndarray:
    return np.rint(as_image(image, dtype=np.float64) * 255).astype(np.uint8)


def image_convert(image_arr: np.ndarray, fmt: Optional[str] = None, to_fmt: Optional[str] = None) -> PIL.Image.Image:
    """
    dimension:
    L:     (# pixel y, # pixel x)
    RGB:   ([R,G,B], # pixel y, # pixel x)

    :param image_arr: uint8 image data, or floats in [0, 1] which are quantized
    :param fmt: input image format code
    :param to_fmt: output image format code
    :return: PIL.Image object
    """
    arr = np.asarray(image_arr)
    if arr.dtype != np.uint8:
        arr = np.rint(np.clip(arr.astype(np.float64), 0, 1) * 255).astype(np.uint8)
    dim = arr.shape
    if len(dim) == 2:
        _fmt = fmt or 'L'
    elif len(dim) == 3:
        if dim[0] == 1:
            arr = arr[0, :, :]
            _fmt = fmt or 'L'
        elif dim[0] == 3:
            arr = arr.transpose((1, 2, 0))
            _fmt = fmt or 'RGB'
        else:
            raise ValueError('image_arr should have 1 or 3 channels')
    else:
        raise ValueError('image_arr has len(shape) > 3')
    image = PIL.Image.fromarray(np.ascontiguousarray(arr), _fmt)
    if to_fmt is not None:
        image = image.convert(to_fmt)
    return image


def write_ppm(path: PathLike, image_arr: np.ndarray):
    r""" binary P6 (or P5 for single-channel) output via Pillow """
    image_convert(image_arr).save(path, format='PPM')


def write_labels_csv(records: Iterable, path: PathLike):
    r""" records need `image_id`, `label` and `score`; LF line endings, no quoting """
    rows = []
    for r in records:
        if ',' in r.image_id:
            raise InputError(f'image path with a comma cannot be written: {r.image_id}')
        rows.append([r.image_id, getattr(r.label, 'value', r.label), repr(float(r.score)), 'lf-aggregate'])
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n', quoting=csv.QUOTE_NONE)
        writer.writerow(LABEL_CSV_HEADER)
        writer.writerows(rows)
