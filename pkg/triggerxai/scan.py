import os
import logging
import traceback
from typing import Dict, Generator, Iterable, List, Union

from .formats import is_image_file
from .imageio import read_image
from .typing import ImageRGB, PathLike


__all__ = ['collect_images', 'scan_images', 'scan_directory', 'expand_inputs']


_logger = logging.getLogger(__name__)


def collect_images(
        scanner: Union[Generator, Iterable],
        verbose: bool = False,
        ) -> Dict[str, ImageRGB]:
    collections = dict() # {<path>: <image>}
    for p in scanner:
        if not os.path.isfile(p):
            continue
        try:
            img = read_image(p)
        except Exception as e:
            img = None
            if verbose:
                _logger.debug(str(e))
                _logger.debug(traceback.format_exc())
        if img is None:
            if verbose:
                _logger.debug(f'Cannot read image {p}')
            continue
        collections[p] = img
    return collections


def _dir_scanner(topdir):
    for root, ds, fs in os.walk(topdir):
        ds.sort()
        for fname in sorted(fs):
            yield os.path.join(root, fname)


def scan_images(topdir: PathLike) -> List[str]:
    r""" image files under `topdir` in a deterministic (sorted walk) order """
    return [p for p in _dir_scanner(str(topdir)) if is_image_file(p)]


def scan_directory(topdir: PathLike, verbose: bool = False) -> Dict[str, ImageRGB]:
    return collect_images(scan_images(topdir), verbose=verbose)


def expand_inputs(inputs: Iterable[PathLike]) -> List[str]:
    r""" directories expand to their image files; files are kept as given """
    res = []
    for p in inputs:
        p = str(p)
        if os.path.isdir(p):
            res.extend(scan_images(p))
        else:
            res.append(p)
    return res
