from pathlib import Path
from typing import Union

import numpy as np


PathLike = Union[str, Path]

# array aliases; shapes and ranges are checked by numeric.as_grid / as_image / as_prob_vector
Grid2D = np.ndarray
r""" 2-D float64 array, shape (H, W), finite values """
ImageRGB = np.ndarray
r""" channel-first float array, shape (3, H, W), values in [0, 1] """
ProbVector = np.ndarray
r""" 1-D float64 array, entries in [0, 1] summing to 1 """
