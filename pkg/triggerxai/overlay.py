r"""
Heatmap rendering. The colormap is a 5-stop linear ramp:

    0.00 blue   (0, 0, 1)
    0.25 cyan   (0, 1, 1)
    0.50 green  (0, 1, 0)
    0.75 yellow (1, 1, 0)
    1.00 red    (1, 0, 0)

overlay = 0.5 * image + 0.5 * colormap(saliency), quantized by rint(255 * v).
"""
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .numeric import as_grid, as_image
from .typing import Grid2D, ImageRGB


__all__ = ['COLORMAP_STOPS', 'COLORMAP_COLORS', 'colormap', 'render_overlay', 'plot_maps']


COLORMAP_STOPS = (0.0, 0.25, 0.5, 0.75, 1.0)
COLORMAP_COLORS = (
    (0.0, 0.0, 1.0),
    (0.0, 1.0, 1.0),
    (0.0, 1.0, 0.0),
    (1.0, 1.0, 0.0),
    (1.0, 0.0, 0.0),
)


def colormap(g: Grid2D) -> np.ndarray:
    r""" values clipped to [0, 1] -> (3, H, W) float64 colours """
    g = as_grid(g, 'saliency').clip(0, 1)
    colors = np.asarray(COLORMAP_COLORS)
    return np.stack([np.interp(g, COLORMAP_STOPS, colors[:, c]) for c in range(3)])


def render_overlay(image: ImageRGB, saliency) -> np.ndarray:
    r""" uint8 (3, H, W) blend of the image and the colour-mapped saliency """
    img = as_image(image, dtype=np.float64)
    g = as_grid(getattr(saliency, 'grid', saliency), 'saliency')
    if g.shape != img.shape[1:]:
        raise ValueError(f'saliency dims {g.shape} differ from image dims {img.shape[1:]}')
    blend = 0.5 * img + 0.5 * colormap(g)
    return np.rint(blend * 255).astype(np.uint8)


def plot_maps(
        image: ImageRGB,
        maps: Sequence[Any],
        ncols: int = 4,
        figwidth: float = 10,
        metadata: Optional[Iterable[str]] = None,
        **kwargs,
        ):
    r"""
    Inputs:
    - image: (3,H,W) image shown in the first panel
    - maps: saliency maps (SaliencyMap or 2-D arrays), one panel each
    - ncols: (int) Maximum number of subplot columns (default: 4)
    - figwidth: (float) figure width (default: 10)
    - metadata: (iterable) titles, one per map. Defaults to the method tags.

    Returns: fig, axs from plt.subplots
    """
    import matplotlib.pyplot as plt

    kwargs = {'cmap': 'jet', 'vmin': 0, 'vmax': 1, **kwargs}
    metadata = list(metadata) if metadata is not None else [getattr(m, 'method', '') for m in maps]

    N = len(maps) + 1
    ncols = min(ncols, N)
    nrows = int(np.ceil(N / ncols))
    fig, axs = plt.subplots(nrows, ncols, figsize=(figwidth, figwidth / ncols * nrows), squeeze=False)
    for k, ax in enumerate(axs.flat):
        if k == 0:
            ax.imshow(as_image(image).transpose((1, 2, 0)))
            ax.set_title('image')
        elif k < N:
            m = maps[k - 1]
            ax.imshow(getattr(m, 'grid', m), **kwargs)
            ax.set_title(metadata[k - 1] if k - 1 < len(metadata) else '')
        ax.axis('off')
    return fig, axs
