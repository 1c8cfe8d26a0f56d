import pytest
import numpy as np

from triggerxai import overlay
from triggerxai.saliency import make_map


def test_colormap_stops():
    g = np.array([[0.0, 0.25, 0.5, 0.75, 1.0]])
    c = overlay.colormap(g)
    assert c.shape == (3, 1, 5)
    assert [tuple(c[:, 0, i]) for i in range(5)] == list(overlay.COLORMAP_COLORS)
    mid = overlay.colormap(np.array([[0.125]]))[:, 0, 0]
    assert mid.tolist() == [0, 0.5, 1]


def test_render_overlay():
    img = np.zeros((3, 2, 2))
    out = overlay.render_overlay(img, np.zeros((2, 2)))
    assert out.dtype == np.uint8
    assert out[:, 0, 0].tolist() == [0, 0, 128]
    out = overlay.render_overlay(img, np.ones((2, 2)))
    assert out[:, 1, 1].tolist() == [128, 0, 0]
    out = overlay.render_overlay(np.ones((3, 2, 2)), np.ones((2, 2)))
    assert out[:, 0, 0].tolist() == [255, 128, 128]


def test_render_overlay_accepts_maps():
    m = make_map(np.eye(3), 'gradcam', model_id='net', class_index=0)
    out = overlay.render_overlay(np.zeros((3, 3, 3)), m)
    assert out[:, 0, 0].tolist() == [128, 0, 0]
    assert out[:, 0, 1].tolist() == [0, 0, 128]


def test_render_overlay_dims():
    with pytest.raises(ValueError):
        overlay.render_overlay(np.zeros((3, 4, 4)), np.zeros((2, 2)))


def test_plot_maps():
    matplotlib = pytest.importorskip('matplotlib')
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    maps = [make_map(np.eye(3), 'gradcam', model_id='net'), np.full((3, 3), 0.5)]
    fig, axs = overlay.plot_maps(np.zeros((3, 3, 3)), maps, ncols=2)
    assert axs.shape == (2, 2)
    assert [ax.get_title() for ax in axs.flat][:3] == ['image', 'gradcam', '']
    plt.close(fig)
