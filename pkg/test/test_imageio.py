from collections import namedtuple
from io import BytesIO

import pytest
import numpy as np

from triggerxai import formats, imageio
from triggerxai.errors import InputError
from triggerxai.fixtures import export_scene, gen_scene
from triggerxai.labeling import DiseaseLabel
from triggerxai.scan import expand_inputs, scan_directory, scan_images


Rec = namedtuple('Rec', ['image_id', 'label', 'score'])


def _ppm(width, height, raster, header_extra=b''):
    return b'P6\n' + header_extra + f'{width} {height}\n255\n'.encode() + bytes(raster)


def test_exported_scene_reads_back(tmp_path):
    scene = gen_scene(DiseaseLabel.YellowSpots, 3)
    image_path, mask_path = export_scene(scene, tmp_path)
    assert image_path.name == 'YellowSpots_3.ppm'

    img = imageio.read_image(str(image_path))
    assert img.shape == (3, 32, 32) and img.dtype == np.float32
    assert np.max(np.abs(img - scene.image)) <= 0.5 / 255 + 1e-6
    assert np.array_equal(imageio.read_image_pnm(str(image_path)), img)
    assert np.array_equal(imageio.read_mask(str(mask_path)), scene.mask)


def test_read_pnm_header_comments():
    data = _ppm(2, 1, [255, 0, 0, 0, 255, 0], header_extra=b'# written by hand\n')
    img = imageio.read_image_pnm(BytesIO(data))
    assert img.shape == (3, 1, 2)
    assert img[:, 0, 0].tolist() == [1, 0, 0]
    assert img[:, 0, 1].tolist() == [0, 1, 0]

    gray = imageio.read_image_pnm(BytesIO(b'P5 2 2 255\n' + bytes([0, 255, 255, 0])))
    assert np.array_equal(gray[0], gray[2])
    assert gray[0].tolist() == [[0, 1], [1, 0]]


def test_read_pnm_errors():
    with pytest.raises(InputError, match='truncated'):
        imageio.read_image_pnm(BytesIO(_ppm(2, 1, [255, 0, 0, 0, 255])))
    with pytest.raises(InputError):
        imageio.read_image_pnm(BytesIO(b'P3\n1 1\n255\n0 0 0\n'))
    with pytest.raises(InputError):
        imageio.read_image_pnm(BytesIO(b'P6\n1 1\n65535\n' + bytes(6)))
    with pytest.raises(InputError):
        imageio.read_image_pnm(BytesIO(b'P6\n1'))
    assert imageio.read_image(BytesIO(b'not an image')) is None
    with pytest.raises(InputError):
        imageio.read_mask(BytesIO(b'not an image'))


def test_write_labels_csv(tmp_path):
    path = tmp_path / 'labels.csv'
    imageio.write_labels_csv([
        Rec('a.ppm', DiseaseLabel.Healthy, 1.0),
        Rec('dir/b.ppm', DiseaseLabel.Abstain, 0.5),
    ], path)
    assert path.read_bytes() == (
        b'image_path,label,score,source\n'
        b'a.ppm,Healthy,1.0,lf-aggregate\n'
        b'dir/b.ppm,Abstain,0.5,lf-aggregate\n'
    )
    with pytest.raises(InputError):
        imageio.write_labels_csv([Rec('a,b.ppm', DiseaseLabel.Healthy, 1.0)], tmp_path / 'bad.csv')


def test_image_convert():
    assert imageio.image_convert(np.zeros((2, 3))).mode == 'L'
    assert imageio.image_convert(np.zeros((1, 2, 3))).mode == 'L'
    rgb = imageio.image_convert(np.ones((3, 2, 3)))
    assert rgb.mode == 'RGB' and rgb.size == (3, 2)
    assert rgb.getpixel((0, 0)) == (255, 255, 255)
    assert imageio.image_convert(np.ones((3, 2, 3)), to_fmt='L').mode == 'L'
    with pytest.raises(ValueError):
        imageio.image_convert(np.zeros((4, 2, 2)))
    with pytest.raises(ValueError):
        imageio.image_convert(np.zeros((1, 3, 2, 2)))
    assert imageio.to_uint8(np.array([[[0, 0.5, 1]]] * 3)).tolist()[0] == [[0, 128, 255]]


def test_is_image_file():
    assert formats.is_image_file('leaf.PNG')
    assert formats.is_image_file('/data/leaf.ppm')
    assert not formats.is_image_file('scan.dcm')
    assert not formats.is_image_file('README')


def test_scan(tmp_path):
    for name in ('b/2.ppm', 'b/1.ppm', 'a.ppm', 'notes.txt'):
        p = tmp_path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if p.suffix == '.ppm':
            imageio.write_ppm(p, np.zeros((3, 4, 4)))
        else:
            p.write_text('x')
    found = scan_images(tmp_path)
    assert [p[len(str(tmp_path)) + 1:] for p in found] == ['a.ppm', 'b/1.ppm', 'b/2.ppm']
    assert expand_inputs([tmp_path / 'a.ppm', tmp_path / 'b']) == [str(tmp_path / 'a.ppm')] + found[1:]
    images = scan_directory(tmp_path)
    assert list(images) == found
    assert all(img.shape == (3, 4, 4) for img in images.values())
