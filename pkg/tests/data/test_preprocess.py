import numpy as np
import pytest

from scn.core.tensor import Tensor
from scn.data.preprocess import preprocess, resize_bilinear, source_coords, to_grayscale
from scn.errors import ShapeError


def test_target_size_is_unchanged():
    image = np.random.default_rng(0).uniform(size=(1, 100, 100))
    out = preprocess(Tensor(image))
    assert out.shape == (1, 100, 100)
    assert out.data.tobytes() == image.tobytes()


def test_constant_image_stays_constant():
    out = preprocess(np.full((2, 2), 0.3))
    assert out.shape == (1, 100, 100)
    np.testing.assert_allclose(out.data, 0.3, rtol=0, atol=1e-15)


def test_orl_frame_corners():
    frame = np.random.default_rng(1).uniform(size=(112, 92))
    out = preprocess(frame).data[0]
    rows, cols = source_coords(100, 112), source_coords(100, 92)

    def at(r, c):
        r0, c0 = int(np.floor(r)), int(np.floor(c))
        r1, c1 = min(r0 + 1, 111), min(c0 + 1, 91)
        wr, wc = r - r0, c - c0
        top = (1 - wc) * frame[r0, c0] + wc * frame[r0, c1]
        bottom = (1 - wc) * frame[r1, c0] + wc * frame[r1, c1]
        return (1 - wr) * top + wr * bottom

    for i, j in [(0, 0), (0, 99), (99, 0), (99, 99)]:
        assert out[i, j] == pytest.approx(at(rows[i], cols[j]), abs=1e-12)
    # 列方向是放大，左上角的列坐标被截断到 0
    assert cols[0] == 0.0


def test_source_coordinates_are_clamped():
    coords = source_coords(10, 4)
    assert coords.min() == 0.0 and coords.max() == 3.0
    assert np.all(np.diff(coords) >= 0)


def test_colour_uses_luma():
    rgb = np.zeros((2, 2, 3))
    rgb[..., 0] = 1.0
    np.testing.assert_allclose(to_grayscale(rgb), 0.299)
    np.testing.assert_allclose(to_grayscale(np.moveaxis(rgb, -1, 0)), 0.299)


def test_resize_needs_two_by_two():
    with pytest.raises(ShapeError):
        resize_bilinear(np.zeros((1, 5)), 10, 10)
