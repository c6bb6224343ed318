"""Image container validation, residual arithmetic, and raster IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reconaudit.errors import ShapeMismatchError
from reconaudit.imagecore import (
    BinaryMask,
    RgbImage,
    ScalarMap,
    anomaly_map,
    anomaly_score,
    as_u8,
    heat_colors,
    load_float_raster,
    load_png,
    mse,
    save_float_raster,
    save_png,
    to_gray_max,
)

from _fixtures import noisy_pair


class TestContainers:
    def test_rgb_accepts_unit_range(self):
        img = RgbImage(np.zeros((4, 5, 3)))
        assert (img.h, img.w) == (4, 5)

    @pytest.mark.parametrize(
        "data",
        [
            np.zeros((4, 5)),
            np.zeros((4, 5, 4)),
            np.zeros((0, 5, 3)),
            np.full((4, 5, 3), 1.5),
            np.full((4, 5, 3), -0.1),
            np.full((4, 5, 3), np.nan),
        ],
    )
    def test_rgb_rejects_bad_data(self, data):
        with pytest.raises((ShapeMismatchError, ValueError)):
            RgbImage(data)

    def test_scalar_map_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ScalarMap(np.full((3, 3), np.inf))

    def test_mask_count(self):
        m = BinaryMask(np.eye(4, dtype=bool))
        assert m.count() == 4


class TestResiduals:
    def test_gray_max_picks_channel_maximum(self):
        data = np.zeros((1, 1, 3))
        data[0, 0] = [0.2, 0.5, 0.3]
        assert to_gray_max(RgbImage(data)).data[0, 0] == 0.5

    def test_constant_difference(self):
        a = RgbImage(np.full((8, 8, 3), 1.0))
        b = RgbImage(np.full((8, 8, 3), 0.25))
        m = anomaly_map(a, b)
        assert np.all(m.data == 0.75)
        assert anomaly_score(m) == 0.75

    def test_map_matches_per_pixel_oracle(self):
        a, b = noisy_pair(3)
        m = anomaly_map(a, b)
        for y in range(a.h):
            for x in range(a.w):
                expect = abs(max(a.data[y, x]) - max(b.data[y, x]))
                assert m.data[y, x] == pytest.approx(expect, abs=1e-15)

    def test_map_rejects_shape_mismatch(self):
        a = RgbImage(np.zeros((4, 4, 3)))
        b = RgbImage(np.zeros((4, 5, 3)))
        with pytest.raises(ShapeMismatchError):
            anomaly_map(a, b)

    def test_self_map_is_zero(self):
        a, _ = noisy_pair(4)
        assert anomaly_score(anomaly_map(a, a)) == 0.0

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_map_symmetric_and_bounded(self, seed):
        a, b = noisy_pair(seed, 6, 5)
        m1, m2 = anomaly_map(a, b), anomaly_map(b, a)
        assert np.array_equal(m1.data, m2.data)
        assert m1.data.min() >= 0.0 and m1.data.max() <= 1.0

    def test_mse_constant_residual(self):
        a = RgbImage(np.full((8, 8, 3), 1.0))
        b = RgbImage(np.full((8, 8, 3), 0.5))
        assert mse(a, b) == pytest.approx(0.25, abs=1e-15)

    def test_mse_matches_loop_oracle(self):
        a, b = noisy_pair(5, 7, 6)
        acc = 0.0
        for y in range(a.h):
            for x in range(a.w):
                for c in range(3):
                    acc += (a.data[y, x, c] - b.data[y, x, c]) ** 2
        assert mse(a, b) == pytest.approx(acc / (a.h * a.w * 3), rel=1e-12)

    def test_mse_decomposes_over_pixel_partition(self):
        a, b = noisy_pair(6, 8, 8)
        region = np.zeros((8, 8), dtype=bool)
        region[:4] = True
        diff2 = ((a.data - b.data) ** 2).sum(axis=2)
        part = diff2[region].sum() + diff2[~region].sum()
        assert mse(a, b) == pytest.approx(part / (8 * 8 * 3), rel=1e-12)


class TestRasterIO:
    def test_png_round_trip_exact_on_u8_grid(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.integers(0, 256, (9, 7, 3)).astype(np.float64) / 255.0
        p = tmp_path / "img.png"
        save_png(RgbImage(data), p)
        back = load_png(p)
        assert np.array_equal(back.data, data)

    def test_grayscale_png_loads_as_replicated_rgb(self, tmp_path):
        from PIL import Image

        arr = np.arange(16, dtype=np.uint8).reshape(4, 4) * 16
        p = tmp_path / "gray.png"
        Image.fromarray(arr, mode="L").save(p)
        img = load_png(p)
        assert np.array_equal(img.data[:, :, 0], img.data[:, :, 1])
        assert np.array_equal(img.data[:, :, 0], img.data[:, :, 2])
        assert img.data[0, 1, 0] == 16 / 255.0

    def test_float_raster_round_trip(self, tmp_path):
        arr = np.random.default_rng(1).random((5, 4, 3)).astype(np.float32)
        p = tmp_path / "r.npy"
        save_float_raster(arr, p)
        assert np.array_equal(load_float_raster(p), arr)

    def test_float_raster_rejects_wrong_dtype(self, tmp_path):
        p = tmp_path / "bad.npy"
        np.save(p, np.zeros((4, 4, 3), dtype=np.float64))
        with pytest.raises(ValueError):
            load_float_raster(p)

    def test_as_u8_endpoints(self):
        data = np.zeros((1, 2, 3))
        data[0, 1] = 1.0
        u8 = as_u8(RgbImage(data))
        assert u8[0, 0, 0] == 0 and u8[0, 1, 0] == 255

    def test_heat_colors_spans_palette(self):
        m = ScalarMap(np.linspace(0, 1, 16).reshape(4, 4))
        colors = heat_colors(m)
        assert colors.dtype == np.uint8
        assert tuple(colors[0, 0]) == (0, 0, 0)
        # the top anchor of the palette is a bright near-yellow
        assert colors[3, 3, 0] > 200 and colors[3, 3, 1] > 200

    def test_heat_colors_constant_map_is_uniform(self):
        colors = heat_colors(ScalarMap(np.full((3, 3), 0.4)))
        assert np.all(colors == colors[0, 0])
