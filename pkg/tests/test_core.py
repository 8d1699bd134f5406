import numpy as np
import pytest
import torch
import torch.nn.functional as F

from depthsr.core import (
    DepthMap,
    DimensionError,
    GuidanceImage,
    build_pyramid,
    downsample_depth_nn,
    fill_invalid_nearest,
    to_grayscale,
    upsample_bilinear,
    upsample_nn,
)


def bilinear_oracle(values, mask, factor):
    """Scalar-loop bilinear interpolation with half-pixel centers and
    mask-weighted samples; the independent reference for upsample_bilinear."""
    h, w = values.shape
    oh, ow = h * factor, w * factor
    out = np.zeros((oh, ow))
    out_mask = np.zeros((oh, ow), dtype=bool)
    for i in range(oh):
        for j in range(ow):
            y = (i + 0.5) / factor - 0.5
            x = (j + 0.5) / factor - 0.5
            y0 = min(max(int(np.floor(y)), 0), h - 1)
            x0 = min(max(int(np.floor(x)), 0), w - 1)
            y1 = min(y0 + 1, h - 1)
            x1 = min(x0 + 1, w - 1)
            wy = min(max(y - y0, 0.0), 1.0)
            wx = min(max(x - x0, 0.0), 1.0)
            acc = wsum = 0.0
            for yi, wy_ in ((y0, 1 - wy), (y1, wy)):
                for xi, wx_ in ((x0, 1 - wx), (x1, wx)):
                    wgt = wy_ * wx_ * mask[yi, xi]
                    acc += wgt * values[yi, xi]
                    wsum += wgt
            if wsum > 0:
                out[i, j] = acc / wsum
                out_mask[i, j] = True
    return out, out_mask


class TestDepthMap:
    def test_mask_derived_from_zeros(self):
        d = DepthMap(np.array([[0.0, 1.5], [2.0, 0.0]]))
        assert d.valid.tolist() == [[False, True], [True, False]]

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            DepthMap(np.array([[-0.1, 1.0]]))

    def test_non_2d_rejected(self):
        with pytest.raises(DimensionError):
            DepthMap(np.zeros((2, 2, 2)))


class TestToGrayscale:
    def test_white_maps_to_one(self):
        img = GuidanceImage(np.ones((4, 4, 3)))
        out = to_grayscale(img)
        assert out.channels == 1
        np.testing.assert_allclose(out.values, 1.0)

    def test_grayscale_identity_bitwise(self, random_gray):
        out = to_grayscale(random_gray)
        assert out.values is random_gray.values  # identity, not a copy

    def test_pure_red_gives_bt601_weight(self):
        arr = np.zeros((3, 3, 3))
        arr[:, :, 0] = 1.0
        out = to_grayscale(GuidanceImage(arr))
        np.testing.assert_allclose(out.values[:, :, 0], 0.299, atol=1e-12)

    def test_random_rgb_matches_weighted_sum(self, random_rgb):
        out = to_grayscale(random_rgb)
        v = random_rgb.values
        expected = 0.299 * v[:, :, 0] + 0.587 * v[:, :, 1] + 0.114 * v[:, :, 2]
        np.testing.assert_allclose(out.values[:, :, 0], expected, atol=1e-12)


class TestDownsampleNN:
    def test_constant(self):
        d = DepthMap(np.full((16, 16), 2.0))
        out = downsample_depth_nn(d, 8)
        assert out.values.shape == (2, 2)
        np.testing.assert_allclose(out.values, 2.0)

    def test_top_left_convention(self):
        d = DepthMap(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = downsample_depth_nn(d, 2)
        assert out.values.tolist() == [[1.0]]

    def test_matches_strided_index_oracle(self, rng):
        vals = rng.uniform(0.1, 5.0, size=(16, 16))
        d = DepthMap(vals)
        out = downsample_depth_nn(d, 2)
        for i in range(8):
            for j in range(8):
                assert out.values[i, j] == vals[2 * i, 2 * j]

    def test_mask_subsampled_identically(self, rng):
        vals = rng.uniform(0.0, 5.0, size=(8, 8))
        vals[vals < 1.0] = 0.0
        d = DepthMap(vals)
        out = downsample_depth_nn(d, 2)
        np.testing.assert_array_equal(out.valid, d.valid[::2, ::2])

    def test_non_divisible_raises(self):
        with pytest.raises(DimensionError):
            downsample_depth_nn(DepthMap(np.ones((6, 6))), 4)


class TestUpsampleBilinear:
    def test_constant_preserved(self):
        d = DepthMap(np.full((4, 4), 3.0))
        out = upsample_bilinear(d, 4)
        assert out.values.shape == (16, 16)
        np.testing.assert_allclose(out.values, 3.0)

    def test_factor_one_identity(self, random_depth):
        out = upsample_bilinear(random_depth, 1)
        np.testing.assert_array_equal(out.values, random_depth.values)

    def test_matches_bruteforce_oracle(self, rng):
        vals = np.array([[0.0, 1.0], [0.0, 1.0]]) + 1.0
        d = DepthMap(vals)
        out = upsample_bilinear(d, 2)
        expected, _ = bilinear_oracle(vals, np.ones_like(vals), 2)
        np.testing.assert_allclose(out.values, expected, atol=1e-12)

    def test_matches_oracle_with_holes(self, rng):
        vals = rng.uniform(0.5, 4.0, size=(6, 6))
        mask = rng.random((6, 6)) > 0.4
        vals = np.where(mask, vals, 0.0)
        d = DepthMap(vals)
        out = upsample_bilinear(d, 4)
        expected, expected_mask = bilinear_oracle(vals, mask.astype(float), 4)
        np.testing.assert_allclose(out.values, expected, atol=1e-12)
        np.testing.assert_array_equal(out.valid, expected_mask)

    def test_all_invalid_stays_invalid(self):
        d = DepthMap(np.zeros((4, 4)))
        out = upsample_bilinear(d, 2)
        assert not out.valid.any()

    def test_matches_torch_interpolate_on_full_mask(self, rng):
        vals = rng.uniform(0.5, 4.0, size=(8, 8))
        out = upsample_bilinear(DepthMap(vals), 2)
        t = torch.as_tensor(vals, dtype=torch.float64).view(1, 1, 8, 8)
        ref = F.interpolate(t, scale_factor=2, mode="bilinear", align_corners=False)
        np.testing.assert_allclose(out.values, ref.squeeze().numpy(), atol=1e-12)


class TestUpsampleNN:
    def test_replication(self):
        d = DepthMap(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = upsample_nn(d, 2)
        np.testing.assert_array_equal(
            out.values,
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]],
        )

    def test_roundtrip_with_downsample(self, random_depth):
        up = upsample_nn(random_depth, 4)
        back = downsample_depth_nn(up, 4)
        np.testing.assert_array_equal(back.values, random_depth.values)


class TestBuildPyramid:
    def test_single_level_is_input(self, random_gray):
        pyr = build_pyramid(random_gray, 1)
        assert len(pyr) == 1
        np.testing.assert_array_equal(pyr[0].values, random_gray.values)

    def test_constant_image_three_levels(self):
        img = GuidanceImage(np.full((16, 16, 1), 0.5))
        pyr = build_pyramid(img, 3)
        assert [lvl.height for lvl in pyr.levels] == [16, 8, 4]
        for lvl in pyr.levels:
            np.testing.assert_allclose(lvl.values, 0.5)

    def test_level1_matches_block_mean_oracle(self, rng):
        vals = rng.uniform(0, 1, size=(8, 8, 1))
        pyr = build_pyramid(GuidanceImage(vals), 2)
        for i in range(4):
            for j in range(4):
                block = vals[2 * i : 2 * i + 2, 2 * j : 2 * j + 2, 0]
                assert abs(pyr[1].values[i, j, 0] - block.mean()) < 1e-12

    def test_mean_preserved_across_levels(self, rng):
        vals = rng.uniform(0, 1, size=(32, 32, 1))
        pyr = build_pyramid(GuidanceImage(vals), 4)
        means = [lvl.values.mean() for lvl in pyr.levels]
        for a, b in zip(means, means[1:]):
            assert abs(a - b) < 1e-6

    def test_indivisible_raises(self):
        with pytest.raises(DimensionError):
            build_pyramid(GuidanceImage(np.zeros((6, 6, 1))), 3)


class TestFillInvalidNearest:
    def test_dense_map_copied(self, random_depth):
        out = fill_invalid_nearest(random_depth)
        np.testing.assert_array_equal(out.values, random_depth.values)
        assert out.values is not random_depth.values

    def test_holes_take_nearest_value(self):
        vals = np.zeros((5, 5))
        vals[0, 0] = 1.0
        vals[4, 4] = 3.0
        out = fill_invalid_nearest(DepthMap(vals))
        assert out.valid.all()
        assert out.values[0, 1] == 1.0
        assert out.values[4, 3] == 3.0
        assert out.values[1, 1] == 1.0

    def test_valid_pixels_untouched(self, rng):
        vals = rng.uniform(1, 3, (8, 8))
        vals[rng.random((8, 8)) < 0.5] = 0.0
        d = DepthMap(vals)
        out = fill_invalid_nearest(d)
        np.testing.assert_array_equal(out.values[d.valid], vals[d.valid])

    def test_all_invalid_rejected(self):
        with pytest.raises(ValueError):
            fill_invalid_nearest(DepthMap(np.zeros((4, 4))))


class TestRoundTripAndPurity:
    def test_constant_roundtrip(self):
        d = DepthMap(np.full((4, 4), 2.0))
        round_tripped = downsample_depth_nn(upsample_bilinear(d, 2), 2)
        np.testing.assert_allclose(round_tripped.values, d.values)

    def test_ops_leave_inputs_unmodified(self, random_depth, random_rgb):
        dv = random_depth.values.copy()
        iv = random_rgb.values.copy()
        upsample_bilinear(random_depth, 2)
        downsample_depth_nn(random_depth, 2)
        to_grayscale(random_rgb)
        build_pyramid(random_rgb, 2)
        np.testing.assert_array_equal(random_depth.values, dv)
        np.testing.assert_array_equal(random_rgb.values, iv)
