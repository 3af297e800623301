import numpy as np
import pytest

from fssr.resample import ResampleSpec, bicubic_resize, cubic_kernel, resize_plan

from .oracles import keys_cubic_scalar, scalar_bicubic_resize


class TestCubicKernel:
    def test_center(self):
        assert cubic_kernel(0.0) == 1.0

    def test_unit_offset(self):
        assert cubic_kernel(1.0) == 0.0
        assert cubic_kernel(-1.0) == 0.0

    def test_half_offset(self):
        assert cubic_kernel(0.5) == pytest.approx(0.5625, abs=1e-15)

    def test_outside_support(self):
        assert cubic_kernel(2.0) == 0.0
        assert cubic_kernel(-3.7) == 0.0

    @pytest.mark.parametrize("x", np.linspace(-2.5, 2.5, 41))
    def test_matches_scalar_form(self, x):
        assert cubic_kernel(float(x)) == pytest.approx(keys_cubic_scalar(float(x)), abs=1e-15)

    def test_array_input(self):
        xs = np.array([-1.0, 0.0, 0.5])
        np.testing.assert_allclose(cubic_kernel(xs), [0.0, 1.0, 0.5625], atol=1e-15)


class TestResizePlan:
    @pytest.mark.parametrize("n,factor", [(16, 4.0), (64, 2.0), (33, 3.0), (256, 4.0)])
    def test_partition_of_unity(self, n, factor):
        _, weights = resize_plan(n, factor)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)

    def test_degenerate_output_rejected(self):
        with pytest.raises(ValueError):
            resize_plan(3, 4.0)

    def test_indices_within_bounds(self):
        idx, _ = resize_plan(16, 4.0)
        assert idx.min() >= 0 and idx.max() <= 15


class TestBicubicResize:
    def test_identity(self):
        img = np.random.default_rng(0).random((16, 16, 3))
        out = bicubic_resize(img, ResampleSpec(factor=1.0))
        assert np.abs(out - img).max() < 1e-12

    def test_constant_preserved(self):
        img = np.full((16, 16, 3), 0.3)
        out = bicubic_resize(img, ResampleSpec(factor=4.0))
        assert out.shape == (4, 4, 3)
        np.testing.assert_allclose(out, 0.3, atol=1e-12)

    def test_ramp_matches_scalar_oracle(self):
        ramp = np.linspace(0, 1, 16)[:, None, None] * np.ones((1, 16, 3))
        out = bicubic_resize(ramp, ResampleSpec(factor=4.0))
        ref = scalar_bicubic_resize(ramp, 4.0)
        assert np.abs(out - ref).max() < 1e-9

    @pytest.mark.parametrize("factor,antialias", [(2.0, True), (4.0, True), (4.0, False), (2.5, True)])
    def test_random_images_match_scalar_oracle(self, factor, antialias):
        img = np.random.default_rng(17).random((20, 24, 3))
        out = bicubic_resize(img, ResampleSpec(factor=factor, antialias=antialias))
        ref = scalar_bicubic_resize(img, factor, antialias)
        assert np.abs(out - ref).max() < 1e-9

    def test_axis_order_is_irrelevant(self):
        img = np.random.default_rng(3).random((24, 16, 3))
        out = bicubic_resize(img, ResampleSpec(factor=4.0))
        flipped = bicubic_resize(img.transpose(1, 0, 2), ResampleSpec(factor=4.0))
        assert np.abs(out - flipped.transpose(1, 0, 2)).max() < 1e-9

    def test_checkerboard_smoothed_by_antialiasing(self):
        yy, xx = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        board = (((yy + xx) % 2).astype(float))[:, :, None]
        out = bicubic_resize(board, ResampleSpec(factor=4.0, antialias=True))
        assert out.std() < 0.01

    def test_flip_covariance(self):
        img = np.random.default_rng(5).random((32, 32, 3))
        spec = ResampleSpec(factor=4.0)
        a = bicubic_resize(img[::-1], spec)
        b = bicubic_resize(img, spec)[::-1]
        assert np.abs(a - b).max() < 1e-9

    def test_output_clamped(self):
        # a sharp step makes the cubic kernel overshoot
        img = np.zeros((16, 16, 1))
        img[:, 8:] = 1.0
        out = bicubic_resize(img, ResampleSpec(factor=2.0))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_degenerate_output_rejected(self):
        with pytest.raises(ValueError):
            bicubic_resize(np.zeros((2, 2, 1)), ResampleSpec(factor=4.0))

    def test_bad_factor_rejected(self):
        with pytest.raises(ValueError):
            ResampleSpec(factor=0.0)

    def test_upscale_supported_for_reference_use(self):
        img = np.random.default_rng(8).random((8, 8, 3))
        out = bicubic_resize(img, ResampleSpec(factor=0.25, antialias=True))
        assert out.shape == (32, 32, 3)
        ref = scalar_bicubic_resize(img, 0.25, True)
        assert np.abs(out - ref).max() < 1e-9
