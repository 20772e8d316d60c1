import logging

import numpy as np
import pytest

from app.core.patterns import tile
from app.core.structure import (blur_kernel_size, blur_operator, consensus_unit_cell, divisible_crop,
                                gaussian_blur, gaussian_kernel_2d, reconstruct, retile_reconstruction)
from app.errors import ContractError
from app.schemas import BlurConfig


def reference_kernel_size(height: int, width: int, p_h: int, p_w: int) -> int:
    # min(H/p_h, W/p_w) / 10 rounded up, in integer arithmetic
    k = max(1, min(-(-height // (10 * p_h)), -(-width // (10 * p_w))))
    return k if k % 2 else k + 1


def dense_blur(img: np.ndarray, cfg: BlurConfig) -> np.ndarray:
    kernel = gaussian_kernel_2d(cfg)
    half = cfg.kernel_size // 2
    padded = np.pad(img, half, mode="symmetric")
    out = np.zeros_like(img, dtype=np.float64)
    for i in range(img.shape[0]):
        for j in range(img.shape[1]):
            out[i, j] = np.sum(kernel * padded[i:i + cfg.kernel_size, j:j + cfg.kernel_size])
    return out


class TestKernelSize:

    @pytest.mark.parametrize("side,p,expected", [(2800, 28, 11), (64, 8, 1), (280, 4, 7)])
    def test_worked_cases(self, side, p, expected):
        assert blur_kernel_size(side, side, p, p) == expected

    def test_sweep_matches_integer_reference(self):
        for height in range(16, 513):
            for p in range(1, 33):
                for width in (height, height + 7):
                    assert blur_kernel_size(height, width, p, p) == reference_kernel_size(height, width, p, p), \
                        f"H={height} W={width} p={p}"

    def test_sigma_rule(self):
        assert BlurConfig.for_kernel(1).sigma == 0.8
        assert BlurConfig.for_kernel(11).sigma == pytest.approx(11 / 6)

    def test_even_kernel_is_rejected(self):
        with pytest.raises(ValueError):
            BlurConfig(kernel_size=4, sigma=1.0)


class TestGaussianBlur:

    def test_unit_kernel_is_identity(self, rng):
        img = rng.random((9, 9))
        assert np.array_equal(gaussian_blur(img, BlurConfig.for_kernel(1)), img)

    @pytest.mark.parametrize("mode", ["reflect", "wrap"])
    def test_constant_image_is_unchanged(self, mode):
        img = np.full((12, 12), 0.7)
        assert np.allclose(gaussian_blur(img, BlurConfig.for_kernel(5), mode), img, rtol=0, atol=1e-12)

    def test_separable_matches_dense_convolution(self, rng):
        img = rng.random((16, 16))
        cfg = BlurConfig.for_kernel(5)
        assert np.max(np.abs(gaussian_blur(img, cfg) - dense_blur(img, cfg))) < 1e-12

    def test_blur_is_linear(self, rng):
        a, b = rng.random((10, 10)), rng.random((10, 10))
        cfg = BlurConfig.for_kernel(3)
        assert np.allclose(gaussian_blur(2 * a - b, cfg), 2 * gaussian_blur(a, cfg) - gaussian_blur(b, cfg),
                           rtol=0, atol=1e-13)

    def test_oversized_kernel_is_clamped(self, rng, caplog):
        img = rng.random((4, 4))
        with caplog.at_level(logging.WARNING):
            clamped = gaussian_blur(img, BlurConfig(kernel_size=7, sigma=1.0))
        assert np.array_equal(clamped, gaussian_blur(img, BlurConfig(kernel_size=3, sigma=1.0)))
        assert "[BLUR]" in caplog.text

    @pytest.mark.parametrize("mode", ["reflect", "wrap"])
    def test_operator_matches_direct_blur(self, rng, mode):
        img = rng.random((12, 12))
        cfg = BlurConfig.for_kernel(5)
        op = blur_operator(12, cfg, mode)
        assert np.max(np.abs(op @ img @ op.T - gaussian_blur(img, cfg, mode))) < 1e-12


class TestConsensus:

    def test_identical_tiles(self, rng):
        cell = (rng.random((5, 4)) < 0.5).astype(np.uint8)
        assert np.array_equal(consensus_unit_cell(np.tile(cell, (3, 2)), 3, 2), cell)

    def test_single_flip_is_voted_out(self, rng):
        cell = (rng.random((4, 4)) < 0.5).astype(np.uint8)
        img = np.tile(cell, (3, 3))
        img[5, 6] = 1 - img[5, 6]
        tiles = [img[r * 4:(r + 1) * 4, c * 4:(c + 1) * 4] for r in range(3) for c in range(3)]
        counts = np.sum(tiles, axis=0)
        expected = (counts * 2 >= 9).astype(np.uint8)
        result = consensus_unit_cell(img, 3, 3)
        assert np.array_equal(result, expected)
        assert np.array_equal(result, cell)

    def test_tie_goes_to_foreground(self):
        img = np.array([[1, 0], [0, 0]], dtype=np.uint8)
        assert consensus_unit_cell(img, 1, 2).tolist() == [[1], [0]]

    def test_single_tile_is_whole_image(self, rng):
        img = (rng.random((7, 9)) < 0.5).astype(np.uint8)
        assert np.array_equal(consensus_unit_cell(img, 1, 1), img)

    def test_median_uses_lower_middle(self):
        img = np.array([[0.4, 0.1, 0.3, 0.2]])
        assert consensus_unit_cell(img, 1, 4, "median").tolist() == [[0.2]]

    def test_majority_needs_binary_input(self):
        with pytest.raises(ContractError):
            consensus_unit_cell(np.full((4, 4), 0.5), 2, 2)

    def test_zero_count_is_rejected(self):
        with pytest.raises(ContractError):
            divisible_crop(8, 8, 0, 2)

    def test_non_divisible_image_is_cropped(self, rng):
        img = (rng.random((10, 11)) < 0.5).astype(np.uint8)
        assert divisible_crop(10, 11, 3, 3) == (1, 2)
        assert np.array_equal(consensus_unit_cell(img, 3, 3), consensus_unit_cell(img[:9, :9], 3, 3))


class TestReconstruction:

    def test_periodic_image_is_fixed_point(self, rng):
        img = tile((rng.random((6, 6)) < 0.5).astype(np.uint8), 4)
        assert np.array_equal(reconstruct(img, 4, 4), img)

    def test_idempotent_on_random_images(self, rng):
        for _ in range(1000):
            height, width = (int(v) for v in rng.integers(4, 20, size=2))
            p_h, p_w = int(rng.integers(1, min(height, 5) + 1)), int(rng.integers(1, min(width, 5) + 1))
            img = (rng.random((height, width)) < 0.5).astype(np.uint8)
            once = reconstruct(img, p_h, p_w)
            assert once.shape == img.shape
            assert np.array_equal(reconstruct(once, p_h, p_w), once)

    def test_median_reconstruction_is_idempotent(self, rng):
        img = rng.uniform(-1, 1, size=(16, 16))
        once = reconstruct(img, 4, 2, "median")
        assert np.array_equal(reconstruct(once, 4, 2, "median"), once)

    def test_single_pixel_cell(self):
        cell = np.zeros((5, 5), dtype=np.uint8)
        cell[1, 3] = 1
        assert retile_reconstruction(cell, 20, 20).sum() == 16
