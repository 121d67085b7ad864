"""PSNR and SSIM against closed-form values and per-pixel/per-window
oracles."""

import numpy as np
import pytest

from dehazemamba.errors import ConfigError, ShapeError
from dehazemamba.metrics import PSNR_CAP, luminance, psnr, ssim
from dehazemamba.tensor import Tensor

from helpers import loop_psnr, loop_ssim

RNG = np.random.default_rng(314)


def test_psnr_uniform_sixteen_level_difference():
    a = np.zeros((3, 24, 24), dtype=np.float32)
    b = np.full((3, 24, 24), 16.0 / 255.0, dtype=np.float32)
    # mse is exactly 16^2 on the 8-bit scale: 10*log10(255^2/256)
    assert psnr(a, b) == pytest.approx(24.0487, abs=1e-3)


def test_psnr_identical_inputs_hit_the_cap():
    a = RNG.random((3, 8, 8)).astype(np.float32)
    assert psnr(a, a) == PSNR_CAP == 99.0
    # near-identical inputs are capped rather than exceeding 99
    b = a.copy()
    b.flat[0] += 1e-9
    assert psnr(a, b) == PSNR_CAP


def test_psnr_matches_per_pixel_oracle():
    for trial in range(10):
        rng = np.random.default_rng(trial)
        a = rng.random((3, 12, 12)).astype(np.float32)
        b = rng.random((3, 12, 12)).astype(np.float32)
        assert psnr(a, b) == pytest.approx(loop_psnr(a, b), rel=1e-9)


def test_psnr_is_symmetric_and_scale_documented():
    a = RNG.random((1, 6, 6)).astype(np.float32)
    b = RNG.random((1, 6, 6)).astype(np.float32)
    assert psnr(a, b) == pytest.approx(psnr(b, a), rel=1e-12)
    # halving every error adds ~6.02 dB
    mid = (a + b) / 2.0
    assert psnr(a, mid) == pytest.approx(psnr(a, b) + 20.0 * np.log10(2.0),
                                         rel=1e-9)


def test_psnr_accepts_tensors_and_checks_shapes():
    a = RNG.random((3, 4, 4)).astype(np.float32)
    assert psnr(Tensor(a), Tensor(a.copy())) == PSNR_CAP
    with pytest.raises(ShapeError):
        psnr(a, a[:, :2])


def test_ssim_identical_inputs_is_exactly_one():
    gray = RNG.random((16, 16)).astype(np.float32)
    assert ssim(gray, gray) == 1.0
    color = RNG.random((3, 16, 16)).astype(np.float32)
    assert ssim(color, color) == 1.0


def test_ssim_matches_per_window_oracle():
    for trial in range(10):
        rng = np.random.default_rng(100 + trial)
        a = rng.random((14, 15))
        b = np.clip(a + 0.1 * rng.standard_normal((14, 15)), 0.0, 1.0)
        assert ssim(a, b) == pytest.approx(loop_ssim(a, b), rel=1e-10)


def test_ssim_color_reduces_to_luminance():
    a = RNG.random((3, 13, 13)).astype(np.float32)
    b = RNG.random((3, 13, 13)).astype(np.float32)
    assert ssim(a, b) == pytest.approx(ssim(luminance(a), luminance(b)),
                                       rel=1e-12)


def test_ssim_symmetry_and_range():
    a = RNG.random((16, 16))
    b = np.clip(a + 0.05 * RNG.standard_normal((16, 16)), 0.0, 1.0)
    assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)
    assert -1.0 <= ssim(a, b) <= 1.0
    # heavier distortion scores lower
    c = np.clip(a + 0.4 * RNG.standard_normal((16, 16)), 0.0, 1.0)
    assert ssim(a, c) < ssim(a, b)


def test_ssim_validation():
    with pytest.raises(ShapeError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))
    with pytest.raises(ConfigError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))  # smaller than the window
    with pytest.raises(ShapeError):
        ssim(np.zeros((2, 12, 12)), np.zeros((2, 12, 12)))
    with pytest.raises(ShapeError):
        ssim(np.zeros(12), np.zeros(12))


def test_luminance_weights():
    img = np.zeros((3, 2, 2))
    img[0] = 1.0
    assert np.allclose(luminance(img), 0.299)
    img = np.ones((3, 2, 2))
    assert np.allclose(luminance(img), 1.0)
    with pytest.raises(ShapeError):
        luminance(np.zeros((4, 2, 2)))
