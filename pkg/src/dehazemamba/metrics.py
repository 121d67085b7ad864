"""Reference image quality metrics: PSNR and SSIM.

Both accept arrays scaled to [0, 1]; the math runs on the 8-bit scale
(peak 255) in float64. PSNR is capped at 99 dB so identical images get a
finite, documented value. SSIM uses an 11x11 Gaussian window (sigma 1.5),
K1 = 0.01, K2 = 0.03, dynamic range 255, computed on ITU-R 601 luminance
for color inputs and averaged over valid window positions.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

__all__ = ["luminance", "psnr", "ssim", "PSNR_CAP"]

PSNR_CAP = 99.0
_LUMA = np.array([0.299, 0.587, 0.114])


def _np(a) -> np.ndarray:
    data = getattr(a, "data", a)
    return np.asarray(data, dtype=np.float64)


def luminance(img) -> np.ndarray:
    """ITU-R 601 luminance of [..., 3, H, W] arrays."""
    img = _np(img)
    if img.ndim < 3 or img.shape[-3] != 3:
        raise ShapeError(f"luminance: need [...,3,H,W], got {img.shape}")
    return np.tensordot(_LUMA, img, axes=([0], [-3]))


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB on the 8-bit scale, capped at 99.

    Inputs are [0, 1]-scaled arrays of identical shape; the difference is
    multiplied by ``peak`` before the MSE.
    """
    a, b = _np(a), _np(b)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes {a.shape} and {b.shape} differ")
    diff = (a - b) * peak
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _window_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    win = sliding_window_view(img, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01,
         k2: float = 0.03, peak: float = 255.0) -> float:
    """Mean structural similarity over valid window positions.

    Accepts [H,W] grayscale or [3,H,W] color ([0, 1] scale); color inputs
    are reduced to luminance first. Identical inputs return exactly 1.0.
    """
    a, b = _np(a), _np(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if a.ndim == 3:
        a, b = luminance(a), luminance(b)
    if a.ndim != 2:
        raise ShapeError(f"ssim: need [H,W] or [3,H,W], got rank {a.ndim}")
    if a.shape[0] < window or a.shape[1] < window:
        raise ConfigError(
            f"ssim: image {a.shape} is smaller than the {window}x{window} window")
    a = a * peak
    b = b * peak
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    kernel = _gaussian_window(window, sigma)
    mu_a = _window_mean(a, kernel)
    mu_b = _window_mean(b, kernel)
    var_a = _window_mean(a * a, kernel) - mu_a * mu_a
    var_b = _window_mean(b * b, kernel) - mu_b * mu_b
    cov = _window_mean(a * b, kernel) - mu_a * mu_b
    score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    return float(score.mean())
