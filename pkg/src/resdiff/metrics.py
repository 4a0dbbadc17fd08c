"""Restoration quality metrics: PSNR and SSIM on [0, 1]-valued fields."""

from __future__ import annotations

import numpy as np

from .fields import as_field, same_shape

__all__ = ["psnr", "ssim", "PSNR_CAP_DB"]

# Reported for a zero-MSE pair so perfect restorations stay representable
# in tables; finite nonzero MSE is never clamped.
PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB between two same-shape fields.

    Returns ``10*log10(peak**2 / mse)``, or :data:`PSNR_CAP_DB` when the
    fields are identical (MSE of exactly zero).
    """
    a = as_field(a, "a")
    b = as_field(b, "b")
    same_shape(a, b)
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _valid_sep_filter(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    # separable 'valid' convolution; the window is symmetric so
    # correlation and convolution coincide
    n = w.size
    out = np.empty((img.shape[0] - n + 1, img.shape[1]), dtype=np.float64)
    for i in range(out.shape[0]):
        out[i] = w @ img[i : i + n]
    out2 = np.empty((out.shape[0], img.shape[1] - n + 1), dtype=np.float64)
    for j in range(out2.shape[1]):
        out2[:, j] = out[:, j : j + n] @ w
    return out2


def _ssim_2d(a: np.ndarray, b: np.ndarray, dynamic_range: float) -> float:
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (_SSIM_K1 * dynamic_range) ** 2
    c2 = (_SSIM_K2 * dynamic_range) ** 2
    mu_a = _valid_sep_filter(a, w)
    mu_b = _valid_sep_filter(b, w)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = _valid_sep_filter(a * a, w) - mu_aa
    var_b = _valid_sep_filter(b * b, w) - mu_bb
    cov = _valid_sep_filter(a * b, w) - mu_ab
    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, dynamic_range: float = 1.0) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Accepts 2-D fields or 3-D (height, width, channels) fields; channels
    are scored independently and averaged. Both spatial extents must be
    at least the window size. Stabilizer constants use K1=0.01, K2=0.03
    on the given dynamic range.
    """
    a = as_field(a, "a")
    b = as_field(b, "b")
    same_shape(a, b)
    if dynamic_range <= 0:
        raise ValueError(f"dynamic_range must be positive, got {dynamic_range}")
    if a.ndim == 2:
        planes = [(a, b)]
    elif a.ndim == 3:
        planes = [(a[..., c], b[..., c]) for c in range(a.shape[2])]
    else:
        raise ValueError(f"ssim expects 2-D or (H, W, C) fields, got shape {a.shape}")
    h, w_ = planes[0][0].shape
    if h < _SSIM_WINDOW or w_ < _SSIM_WINDOW:
        raise ValueError(
            f"spatial extents must be >= {_SSIM_WINDOW}, got {(h, w_)}"
        )
    return float(np.mean([_ssim_2d(pa, pb, dynamic_range) for pa, pb in planes]))
