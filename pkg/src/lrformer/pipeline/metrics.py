"""PSNR and windowed SSIM for restoration quality."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 8


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) in dB; identical inputs give math.inf."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if peak <= 0.0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((np.asarray(pred, float) - np.asarray(target, float)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(pred: np.ndarray, target: np.ndarray, peak: float = 1.0,
         window: int = SSIM_WINDOW) -> float:
    """Mean structural similarity over sliding uniform windows.

    Standard stabilizers C1 = (0.01 peak)^2, C2 = (0.03 peak)^2; both
    extents must be at least the window size.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 2:
        raise ValueError(f"expected 2-D images, got shape {pred.shape}")
    if min(pred.shape) < window:
        raise ValueError(
            f"image {pred.shape} smaller than the {window}x{window} window"
        )
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    p = sliding_window_view(pred, (window, window))
    t = sliding_window_view(target, (window, window))
    mu_p = p.mean(axis=(2, 3))
    mu_t = t.mean(axis=(2, 3))
    var_p = (p**2).mean(axis=(2, 3)) - mu_p**2
    var_t = (t**2).mean(axis=(2, 3)) - mu_t**2
    cov = (p * t).mean(axis=(2, 3)) - mu_p * mu_t
    score = ((2 * mu_p * mu_t + c1) * (2 * cov + c2)
             / ((mu_p**2 + mu_t**2 + c1) * (var_p + var_t + c2)))
    return float(score.mean())
