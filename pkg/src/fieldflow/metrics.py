"""Volume quality metrics: NRMSE (%), PSNR (dB) and 3D SSIM (%)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fieldflow.volume import as_array


@dataclass(frozen=True)
class MetricsReport:
    nrmse_pct: float
    psnr_db: float
    ssim_pct: float


def _pair(pred, gt):
    p, g = as_array(pred), as_array(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def nrmse(pred, gt) -> float:
    """RMSE normalized by the ground-truth dynamic range, in percent."""
    p, g = _pair(pred, gt)
    span = float(g.max() - g.min())
    if span == 0:
        raise ValueError("ground truth is constant; NRMSE is undefined")
    return 100.0 * math.sqrt(float(np.mean((p - g) ** 2))) / span


def psnr(pred, gt, data_range: float = 1.0) -> float:
    p, g = _pair(pred, gt)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((p - g) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def _box_sums(x: np.ndarray, w: int) -> np.ndarray:
    """Sum over every w*w*w window fully inside the volume (summed-area table)."""
    s = np.pad(x, ((1, 0), (1, 0), (1, 0))).cumsum(0).cumsum(1).cumsum(2)
    return (
        s[w:, w:, w:]
        - s[:-w, w:, w:]
        - s[w:, :-w, w:]
        - s[w:, w:, :-w]
        + s[:-w, :-w, w:]
        + s[:-w, w:, :-w]
        + s[w:, :-w, :-w]
        - s[:-w, :-w, :-w]
    )


def ssim_map(pred, gt, window: int = 7, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> np.ndarray:
    """SSIM index at every valid window position (uniform cubic windows).

    Variances and covariance use the unbiased ``1/(N-1)`` normalization.
    """
    p, g = _pair(pred, gt)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if min(p.shape) < window:
        raise ValueError(f"volume {p.shape} smaller than window {window}")
    n = window**3
    # centre the data first; window statistics are shift invariant and the
    # cumulative sums lose less precision this way
    p = p - p.mean()
    g = g - g.mean()
    mp, mg = _box_sums(p, window) / n, _box_sums(g, window) / n
    cov_norm = n / (n - 1)
    vp = (_box_sums(p * p, window) / n - mp * mp) * cov_norm
    vg = (_box_sums(g * g, window) / n - mg * mg) * cov_norm
    cpg = (_box_sums(p * g, window) / n - mp * mg) * cov_norm
    # the shift above cancels in the covariance terms but not in the means
    mp_true = mp + as_array(pred).mean()
    mg_true = mg + as_array(gt).mean()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mp_true * mg_true + c1) * (2 * cpg + c2)
    den = (mp_true**2 + mg_true**2 + c1) * (vp + vg + c2)
    return num / den


def ssim(pred, gt, window: int = 7, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean 3D SSIM over valid window positions, in percent."""
    return 100.0 * float(np.mean(ssim_map(pred, gt, window, k1, k2, data_range)))


def evaluate(pred, gt, data_range: float = 1.0, window: int = 7) -> MetricsReport:
    return MetricsReport(nrmse(pred, gt), psnr(pred, gt, data_range), ssim(pred, gt, window, data_range=data_range))
