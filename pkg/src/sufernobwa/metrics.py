"""PSNR, SSIM and the universal quality index (UQI)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch, TooSmall
from .imaging import ImageBuffer

PSNR_CAP = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

UQI_WINDOW = 8


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    uqi: float

    def formatted(self) -> dict[str, str]:
        return {"psnr": f"{self.psnr:.2f}", "ssim": f"{self.ssim:.3f}", "uqi": f"{self.uqi:.3f}"}


def _pair(a: ImageBuffer, b: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return a.to_unit().data, b.to_unit().data


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """``10 log10(1/MSE)`` in dB, capped at 100 dB (identical images)."""
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _valid_filter(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2-D array with a 1-D kernel."""
    n = len(k)
    rows = sliding_window_view(x, n, axis=0) @ k
    return sliding_window_view(rows, n, axis=1) @ k


def _ssim_channel(x: np.ndarray, y: np.ndarray, k: np.ndarray) -> float:
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mx, my = _valid_filter(x, k), _valid_filter(y, k)
    vx = _valid_filter(x * x, k) - mx * mx
    vy = _valid_filter(y * y, k) - my * my
    cov = _valid_filter(x * y, k) - mx * my
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    x, y = _pair(a, b)
    if min(x.shape[:2]) < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[:2]}")
    r = SSIM_WINDOW // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t**2) / (2 * SSIM_SIGMA**2))
    k /= k.sum()
    return float(np.mean([_ssim_channel(x[..., c], y[..., c], k) for c in range(x.shape[2])]))


def _uqi_channel(x: np.ndarray, y: np.ndarray) -> float:
    k = np.full(UQI_WINDOW, 1.0 / UQI_WINDOW)
    mx, my = _valid_filter(x, k), _valid_filter(y, k)
    vx = _valid_filter(x * x, k) - mx * mx
    vy = _valid_filter(y * y, k) - my * my
    cov = _valid_filter(x * y, k) - mx * my
    den_var = vx + vy
    den_mean = mx * mx + my * my
    q = np.ones_like(mx)
    both = (den_var != 0) & (den_mean != 0)
    q[both] = (2 * cov[both] / den_var[both]) * (2 * mx[both] * my[both] / den_mean[both])
    # flat windows fall back to the luminance or contrast factor alone
    only_mean = (den_var == 0) & (den_mean != 0)
    q[only_mean] = 2 * mx[only_mean] * my[only_mean] / den_mean[only_mean]
    only_var = (den_var != 0) & (den_mean == 0)
    q[only_var] = 2 * cov[only_var] / den_var[only_var]
    return float(np.mean(q))


def uqi(a: ImageBuffer, b: ImageBuffer) -> float:
    """Wang-Bovik universal quality index over 8x8 sliding windows."""
    x, y = _pair(a, b)
    if min(x.shape[:2]) < UQI_WINDOW:
        raise TooSmall(f"UQI needs at least {UQI_WINDOW}x{UQI_WINDOW}, got {x.shape[:2]}")
    return float(np.mean([_uqi_channel(x[..., c], y[..., c]) for c in range(x.shape[2])]))


def evaluate_pair(pred: ImageBuffer, gt: ImageBuffer) -> MetricReport:
    return MetricReport(psnr(pred, gt), ssim(pred, gt), uqi(pred, gt))
