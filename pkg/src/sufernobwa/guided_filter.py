"""Guided filter with per-pixel (optionally smoothed) linear coefficients.

The guide supplies the local statistics and the reference supplies the target
means; channels are filtered independently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidParameter, ShapeMismatch
from .imaging import ImageBuffer, box_kernel1d, separable

DEFAULT_EPS = 1e-4


def default_radius(height: int) -> int:
    """Window radius 4 at 256 px, scaled linearly with image height."""
    return max(1, int(round(4 * height / 256)))


@dataclass(frozen=True, eq=False)
class GuidedCoefficients:
    a: np.ndarray
    b: np.ndarray
    radius: int
    eps: float


def _check_pair(guide: np.ndarray, reference: np.ndarray) -> None:
    if guide.shape != reference.shape:
        raise ShapeMismatch(f"guide {guide.shape} vs reference {reference.shape}")


def flat_windows(x: np.ndarray, radius: int) -> np.ndarray:
    """True where every sample in the window is identical (zero variance)."""
    size = (2 * radius + 1, 2 * radius + 1) + (1,) * (x.ndim - 2)
    hi = ndimage.maximum_filter(x, size=size, mode="mirror")
    lo = ndimage.minimum_filter(x, size=size, mode="mirror")
    return hi == lo


def coefficient_terms(guide: np.ndarray, reference: np.ndarray, radius: int, eps: float) -> dict:
    """Every intermediate of the coefficient computation, kept for backprop."""
    _check_pair(guide, reference)
    if not eps > 0:
        raise InvalidParameter(f"eps must be > 0, got {eps}")
    k = box_kernel1d(radius)
    mu_t = separable(guide, k)
    mu_ref = separable(reference, k)
    cross = separable(guide * reference, k)
    var_raw = separable(guide * guide, k) - mu_t * mu_t
    var = np.maximum(var_raw, 0.0)
    num = cross - mu_t * mu_ref
    den = var + eps
    flat = flat_windows(guide, radius)
    a = np.where(flat, 0.0, num / den)
    b = np.where(flat, mu_ref, mu_ref - a * mu_t)
    return dict(
        kernel=k, mu_t=mu_t, mu_ref=mu_ref, var_raw=var_raw,
        num=num, den=den, flat=flat, a=a, b=b,
    )


def guided_coefficients(guide: ImageBuffer, reference: ImageBuffer, radius: int,
                        eps: float = DEFAULT_EPS) -> GuidedCoefficients:
    """Per-pixel gain ``a`` and offset ``b``.

    ``a = (mean(g*ref) - mean(g)*mean(ref)) / (var(g) + eps)`` and
    ``b = mean(ref) - a*mean(g)``, all means over the ``(2r+1)^2`` box.
    Windows where the guide is exactly constant get ``a = 0, b = mean(ref)``.
    """
    t = coefficient_terms(guide.data, reference.data, radius, eps)
    return GuidedCoefficients(t["a"], t["b"], int(radius), float(eps))


def smooth_coefficients(coefs: GuidedCoefficients) -> GuidedCoefficients:
    """Box-average ``a`` and ``b`` over the same window (canonical guided filter)."""
    k = box_kernel1d(coefs.radius)
    return GuidedCoefficients(separable(coefs.a, k), separable(coefs.b, k), coefs.radius, coefs.eps)


def guided_filter_apply(guide: ImageBuffer, coefs: GuidedCoefficients) -> ImageBuffer:
    if coefs.a.shape != guide.data.shape or coefs.b.shape != guide.data.shape:
        raise ShapeMismatch(f"coefficients {coefs.a.shape} vs guide {guide.data.shape}")
    return ImageBuffer(coefs.a * guide.data + coefs.b, guide.range_tag)


def guided_filter(guide: ImageBuffer, reference: ImageBuffer, radius: int,
                  eps: float = DEFAULT_EPS, coef_smoothing: bool = False) -> ImageBuffer:
    coefs = guided_coefficients(guide, reference, radius, eps)
    if coef_smoothing:
        coefs = smooth_coefficients(coefs)
    return guided_filter_apply(guide, coefs)
