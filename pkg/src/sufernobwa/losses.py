"""Pixel, guided and watershed losses with analytic gradients w.r.t. the prediction.

Every loss returns ``(value, gradient)`` where the gradient has the shape of
the prediction array. Reductions are means over all samples.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InvalidParameter, ShapeMismatch
from .guided_filter import DEFAULT_EPS, coefficient_terms, default_radius
from .imaging import (
    ImageBuffer,
    gaussian_kernel1d,
    grayscale_adjoint,
    separable,
    separable_adjoint,
)
from .watershed import NormalizedMap, WatershedConfig, watershed_map

WaterGrad = Literal["none", "straight_through"]
WaterMetric = Literal["l1", "l2"]


@dataclass(frozen=True)
class LossWeights:
    lambda_l2: float = 5.0
    lambda_guided: float = 1.0
    lambda_water: float = 0.5

    def __post_init__(self):
        if min(self.lambda_l2, self.lambda_guided, self.lambda_water) < 0:
            raise InvalidParameter(f"loss weights must be >= 0: {self}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lambda_l2, self.lambda_guided, self.lambda_water)


@dataclass(frozen=True)
class LossReport:
    l2: float
    guided: float
    water: float
    total: float
    weights: LossWeights = field(default_factory=LossWeights)

    def to_dict(self) -> dict:
        return {
            "l2": self.l2,
            "guided": self.guided,
            "water": self.water,
            "total": self.total,
            "weights": list(self.weights.as_tuple()),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_shapes(pred: ImageBuffer, gt: ImageBuffer) -> None:
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")


def _to_unit(img: ImageBuffer) -> tuple[np.ndarray, float]:
    """Unit-range data plus d(unit)/d(input) for the chain rule."""
    if img.range_tag == "signed":
        return (img.data + 1.0) / 2.0, 0.5
    return img.data, 1.0


def l2_loss(pred: ImageBuffer, gt: ImageBuffer) -> tuple[float, np.ndarray]:
    _check_shapes(pred, gt)
    if pred.range_tag != gt.range_tag:
        raise ShapeMismatch(f"range mismatch: {pred.range_tag} vs {gt.range_tag}")
    diff = pred.data - gt.data
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


# --------------------------------------------------------------------------
# guided


def _guided_branch(guide: np.ndarray, reference: np.ndarray, radius: int, eps: float,
                   coef_smoothing: bool) -> tuple[np.ndarray, dict]:
    t = coefficient_terms(guide, reference, radius, eps)
    a, b = t["a"], t["b"]
    if coef_smoothing:
        a, b = separable(a, t["kernel"]), separable(b, t["kernel"])
    t["a_applied"] = a
    return a * guide + b, t


def _guided_branch_backward(dout: np.ndarray, guide: np.ndarray, reference: np.ndarray,
                            t: dict, coef_smoothing: bool) -> np.ndarray:
    """Gradient of the filtered output w.r.t. the guide (reference held fixed)."""
    k = t["kernel"]
    dp = dout * t["a_applied"]
    da = dout * guide
    db = dout
    if coef_smoothing:
        da = separable_adjoint(da, k)
        db = separable_adjoint(db, k)
    # flat windows pin a = 0, b = mean(reference): no dependence on the guide
    da = np.where(t["flat"], 0.0, da)
    db = np.where(t["flat"], 0.0, db)

    mu_t, mu_ref, a = t["mu_t"], t["mu_ref"], t["a"]
    da = da - db * mu_t
    dmu_t = -db * a
    dnum = da / t["den"]
    dvar_raw = np.where(t["var_raw"] > 0, -da * a / t["den"], 0.0)
    dmu_t += -2.0 * mu_t * dvar_raw - mu_ref * dnum
    dp += 2.0 * guide * separable_adjoint(dvar_raw, k)
    dp += reference * separable_adjoint(dnum, k)
    dp += separable_adjoint(dmu_t, k)
    return dp


def guided_loss(pred: ImageBuffer, gt: ImageBuffer, radius: int | None = None,
                eps: float = DEFAULT_EPS, coef_smoothing: bool = False) -> tuple[float, np.ndarray]:
    """Mean absolute difference between the guided-filtered GT and prediction.

    Both branches take their target statistics from the ground truth; the GT
    branch is guided by the ground truth and the prediction branch by the
    prediction. The gradient uses subgradient 0 where the residual is 0.
    """
    _check_shapes(pred, gt)
    p, scale = _to_unit(pred)
    g, _ = _to_unit(gt)
    if radius is None:
        radius = default_radius(pred.height)
    out_gt, _ = _guided_branch(g, g, radius, eps, coef_smoothing)
    out_pred, cache = _guided_branch(p, g, radius, eps, coef_smoothing)
    resid = out_pred - out_gt
    n = resid.size
    value = float(np.sum(np.abs(resid)) / n)
    dout = np.sign(resid) / n
    grad = _guided_branch_backward(dout, p, g, cache, coef_smoothing)
    return value, grad * scale


# --------------------------------------------------------------------------
# watershed


def water_loss(pred: ImageBuffer, gt: ImageBuffer, cfg: WatershedConfig = WatershedConfig(),
               metric: WaterMetric = "l2", grad_mode: WaterGrad = "none",
               gt_map: NormalizedMap | None = None) -> tuple[float, np.ndarray]:
    """Mean squared (or absolute) difference of the normalized label maps.

    The label maps are piecewise constant in the prediction, so the default
    gradient is zero. ``grad_mode="straight_through"`` backpropagates as if the
    map were the smoothed luma itself. ``gt_map`` may carry a precomputed
    ground-truth map.
    """
    _check_shapes(pred, gt)
    if metric not in ("l1", "l2"):
        raise InvalidParameter(f"unknown water metric {metric!r}")
    if grad_mode not in ("none", "straight_through"):
        raise InvalidParameter(f"unknown water gradient mode {grad_mode!r}")
    if gt_map is None:
        gt_map = watershed_map(gt, cfg)
    pred_map = watershed_map(pred, cfg)
    diff = pred_map.values - gt_map.values
    n = diff.size
    if metric == "l2":
        value = float(np.sum(diff * diff) / n)
        dmap = 2.0 * diff / n
    else:
        value = float(np.sum(np.abs(diff)) / n)
        dmap = np.sign(diff) / n

    grad = np.zeros_like(pred.data)
    if grad_mode == "straight_through":
        dsmooth = separable_adjoint(dmap[:, :, None], gaussian_kernel1d(cfg.sigma))
        grad = grayscale_adjoint(dsmooth) if pred.channels == 3 else dsmooth
        if pred.range_tag == "signed":
            grad = grad * 0.5
    return value, grad


# --------------------------------------------------------------------------
# total


def total_loss(pred: ImageBuffer, gt: ImageBuffer, w: LossWeights = LossWeights(),
               radius: int | None = None, eps_g: float = DEFAULT_EPS,
               wcfg: WatershedConfig = WatershedConfig(), *,
               water_grad: WaterGrad = "none", water_metric: WaterMetric = "l2",
               coef_smoothing: bool = False,
               gt_map: NormalizedMap | None = None) -> tuple[LossReport, np.ndarray]:
    """Weighted sum of the three terms, evaluated in unit range.

    Signed-range inputs are mapped through ``(x+1)/2`` first and the returned
    gradient is with respect to the input as given.
    """
    _check_shapes(pred, gt)
    pred_u, gt_u = pred.to_unit(), gt.to_unit()
    scale = 0.5 if pred.range_tag == "signed" else 1.0

    l2, g_l2 = l2_loss(pred_u, gt_u)
    gl, g_gl = guided_loss(pred_u, gt_u, radius, eps_g, coef_smoothing)
    wl, g_wl = water_loss(pred_u, gt_u, wcfg, water_metric, water_grad, gt_map)

    total = w.lambda_l2 * l2 + w.lambda_guided * gl + w.lambda_water * wl
    grad = w.lambda_l2 * g_l2 + w.lambda_guided * g_gl + w.lambda_water * g_wl
    return LossReport(l2, gl, wl, total, w), grad * scale
