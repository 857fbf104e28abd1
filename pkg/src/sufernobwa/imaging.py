"""Raster substrate: PNG I/O, luma, separable filters, resizing and Canny edges.

Images are held as ``H x W x C`` float64 arrays. Every local filter uses
reflect padding (mirror without repeating the edge sample), matching
``numpy.pad(mode="reflect")`` and ``scipy.ndimage`` ``mode="mirror"``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import (
    InvalidChannels,
    InvalidParameter,
    IoError,
    NotFound,
    ShapeMismatch,
    UnsupportedFormat,
)

RangeTag = Literal["unit", "signed"]

_RANGE_SLACK = 1e-6
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """An ``H x W x C`` float raster tagged with its value convention.

    ``range_tag`` is ``"unit"`` for [0, 1] and ``"signed"`` for [-1, 1].
    Construction checks the shape only; :meth:`from_array` also checks the
    value range.
    """

    data: np.ndarray
    range_tag: RangeTag = "unit"

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeMismatch(f"expected H x W x C array, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ShapeMismatch(f"empty image {arr.shape}")
        if c not in (1, 3):
            raise InvalidChannels(f"channels must be 1 or 3, got {c}")
        if self.range_tag not in ("unit", "signed"):
            raise InvalidParameter(f"unknown range tag {self.range_tag!r}")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr, range_tag: RangeTag = "unit") -> "ImageBuffer":
        img = cls(arr, range_tag)
        img.check_range()
        return img

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def check_range(self, slack: float = _RANGE_SLACK) -> None:
        lo = 0.0 if self.range_tag == "unit" else -1.0
        if not np.all(np.isfinite(self.data)):
            raise InvalidParameter("image contains non-finite samples")
        if self.data.min() < lo - slack or self.data.max() > 1.0 + slack:
            raise InvalidParameter(
                f"samples outside the {self.range_tag} range: "
                f"[{self.data.min():.6g}, {self.data.max():.6g}]"
            )

    def to_unit(self) -> "ImageBuffer":
        if self.range_tag == "unit":
            return self
        return ImageBuffer((self.data + 1.0) / 2.0, "unit")

    def to_signed(self) -> "ImageBuffer":
        if self.range_tag == "signed":
            return self
        return ImageBuffer(self.data * 2.0 - 1.0, "signed")

    def with_data(self, data: np.ndarray) -> "ImageBuffer":
        return ImageBuffer(data, self.range_tag)


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Binary edge raster (uint8 values in {0, 1})."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeMismatch(f"edge map must be 2-D, got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidParameter("edge map must be strictly binary")
        object.__setattr__(self, "data", arr.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _as_image(img) -> ImageBuffer:
    return img if isinstance(img, ImageBuffer) else ImageBuffer(img)


# --------------------------------------------------------------------------
# PNG I/O


def load_image(path) -> ImageBuffer:
    """Read an 8-bit grayscale or RGB PNG into a unit-range buffer."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise NotFound(f"no such file: {path}")
    try:
        with Image.open(path) as im:
            fmt, mode = im.format, im.mode
            if fmt != "PNG":
                raise UnsupportedFormat(f"{path}: expected PNG, got {fmt}")
            if mode not in ("L", "RGB"):
                raise UnsupportedFormat(
                    f"{path}: mode {mode} not supported (8-bit L or RGB only, no alpha)"
                )
            raw = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a readable image") from exc
    except OSError as exc:
        if isinstance(exc, (NotFound, UnsupportedFormat)):
            raise
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    return ImageBuffer(raw.astype(np.float64) / 255.0, "unit")


def quantize(img: ImageBuffer) -> np.ndarray:
    """Map to unit range and quantize with round-half-up to uint8."""
    x = img.to_unit().data
    q = np.floor(x * 255.0 + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8)


def save_image(img: ImageBuffer, path) -> None:
    img = _as_image(img)
    q = quantize(img)
    mode_data = q[:, :, 0] if img.channels == 1 else q
    try:
        Image.fromarray(mode_data).save(os.fspath(path), format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_edges(edges: EdgeMap, path) -> None:
    try:
        Image.fromarray((edges.data * 255).astype(np.uint8)).save(os.fspath(path), format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# Color


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma of a 3-channel image."""
    img = _as_image(img)
    if img.channels != 3:
        raise InvalidChannels(f"to_grayscale needs 3 channels, got {img.channels}")
    r, g, b = LUMA_WEIGHTS
    d = img.data
    y = r * d[:, :, 0] + g * d[:, :, 1] + b * d[:, :, 2]
    return ImageBuffer(y[:, :, None], img.range_tag)


def grayscale_adjoint(grad: np.ndarray) -> np.ndarray:
    """Transpose of :func:`to_grayscale` acting on an ``H x W x 1`` gradient."""
    return grad[:, :, :1] * np.asarray(LUMA_WEIGHTS)[None, None, :]


# --------------------------------------------------------------------------
# Separable linear filters


def correlate1d(arr: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """Correlate ``arr`` with an odd-length kernel along ``axis`` (reflect padding).

    Taps are accumulated in a fixed order, so every output sample is computed
    by the same sequence of floating-point operations; a constant input gives a
    bitwise-constant output.
    """
    weights = np.asarray(weights, dtype=np.float64)
    r = len(weights) // 2
    n = arr.shape[axis]
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (r, r)
    padded = np.pad(arr, pad, mode="reflect")
    out = np.zeros_like(arr, dtype=np.float64)
    for k, wk in enumerate(weights):
        out += wk * np.take(padded, np.arange(k, k + n), axis=axis)
    return out


def correlate1d_adjoint(grad: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`correlate1d` (reflect padding folded back)."""
    weights = np.asarray(weights, dtype=np.float64)
    r = len(weights) // 2
    n = grad.shape[axis]
    g = np.moveaxis(grad, axis, 0)
    gpad = np.zeros((n + 2 * r,) + g.shape[1:])
    for k, wk in enumerate(weights):
        gpad[k : k + n] += wk * g
    src = np.pad(np.arange(n), r, mode="reflect")
    out = np.zeros_like(g, dtype=np.float64)
    np.add.at(out, src, gpad)
    return np.moveaxis(out, 0, axis)


def separable(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return correlate1d(correlate1d(arr, weights, 0), weights, 1)


def separable_adjoint(grad: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return correlate1d_adjoint(correlate1d_adjoint(grad, weights, 1), weights, 0)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be > 0, got {sigma}")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def box_kernel1d(radius: int) -> np.ndarray:
    if int(radius) != radius or radius < 1:
        raise InvalidParameter(f"radius must be an integer >= 1, got {radius}")
    return np.full(2 * int(radius) + 1, 1.0 / (2 * int(radius) + 1))


def gaussian_blur(img: ImageBuffer, sigma: float) -> ImageBuffer:
    img = _as_image(img)
    return img.with_data(separable(img.data, gaussian_kernel1d(sigma)))


def box_mean(img: ImageBuffer, radius: int) -> ImageBuffer:
    """Mean over the ``(2r+1)^2`` window around every pixel."""
    img = _as_image(img)
    return img.with_data(separable(img.data, box_kernel1d(radius)))


# --------------------------------------------------------------------------
# Resampling


def _bilinear_axis(arr: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    scale = n / out_n
    src = (np.arange(out_n) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = src - i0
    shape = [1] * arr.ndim
    shape[axis] = out_n
    frac = frac.reshape(shape)
    return np.take(arr, i0, axis=axis) * (1.0 - frac) + np.take(arr, i1, axis=axis) * frac


def resize_bilinear(img: ImageBuffer, out_h: int, out_w: int) -> ImageBuffer:
    """Bilinear resize with the pixel-center convention (align_corners off)."""
    img = _as_image(img)
    if out_h < 1 or out_w < 1:
        raise InvalidParameter(f"target size must be positive, got {out_h}x{out_w}")
    if (out_h, out_w) == (img.height, img.width):
        return img.with_data(img.data.copy())
    d = _bilinear_axis(img.data, out_h, 0)
    d = _bilinear_axis(d, out_w, 1)
    return img.with_data(d)


# --------------------------------------------------------------------------
# Canny

CANNY_SIGMA = 1.4
_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
_SOBEL_DIFF = np.array([-1.0, 0.0, 1.0])


def sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives (columns, rows) of a 2-D array."""
    gx = correlate1d(correlate1d(gray, _SOBEL_SMOOTH, 0), _SOBEL_DIFF, 1)
    gy = correlate1d(correlate1d(gray, _SOBEL_DIFF, 0), _SOBEL_SMOOTH, 1)
    return gx, gy


# (row, col) offset of the neighbor along the gradient for each direction bin
NMS_RTOL = 1e-9
_NMS_OFFSETS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def direction_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(angle.shape, dtype=int)
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3
    return bins


def non_max_suppression(mag: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Thin ridges. A pixel survives if it is strictly larger than its neighbor
    behind the gradient and not smaller than the one ahead, which keeps exactly
    one pixel of a symmetric two-pixel ridge. Out-of-image neighbors count as 0.
    Magnitudes closer than NMS_RTOL relative to the peak are treated as equal so
    the tie rule is not decided by rounding noise of the smoothing pass.
    """
    h, w = mag.shape
    tol = NMS_RTOL * float(mag.max(initial=0.0))
    padded = np.pad(mag, 1)
    keep = np.zeros(mag.shape, dtype=bool)
    rows, cols = np.mgrid[0:h, 0:w]
    for b, (dr, dc) in _NMS_OFFSETS.items():
        sel = bins == b
        ahead = padded[rows + 1 + dr, cols + 1 + dc]
        behind = padded[rows + 1 - dr, cols + 1 - dc]
        keep |= sel & (mag > behind + tol) & (mag >= ahead - tol)
    return np.where(keep & (mag > 0), mag, 0.0)


def hysteresis(thin: np.ndarray, lo: float, hi: float) -> np.ndarray:
    weak = thin >= lo
    strong = thin >= hi
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros(thin.shape, dtype=bool)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def canny_edges(img: ImageBuffer, lo: float = 100.0, hi: float = 200.0) -> EdgeMap:
    """Canny edge map; thresholds are on the 0-255 gradient-magnitude scale."""
    img = _as_image(img).to_unit()
    if not lo < hi:
        raise InvalidParameter(f"need lo < hi, got lo={lo}, hi={hi}")
    if img.channels == 3:
        img = to_grayscale(img)
    gray = img.data[:, :, 0] * 255.0
    smooth = separable(gray, gaussian_kernel1d(CANNY_SIGMA))
    gx, gy = sobel(smooth)
    mag = np.hypot(gx, gy)
    thin = non_max_suppression(mag, direction_bins(gx, gy))
    return EdgeMap(hysteresis(thin, lo, hi).astype(np.uint8))
