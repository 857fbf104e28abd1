"""Marker-based watershed label maps grown by a deterministic priority flood.

Pipeline: luma -> Gaussian smoothing -> plateau minima as seeds -> 4-neighbor
priority flood -> min/max normalization of the label indices.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import IncompleteLabeling, InvalidChannels, InvalidParameter, NoSeeds, ShapeMismatch
from .imaging import ImageBuffer, gaussian_blur, to_grayscale


@dataclass(frozen=True)
class WatershedConfig:
    sigma: float = 2.0
    eps: float = 1e-8

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameter(f"sigma must be > 0, got {self.sigma}")
        if not self.eps > 0:
            raise InvalidParameter(f"eps must be > 0, got {self.eps}")


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Integer labels; 0 means unlabeled, regions are numbered 1..K."""

    labels: np.ndarray

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def num_labels(self) -> int:
        return int(self.labels.max())


@dataclass(frozen=True, eq=False)
class NormalizedMap:
    values: np.ndarray
    labels: LabelMap | None = None


def _single_channel(img) -> np.ndarray:
    if isinstance(img, ImageBuffer):
        if img.channels != 1:
            raise InvalidChannels(f"expected a single-channel image, got {img.channels}")
        return img.data[:, :, 0]
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] != 1:
            raise InvalidChannels(f"expected a single-channel image, got {arr.shape[2]}")
        arr = arr[:, :, 0]
    return arr


def _neighbor_pairs(h: int, w: int):
    """Flat index pairs of all horizontal and vertical 4-neighbors."""
    idx = np.arange(h * w).reshape(h, w)
    right = (idx[:, :-1].ravel(), idx[:, 1:].ravel())
    down = (idx[:-1, :].ravel(), idx[1:, :].ravel())
    return np.concatenate([right[0], down[0]]), np.concatenate([right[1], down[1]])


def detect_minima(smoothed) -> LabelMap:
    """Seed every plateau that has no strictly lower 4-neighbor.

    A plateau is a maximal 4-connected set of exactly equal values. Seeds are
    numbered 1..K in row-major order of each plateau's first pixel.
    """
    img = _single_channel(smoothed)
    h, w = img.shape
    flat = img.ravel()
    p, q = _neighbor_pairs(h, w)
    equal = flat[p] == flat[q]
    graph = coo_matrix((np.ones(equal.sum()), (p[equal], q[equal])), shape=(h * w, h * w))
    n_comp, comp = connected_components(graph, directed=False)

    has_lower = np.zeros(h * w, dtype=bool)
    has_lower[p[flat[q] < flat[p]]] = True
    has_lower[q[flat[p] < flat[q]]] = True
    blocked = np.bincount(comp, weights=has_lower, minlength=n_comp) > 0

    _, first = np.unique(comp, return_index=True)
    seed_comps = [c for c in np.argsort(first, kind="stable") if not blocked[c]]
    numbering = np.zeros(n_comp, dtype=np.int64)
    numbering[seed_comps] = np.arange(1, len(seed_comps) + 1)
    return LabelMap(numbering[comp].reshape(h, w))


def propagate_labels(smoothed, seeds: LabelMap) -> LabelMap:
    """Grow the seed labels to every pixel by a greedy priority flood.

    Frontier entries are ``(cost, pixel, label)`` with cost the absolute
    intensity step from the labeled neighbor; the lexicographically smallest
    entry is committed first.
    """
    img = _single_channel(smoothed)
    h, w = img.shape
    if seeds.labels.shape != (h, w):
        raise ShapeMismatch(f"seeds {seeds.labels.shape} vs image {(h, w)}")
    labels = seeds.labels.astype(np.int64).ravel().copy()
    if not labels.any():
        raise NoSeeds("no seed labels to propagate")
    flat = img.ravel().tolist()
    lab = labels.tolist()
    n = h * w

    def neighbors(i):
        r, c = divmod(i, w)
        if r > 0:
            yield i - w
        if c > 0:
            yield i - 1
        if c < w - 1:
            yield i + 1
        if r < h - 1:
            yield i + w

    heap = []
    for i in range(n):
        if lab[i]:
            for j in neighbors(i):
                if not lab[j]:
                    heap.append((abs(flat[j] - flat[i]), j, lab[i]))
    heapq.heapify(heap)
    remaining = lab.count(0)
    while remaining and heap:
        _, i, label = heapq.heappop(heap)
        if lab[i]:
            continue
        lab[i] = label
        remaining -= 1
        for j in neighbors(i):
            if not lab[j]:
                heapq.heappush(heap, (abs(flat[j] - flat[i]), j, label))
    return LabelMap(np.asarray(lab, dtype=np.int64).reshape(h, w))


def normalize_labels(labels: LabelMap, eps: float = 1e-8) -> NormalizedMap:
    lab = labels.labels
    if (lab == 0).any():
        raise IncompleteLabeling("label map still contains unlabeled pixels")
    lo, hi = lab.min(), lab.max()
    values = (lab - lo) / (hi - lo + eps)
    return NormalizedMap(values.astype(np.float64), labels)


def smoothed_intensity(img: ImageBuffer, cfg: WatershedConfig) -> ImageBuffer:
    img = img.to_unit()
    if img.channels == 3:
        img = to_grayscale(img)
    return gaussian_blur(img, cfg.sigma)


def watershed_map(img: ImageBuffer, cfg: WatershedConfig = WatershedConfig()) -> NormalizedMap:
    smoothed = smoothed_intensity(img, cfg)
    seeds = detect_minima(smoothed)
    return normalize_labels(propagate_labels(smoothed, seeds), cfg.eps)
