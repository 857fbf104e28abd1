"""Synthetic clear/hazy pairs and dataset trees for tests and demos."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .imaging import ImageBuffer, gaussian_blur, save_image


def clear_scene(size: int, rng: np.random.Generator) -> np.ndarray:
    """A blocky 'aerial' scene: smooth ground, rectangles and a couple of roads."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.2, 0.5, 3)
    img = np.empty((size, size, 3))
    for c in range(3):
        img[:, :, c] = base[c] + 0.15 * np.sin(2 * np.pi * (rng.uniform(0.5, 2) * xx + rng.uniform()))
    for _ in range(rng.integers(4, 9)):
        h, w = rng.integers(size // 10, size // 3, 2)
        r, c = rng.integers(0, size - h), rng.integers(0, size - w)
        img[r : r + h, c : c + w] = rng.uniform(0.05, 0.95, 3)
    for _ in range(2):
        pos, width = rng.integers(0, size - 4), max(1, size // 32)
        if rng.random() < 0.5:
            img[pos : pos + width, :] = 0.85
        else:
            img[:, pos : pos + width] = 0.85
    return np.clip(gaussian_blur(ImageBuffer(img), 0.7).data, 0.0, 1.0)


LUMA = np.array([0.299, 0.587, 0.114])


def ramp_scene(size: int, rng: np.random.Generator) -> np.ndarray:
    """A tilted luminance ramp carrying luma-neutral color patches.

    The watershed term of the loss has no gradient and counts basins, so on
    blocky scenes it only reaches zero once every spurious minimum of the
    prediction is gone. A ramp has a single basin and a slope large enough
    that small residuals cannot carve new ones; the patches change color but
    not luma, so the network still has structure to learn.
    """
    yy, xx = np.mgrid[0:size, 0:size] / size
    ang = rng.uniform(0.2, 1.3)
    f = np.cos(ang) * yy + np.sin(ang) * xx
    f = 0.15 + 0.7 * (f - f.min()) / np.ptp(f)
    img = np.repeat(f[:, :, None], 3, axis=2)
    for _ in range(rng.integers(4, 8)):
        h, w = rng.integers(size // 8, size // 3, 2)
        r, c = rng.integers(0, size - h), rng.integers(0, size - w)
        v = rng.normal(size=3)
        v -= LUMA * (v @ LUMA) / (LUMA @ LUMA)
        img[r : r + h, c : c + w] += v * rng.uniform(0.08, 0.18) / np.abs(v).max()
    return np.clip(gaussian_blur(ImageBuffer(img), 0.7).data, 0.0, 1.0)


def add_haze(clear: np.ndarray, rng: np.random.Generator, density: float = 0.5) -> np.ndarray:
    """Atmospheric scattering model ``I = J t + A (1 - t)`` with a smooth transmission."""
    size = clear.shape[0]
    noise = gaussian_blur(ImageBuffer(rng.random((size, size, 1))), size / 8).data
    noise = (noise - noise.min()) / (np.ptp(noise) + 1e-12)
    t = np.clip(1.0 - density * (0.6 + 0.4 * noise), 0.05, 1.0)
    airlight = rng.uniform(0.8, 0.95)
    return np.clip(clear * t + airlight * (1 - t), 0.0, 1.0)


SCENES = {"blocks": clear_scene, "ramp": ramp_scene}


def synthetic_pair(size: int = 64, seed: int = 0, density: float = 0.5,
                   scene: str = "blocks") -> tuple[ImageBuffer, ImageBuffer]:
    """Return ``(hazy, clear)`` unit-range buffers."""
    rng = np.random.default_rng(seed)
    clear = SCENES[scene](size, rng)
    return ImageBuffer(add_haze(clear, rng, density)), ImageBuffer(clear)


def write_rice_tree(root, n: int, size: int = 16, seed: int = 0) -> Path:
    """``root/cloud/*.png`` and ``root/label/*.png`` with matching names."""
    root = Path(root)
    for sub in ("cloud", "label"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i in range(n):
        hazy, clear = synthetic_pair(size, seed + i)
        save_image(hazy, root / "cloud" / f"{i:04d}.png")
        save_image(clear, root / "label" / f"{i:04d}.png")
    return root


def write_satehaze_tree(root, n_train_per_level: int, n_test_per_level: int = 45,
                        size: int = 16, seed: int = 0) -> Path:
    """``root/<level>/<split>/{input,target}/*.png`` for thin/moderate/thick."""
    root = Path(root)
    densities = {"thin": 0.3, "moderate": 0.55, "thick": 0.8}
    k = seed
    for level, density in densities.items():
        for split, count in (("train", n_train_per_level), ("test", n_test_per_level)):
            for sub in ("input", "target"):
                os.makedirs(root / level / split / sub, exist_ok=True)
            for i in range(count):
                hazy, clear = synthetic_pair(size, k, density)
                k += 1
                save_image(hazy, root / level / split / "input" / f"{i:04d}.png")
                save_image(clear, root / level / split / "target" / f"{i:04d}.png")
    return root
