"""Procedural grayscale test images: smooth gradients, soft shapes, texture.

Deterministic given (seed, index, size); band-limited enough to be learnable
by a small autoencoder while carrying edges and texture for restoration to
recover.
"""

from __future__ import annotations

import numpy as np

__all__ = ["synth_image", "synth_batch"]


def _grid(size: int):
    ax = (np.arange(size) + 0.5) / size
    return np.meshgrid(ax, ax, indexing="ij")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(np.clip(z, -60.0, 60.0)))


def synth_image(seed: int, index: int, size: int = 64) -> np.ndarray:
    """One procedural image as float32 (1,H,W) in [0,1]."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    yy, xx = _grid(size)
    img = 0.5 + 0.25 * np.sin(2 * np.pi * (rng.uniform(0.3, 1.2) * xx +
                                           rng.uniform(0.3, 1.2) * yy +
                                           rng.uniform()))

    # a few soft-edged ellipses at random intensities
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        ry, rx = rng.uniform(0.08, 0.3, size=2)
        ang = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = np.cos(ang) * dx + np.sin(ang) * dy
        v = -np.sin(ang) * dx + np.cos(ang) * dy
        dist = (u / rx) ** 2 + (v / ry) ** 2
        soft = _sigmoid((dist - 1.0) * rng.uniform(8, 30))
        img = img * (1 - soft) + soft * rng.uniform(0.1, 0.9)

    # one rectangle with soft edges
    y0, x0 = rng.uniform(0.1, 0.6, size=2)
    hgt, wid = rng.uniform(0.15, 0.35, size=2)
    edge = rng.uniform(15, 60)
    ry = _sigmoid(-(yy - y0) * edge) * (1 - _sigmoid(-(yy - y0 - hgt) * edge))
    rx = _sigmoid(-(xx - x0) * edge) * (1 - _sigmoid(-(xx - x0 - wid) * edge))
    mask = ry * rx
    img = img * (1 - mask) + mask * rng.uniform(0.1, 0.9)

    # gentle oriented texture
    f = rng.uniform(4, 10)
    ang = rng.uniform(0, np.pi)
    tex = np.sin(2 * np.pi * f * (np.cos(ang) * xx + np.sin(ang) * yy))
    img = img + rng.uniform(0.02, 0.06) * tex

    img = np.clip(img, 0.0, 1.0)
    return img[None].astype(np.float32)


def synth_batch(seed: int, count: int, size: int = 64, start: int = 0) -> np.ndarray:
    """(N,1,H,W) stack of procedural images."""
    return np.stack([synth_image(seed, start + i, size) for i in range(count)])
