"""Procedural test images: seeded value-noise background with map-like line work and shapes."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def value_noise(shape, cell: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth noise: a random lattice of ``cell``-pixel spacing, cubically upsampled."""
    h, w = shape
    gh, gw = int(np.ceil(h / cell)) + 4, int(np.ceil(w / cell)) + 4
    grid = rng.random((gh, gw))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(grid, [yy / cell + 1.5, xx / cell + 1.5], order=3, mode="reflect")


def _segment_distance(xx, yy, p, q):
    d = q - p
    t = np.clip(((xx - p[0]) * d[0] + (yy - p[1]) * d[1]) / max(d @ d, 1e-12), 0.0, 1.0)
    return np.hypot(xx - (p[0] + t * d[0]), yy - (p[1] + t * d[1]))


def textured_image(
    size=512,
    seed: int = 0,
    n_shapes: int = 140,
    n_strokes: int = 160,
    low: float = 0.05,
    high: float = 0.95,
) -> np.ndarray:
    """A deterministic map-like image with values in ``[low, high]``.

    Filled discs and rectangles, then polyline strokes of 1.5-4 px width,
    are painted with absolute gray levels over a smooth noise background.
    """
    h, w = (size, size) if np.isscalar(size) else size
    rng = np.random.default_rng(seed)
    img = np.full((h, w), 0.5)
    for cell, amp in ((64.0, 0.4), (24.0, 0.25), (10.0, 0.15)):
        img += amp * (value_noise((h, w), cell, rng) - 0.5)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(n_shapes):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        r = rng.uniform(4, 26)
        if rng.random() < 0.5:
            dist = np.hypot(xx - cx, yy - cy) - r
        else:
            ang = rng.uniform(0, np.pi)
            u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
            v = (yy - cy) * np.cos(ang) - (xx - cx) * np.sin(ang)
            dist = np.maximum(np.abs(u) - r, np.abs(v) - r * rng.uniform(0.3, 1.0))
        alpha = np.clip(0.5 - dist, 0.0, 1.0)
        img += alpha * (rng.uniform(0.0, 1.0) - img)
    for _ in range(n_strokes):
        pts = [rng.uniform(0, [w, h])]
        for _ in range(rng.integers(2, 5)):
            step = rng.uniform(15, 80)
            ang = rng.uniform(0, 2 * np.pi)
            pts.append(pts[-1] + step * np.array([np.cos(ang), np.sin(ang)]))
        half = rng.uniform(0.75, 2.0)
        dist = np.full((h, w), np.inf)
        for p, q in zip(pts[:-1], pts[1:]):
            dist = np.minimum(dist, _segment_distance(xx, yy, p, q))
        alpha = np.clip(half + 0.5 - dist, 0.0, 1.0)
        img += alpha * ((0.0 if rng.random() < 0.6 else 1.0) - img)
    img = ndimage.gaussian_filter(img, 0.5)
    return np.clip(low + (high - low) * img, low, high)
