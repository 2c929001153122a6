"""Per-RF pooled responses, 17-level quantized feature vectors and their similarity.

A layer's features are a ``(19, 19, O)`` array indexed ``[element, rf, orientation]``.
One element's feature vector is the ``(19, O)`` slice for that element.
"""

from __future__ import annotations

import numpy as np

from .gabor import filter_bank, make_bank, pool_many
from .topology import LayerGeometry, StackConfig, layer_geometry, layer_sigma

LEVELS = 16
# values within this of an integer are treated as that integer before ceil
_CEIL_SLACK = 1e-9


class CoverageError(ValueError):
    """A mask or point does not overlap the image enough to extract features."""


class ImageResponses:
    """Lazily computed Gabor response maps of one image, one stack per layer."""

    def __init__(self, img: np.ndarray, cfg: StackConfig):
        self.image = np.asarray(img, dtype=np.float64)
        self.cfg = cfg
        self._maps: dict[int, np.ndarray] = {}
        self._geom: dict[int, LayerGeometry] = {}

    @property
    def shape(self):
        return self.image.shape

    def geometry(self, m: int) -> LayerGeometry:
        if m not in self._geom:
            self._geom[m] = layer_geometry(self.cfg, m)
        return self._geom[m]

    def stack(self, m: int) -> np.ndarray:
        """Channels-last ``(H, W, O)`` response maps for layer ``m``."""
        if m not in self._maps:
            bank = make_bank(layer_sigma(self.cfg, m), self.cfg.orientations, self.cfg.bandwidth)
            self._maps[m] = np.ascontiguousarray(np.moveaxis(filter_bank(self.image, bank), 0, -1))
        return self._maps[m]

    def maps(self, m: int) -> np.ndarray:
        """``(O, H, W)`` view of the layer-``m`` response maps."""
        return np.moveaxis(self.stack(m), -1, 0)

    def raw_layer(self, m: int, mask_center) -> np.ndarray:
        return pool_layer(self.stack(m), self.geometry(m), mask_center)

    def layer_features(self, m: int, mask_center) -> np.ndarray:
        return quantize_layer(self.raw_layer(m, mask_center))


def _overlaps(shape, g: LayerGeometry, mask_center) -> bool:
    h, w = shape
    cx, cy = float(mask_center[0]), float(mask_center[1])
    gap = np.hypot(min(max(cx, 0.0), w - 1.0) - cx, min(max(cy, 0.0), h - 1.0) - cy)
    return bool(gap <= g.mask_radius)


def pool_layer(stack: np.ndarray, g: LayerGeometry, mask_center) -> np.ndarray:
    """Raw pooled responses ``(19, 19, O)`` of a layer placed at ``mask_center``.

    ``stack`` holds the layer's response maps channels-last, ``(H, W, O)``.
    """
    if not _overlaps(stack.shape[:2], g, mask_center):
        raise CoverageError(f"layer {g.layer} mask at {tuple(mask_center)} lies outside the image")
    centers = g.rf_centers(mask_center).reshape(-1, 2)
    return pool_many(stack, centers, g.rf_radius).reshape(19, 19, -1)


def extract_layer_raw(img: np.ndarray, bank, g: LayerGeometry, mask_center) -> np.ndarray:
    """Filter ``img`` with ``bank`` and pool every RF of layer ``g`` at ``mask_center``."""
    if not np.isclose(bank.sigma, g.sigma, rtol=1e-12, atol=0):
        raise ValueError("bank sigma does not match the layer")
    return pool_layer(np.moveaxis(filter_bank(img, bank), 0, -1), g, mask_center)


def quantize_layer(raw: np.ndarray) -> np.ndarray:
    """Map raw responses to integers 0..16 per orientation column.

    The min and max are taken over all 19x19 RFs of the layer for each
    orientation. A column with no spread quantizes to all zeros.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo = raw.min(axis=(0, 1), keepdims=True)
    hi = raw.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    flat = span < 1e-12
    scaled = LEVELS * (raw - lo) / np.where(flat, 1.0, span)
    q = np.ceil(scaled - _CEIL_SLACK)
    q = np.clip(q, 0, LEVELS)
    q = np.where(flat, 0, q)
    return q.astype(np.uint8)


def distance(a: np.ndarray, b: np.ndarray) -> int:
    """Total absolute difference between two feature vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")
    return int(np.abs(a.astype(np.int32) - b.astype(np.int32)).sum())


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """``exp(-sum |a - b|)``; 1.0 for identical vectors."""
    return float(np.exp(-distance(a, b)))


def is_degenerate(layer_q: np.ndarray) -> bool:
    return not np.any(layer_q)
