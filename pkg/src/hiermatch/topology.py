"""Geometry of the layer stack: receptive fields, elements and layers.

Every layer holds 19 elements in a hexagonal patch; every element holds 19
receptive fields (RFs) in the same patch at a smaller spacing. Layer ``m``
(1-based) is the base layer scaled by ``sqrt(2)**(m-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)
N_UNITS = 19  # RFs per element and elements per layer
CENTER = 0  # index of the central unit in hex_offsets order


@dataclass(frozen=True)
class StackConfig:
    num_layers: int = 6
    base_sigma: float = 3.0
    orientations: int = 4
    element_spacing_factor: float = 0.35
    bandwidth: float = 1.5

    def __post_init__(self):
        if self.num_layers < 2:
            raise ValueError("need at least 2 layers")
        if not self.base_sigma > 0:
            raise ValueError("base_sigma must be positive")
        if self.orientations < 1:
            raise ValueError("need at least one orientation")
        if not self.element_spacing_factor > 0:
            raise ValueError("element_spacing_factor must be positive")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


def hex_offsets(spacing: float) -> np.ndarray:
    """The 19 points of a two-ring hexagonal patch, shape ``(19, 2)``.

    Order: center, the inner ring of 6 at ``spacing``, then the outer ring of
    12 (alternating ``2*spacing`` and ``sqrt(3)*spacing``), each ring
    counterclockwise from angle 0.
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts = [(0.0, 0.0)]
    for k in range(6):
        a = math.radians(60 * k)
        pts.append((spacing * math.cos(a), spacing * math.sin(a)))
    for k in range(12):
        a = math.radians(30 * k)
        rad = 2.0 * spacing if k % 2 == 0 else math.sqrt(3.0) * spacing
        pts.append((rad * math.cos(a), rad * math.sin(a)))
    return np.array(pts)


_UNIT_HEX = hex_offsets(1.0)


@dataclass(frozen=True, eq=False)
class LayerGeometry:
    layer: int
    sigma: float
    rf_radius: float
    rf_offsets: np.ndarray  # (19, 2) relative to an element center
    element_offsets: np.ndarray  # (19, 2) relative to the mask center

    @property
    def rf_spacing(self) -> float:
        return 2.0 * self.rf_radius

    @property
    def element_radius(self) -> float:
        """Radius of one element's footprint (outer RF centers plus their radius)."""
        return 2.0 * self.rf_spacing + self.rf_radius

    @property
    def mask_radius(self) -> float:
        """Radius of the whole layer's footprint."""
        return float(np.hypot(*self.element_offsets.T).max()) + self.element_radius

    def rf_centers(self, mask_center) -> np.ndarray:
        """Absolute RF centers for every element, shape ``(19, 19, 2)`` as [element, rf]."""
        c = np.asarray(mask_center, dtype=np.float64)
        return c + self.element_offsets[:, None, :] + self.rf_offsets[None, :, :]


def layer_sigma(cfg: StackConfig, m: int) -> float:
    return cfg.base_sigma * SQRT2 ** (m - 1)


def layer_geometry(cfg: StackConfig, m: int) -> LayerGeometry:
    if not 1 <= m <= cfg.num_layers:
        raise ValueError(f"layer {m} out of range 1..{cfg.num_layers}")
    sigma = layer_sigma(cfg, m)
    rf_radius = SQRT2 * sigma
    rf_offsets = _UNIT_HEX * (2.0 * rf_radius)
    element_offsets = _UNIT_HEX * (cfg.element_spacing_factor * 2.0 * rf_radius * 2.0)
    rf_offsets.setflags(write=False)
    element_offsets.setflags(write=False)
    return LayerGeometry(m, sigma, rf_radius, rf_offsets, element_offsets)


def stack_geometry(cfg: StackConfig) -> list[LayerGeometry]:
    return [layer_geometry(cfg, m) for m in range(1, cfg.num_layers + 1)]


def absolute_rf_centers(g: LayerGeometry, mask_center, element: int) -> np.ndarray:
    """RF centers of one element (1-based index), in RF order."""
    if not 1 <= element <= N_UNITS:
        raise ValueError(f"element {element} out of range 1..{N_UNITS}")
    return np.asarray(mask_center, dtype=np.float64) + g.element_offsets[element - 1] + g.rf_offsets


def geometry_rows(cfg: StackConfig):
    """Yield ``(layer, kind, index, dx, dy, radius)`` rows describing every offset."""
    for g in stack_geometry(cfg):
        for i, (dx, dy) in enumerate(g.element_offsets, start=1):
            yield g.layer, "element", i, float(dx), float(dy), g.element_radius
        for j, (dx, dy) in enumerate(g.rf_offsets, start=1):
            yield g.layer, "rf", j, float(dx), float(dy), g.rf_radius
