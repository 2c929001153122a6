"""Odd-phase Gabor kernels, full-image filtering and receptive-field max pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

DEFAULT_BANDWIDTH = 1.5  # octaves


def f0_from_bandwidth(sigma: float, phi: float = DEFAULT_BANDWIDTH) -> float:
    """Spatial frequency (cycles/pixel) of a kernel with envelope ``sigma`` and
    octave bandwidth ``phi``: ``2*pi*f0*sigma = 2*sqrt(ln 2)*(2^phi+1)/(2^phi-1)``.
    """
    if sigma <= 0 or phi <= 0:
        raise ValueError("sigma and phi must be positive")
    b = 2.0**phi
    return 2.0 * math.sqrt(math.log(2.0)) * (b + 1.0) / (b - 1.0) / (2.0 * math.pi * sigma)


@dataclass(frozen=True, eq=False)
class GaborKernel:
    sigma: float
    theta: float
    f0: float
    half_width: int
    weights: np.ndarray  # (2*half_width+1, 2*half_width+1), indexed [y, x]


def make_kernel(sigma: float, theta: float, phi: float = DEFAULT_BANDWIDTH) -> GaborKernel:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    f0 = f0_from_bandwidth(sigma, phi)
    hw = math.ceil(6.0 * sigma)
    y, x = np.mgrid[-hw:hw + 1, -hw:hw + 1].astype(np.float64)
    u = x * math.cos(theta) + y * math.sin(theta)
    v = y * math.cos(theta) - x * math.sin(theta)
    w = np.exp(-(4.0 * u * u + v * v) / (8.0 * sigma * sigma)) * np.sin(2.0 * math.pi * f0 * u)
    w /= math.sqrt(2.0 * math.pi) * sigma
    # enforce exact point antisymmetry so the DC term vanishes
    w = 0.5 * (w - w[::-1, ::-1])
    w.setflags(write=False)
    return GaborKernel(sigma, theta, f0, hw, w)


def default_orientations(n: int) -> tuple[float, ...]:
    if n < 1:
        raise ValueError("need at least one orientation")
    return tuple(k * math.pi / n for k in range(n))


@dataclass(frozen=True, eq=False)
class GaborBank:
    sigma: float
    bandwidth_phi: float
    orientations: tuple[float, ...]
    kernels: tuple[GaborKernel, ...]


def make_bank(sigma: float, n_orientations: int = 4, phi: float = DEFAULT_BANDWIDTH) -> GaborBank:
    thetas = default_orientations(n_orientations)
    return GaborBank(sigma, phi, thetas, tuple(make_kernel(sigma, t, phi) for t in thetas))


def convolve(img: np.ndarray, k: GaborKernel) -> np.ndarray:
    """Signed correlation of ``img`` with the kernel at every pixel.

    ``out[y, x] = sum_{dy,dx} w[dy, dx] * img[y+dy, x+dx]`` with the image
    extended by mirror reflection. Same shape as ``img``.
    """
    return convolve_many(img, [k])[0]


def convolve_many(img: np.ndarray, kernels) -> np.ndarray:
    """Correlate ``img`` with several same-size kernels; returns ``(K, H, W)``."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    hw = kernels[0].half_width
    side = 2 * hw + 1
    if side > h or side > w:
        raise ValueError(f"kernel of side {side} is larger than the {w}x{h} image")
    padded = np.pad(img, hw, mode="symmetric")
    shape = (padded.shape[0] + side - 1, padded.shape[1] + side - 1)
    fshape = tuple(sfft.next_fast_len(n, real=True) for n in shape)
    spec_img = sfft.rfft2(padded, fshape)
    out = np.empty((len(kernels), h, w))
    for i, k in enumerate(kernels):
        if k.half_width != hw:
            raise ValueError("kernels in one call must share half_width")
        # correlation == convolution with the flipped kernel
        spec_k = sfft.rfft2(k.weights[::-1, ::-1], fshape)
        full = sfft.irfft2(spec_img * spec_k, fshape)
        out[i] = full[side - 1:side - 1 + h, side - 1:side - 1 + w]
    return out


def filter_bank(img: np.ndarray, bank: GaborBank) -> np.ndarray:
    """Response maps of every kernel in ``bank``; shape ``(orientations, H, W)``."""
    return convolve_many(img, bank.kernels)


def pool_rf(rm: np.ndarray, center, radius: float) -> float:
    """Max signed response over pixels within ``radius`` of ``center`` (x, y).

    Pixels outside the map are ignored; returns 0.0 if none are inside.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    h, w = rm.shape
    cx, cy = float(center[0]), float(center[1])
    x0, x1 = max(0, math.ceil(cx - radius)), min(w - 1, math.floor(cx + radius))
    y0, y1 = max(0, math.ceil(cy - radius)), min(h - 1, math.floor(cy + radius))
    if x0 > x1 or y0 > y1:
        return 0.0
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
    if not inside.any():
        return 0.0
    return float(rm[y0:y1 + 1, x0:x1 + 1][inside].max())


def pool_many(stack: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """Vectorized :func:`pool_rf` over a channels-last stack ``(H, W, O)``.

    ``centers`` is ``(N, 2)`` in (x, y); returns ``(N, O)``.
    """
    h, w, o = stack.shape
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    n = len(centers)
    r = math.ceil(radius)
    offs = np.arange(-r, r + 2)
    base = np.floor(centers).astype(np.intp)
    xs = base[:, 0, None] + offs[None, :]  # (N, K)
    ys = base[:, 1, None] + offs[None, :]
    dx2 = (xs - centers[:, 0, None]) ** 2
    dy2 = (ys - centers[:, 1, None]) ** 2
    dx2[(xs < 0) | (xs >= w)] = np.inf
    dy2[(ys < 0) | (ys >= h)] = np.inf
    inside = dy2[:, :, None] + dx2[:, None, :] <= radius * radius  # (N, K, K)
    flat = ys[:, :, None] * w + xs[:, None, :]
    counts = inside.reshape(n, -1).sum(axis=1)
    idx = flat[inside]
    out = np.zeros((n, o))
    if idx.size == 0:
        return out
    vals = stack.reshape(-1, o)[idx]
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    nonempty = counts > 0
    out[nonempty] = np.maximum.reduceat(vals, starts[nonempty], axis=0)
    return out
