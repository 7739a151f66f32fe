"""Raw image patches as local descriptors."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..dataset import ImagePlane, ImageRgb
from .base import DescriptorSet

_FLAT_NORM = 1e-12


def normalize_patches(raw: np.ndarray) -> np.ndarray:
    """Subtract each row's mean and l2 normalize; flat rows map to zero."""
    centered = raw - raw.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1, keepdims=True)
    return np.divide(centered, norms, out=np.zeros_like(centered), where=norms > _FLAT_NORM)


def raw_patches(image: ImagePlane | ImageRgb, size: int = 3, step: int = 1) -> DescriptorSet:
    """Every ``size x size`` patch on a ``step`` grid, flattened row-major.

    Gray images give ``size**2`` dimensions; RGB images interleave the
    channels per pixel (27-D for 3x3).
    """
    if size not in (3, 7):
        raise ValueError(f"patch size must be 3 or 7, got {size}")
    img = np.asarray(image.values, dtype=np.float64)
    rgb = img.ndim == 3
    if img.shape[0] < size or img.shape[1] < size:
        raise ValueError(f"image {img.shape[:2]} smaller than a {size}x{size} patch")
    if rgb:
        win = sliding_window_view(img, (size, size, 3))[:, :, 0]
    else:
        win = sliding_window_view(img, (size, size))
    win = win[::step, ::step]
    ny, nx = win.shape[:2]
    raw = win.reshape(ny * nx, -1)
    ys, xs = np.meshgrid(np.arange(ny) * step, np.arange(nx) * step, indexing="ij")
    half = (size - 1) / 2.0
    loc = np.stack([xs.ravel() + half, ys.ravel() + half, np.ones(ny * nx)], axis=1)
    kind = f"patch{size}" + ("rgb" if rgb else "")
    return DescriptorSet(normalize_patches(raw), loc, kind)
