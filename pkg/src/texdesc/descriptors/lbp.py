"""Local binary patterns.

Two flavours:

* :func:`lbp_uniform` -- rotation-invariant uniform codes (10 bins per
  radius for 8 neighbours), pooled over the whole image and several radii.
* :func:`lbp_vq_descriptors` -- uniform (non rotation-invariant) codes,
  59 bins, histogrammed per 8x8 cell to act as local descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..dataset import ImagePlane
from .base import DescriptorSet


@dataclass(frozen=True)
class LbpHistogram:
    bins: np.ndarray
    radii: tuple

    def __post_init__(self):
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=np.float64))
        object.__setattr__(self, "radii", tuple(self.radii))


def _transitions(code: int, p: int) -> int:
    bits = [(code >> k) & 1 for k in range(p)]
    return sum(bits[k] != bits[(k + 1) % p] for k in range(p))


@lru_cache(maxsize=None)
def riu2_table(p: int = 8) -> np.ndarray:
    """Map each p-bit code to its rotation-invariant uniform bin (0..p+1)."""
    table = np.empty(1 << p, dtype=np.int64)
    for code in range(1 << p):
        table[code] = bin(code).count("1") if _transitions(code, p) <= 2 else p + 1
    return table


@lru_cache(maxsize=None)
def u2_table(p: int = 8) -> np.ndarray:
    """Map each p-bit code to its uniform-pattern bin; non-uniform codes go
    to the last bin. 59 bins for p = 8."""
    table = np.empty(1 << p, dtype=np.int64)
    uniform = [c for c in range(1 << p) if _transitions(c, p) <= 2]
    index = {c: k for k, c in enumerate(uniform)}
    for code in range(1 << p):
        table[code] = index.get(code, len(uniform))
    return table


def neighbor_offsets(radius: float, p: int = 8) -> np.ndarray:
    """``(p, 2)`` array of (dy, dx) sample offsets, counter-clockwise from +x."""
    k = np.arange(p)
    dy = -radius * np.sin(2 * np.pi * k / p)
    dx = radius * np.cos(2 * np.pi * k / p)
    # snap tiny trig residue so on-grid neighbours are sampled exactly
    return np.round(np.stack([dy, dx], axis=1), 12)


def _sample(img, rows, cols, dy, dx):
    """Bilinear sample of ``img`` at (rows + dy, cols + dx)."""
    y0 = int(np.floor(dy))
    x0 = int(np.floor(dx))
    ty, tx = dy - y0, dx - x0
    a = img[rows + y0, cols + x0]
    if ty == 0 and tx == 0:
        return a
    b = img[rows + y0, cols + x0 + 1] if tx else a
    c = img[rows + y0 + 1, cols + x0] if ty else a
    d = img[rows + y0 + 1, cols + x0 + 1] if (tx and ty) else (b if tx else c)
    # difference form keeps flat neighbourhoods exactly flat
    top = a + tx * (b - a)
    bot = c + tx * (d - c)
    return top + ty * (bot - top)


def lbp_codes(img: np.ndarray, radius: float, p: int = 8) -> np.ndarray:
    """Raw p-bit LBP codes for every pixel whose circle lies inside the image.

    Neighbour k sets bit k when its (interpolated) value is ``>=`` the centre.
    Returns an array of shape ``(h - 2m, w - 2m)`` where ``m = ceil(radius)``.
    """
    img = np.asarray(img, dtype=np.float64)
    m = int(np.ceil(radius))
    h, w = img.shape
    if h <= 2 * m or w <= 2 * m:
        return np.zeros((0, 0), dtype=np.int64)
    rows, cols = np.meshgrid(np.arange(m, h - m), np.arange(m, w - m), indexing="ij")
    center = img[rows, cols]
    codes = np.zeros(center.shape, dtype=np.int64)
    for k, (dy, dx) in enumerate(neighbor_offsets(radius, p)):
        nb = _sample(img, rows, cols, dy, dx)
        codes |= (nb >= center).astype(np.int64) << k
    return codes


def lbp_uniform(image: ImagePlane, radii=(1, 2, 3), n_neighbors: int = 8) -> LbpHistogram:
    """Rotation-invariant uniform LBP histogram pooled over several radii.

    Each radius contributes ``n_neighbors + 2`` bins, normalized to sum to
    ``1 / len(radii)`` so the concatenation sums to one.
    """
    radii = tuple(int(r) for r in radii)
    if not radii or min(radii) < 1:
        raise ValueError("radii must be a non-empty list of integers >= 1")
    table = riu2_table(n_neighbors)
    nbins = n_neighbors + 2
    parts = []
    for r in radii:
        codes = lbp_codes(image.values, r, n_neighbors)
        hist = np.bincount(table[codes.ravel()], minlength=nbins).astype(np.float64)
        total = hist.sum()
        parts.append(hist / total if total else hist)
    bins = np.concatenate(parts)
    total = bins.sum()
    return LbpHistogram(bins / total if total else bins, radii)


def lbp_vq_descriptors(image: ImagePlane, cell: int = 8, n_neighbors: int = 8) -> DescriptorSet:
    """One l1-normalized 59-bin uniform-LBP histogram per non-overlapping cell.

    Codes use radius 1 on a symmetrically padded image, so every pixel of a
    cell has a code.
    """
    img = np.asarray(image.values, dtype=np.float64)
    h, w = img.shape
    if h < cell or w < cell:
        raise ValueError(f"image {img.shape} smaller than a {cell}x{cell} cell")
    codes = lbp_codes(np.pad(img, 1, mode="symmetric"), 1, n_neighbors)
    table = u2_table(n_neighbors)
    nbins = int(table.max()) + 1
    mapped = table[codes]
    ny, nx = h // cell, w // cell
    desc = np.empty((ny * nx, nbins))
    loc = np.empty((ny * nx, 3))
    for cy in range(ny):
        for cx in range(nx):
            block = mapped[cy * cell:(cy + 1) * cell, cx * cell:(cx + 1) * cell]
            hist = np.bincount(block.ravel(), minlength=nbins).astype(np.float64)
            desc[cy * nx + cx] = hist / hist.sum()
            loc[cy * nx + cx] = (cx * cell + (cell - 1) / 2.0, cy * cell + (cell - 1) / 2.0, 1.0)
    return DescriptorSet(desc, loc, "lbpvq")
