"""Dense multi-scale SIFT.

Each descriptor is a 4x4 grid of spatial cells, ``bin_size`` pixels wide,
with an 8-bin gradient orientation histogram per cell (128-D). Windows are
sampled every ``step`` pixels and only fully interior windows are emitted.
Scale ``2**(i/3)`` is obtained by smoothing and resampling the image, keeping
the cell size fixed in resampled pixels.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from ..dataset import ImagePlane
from .base import DescriptorSet

logger = logging.getLogger(__name__)

N_CELLS = 4
N_ORIENT = 8
SIFT_DIM = N_CELLS * N_CELLS * N_ORIENT

# raw histogram norms below this are treated as flat windows
_FLAT_NORM = 1e-6


def scale_factors(n_scales: int) -> list[float]:
    return [2.0 ** (i / 3.0) for i in range(n_scales)]


def _rescale(img: np.ndarray, s: float) -> np.ndarray:
    if s == 1.0:
        return img
    smoothed = ndimage.gaussian_filter(img, sigma=0.5 * np.sqrt(s * s - 1.0), mode="reflect")
    h = max(1, int(round(img.shape[0] / s)))
    w = max(1, int(round(img.shape[1] / s)))
    yy = (np.arange(h) + 0.5) * s - 0.5
    xx = (np.arange(w) + 0.5) * s - 0.5
    grid = np.meshgrid(yy, xx, indexing="ij")
    return ndimage.map_coordinates(smoothed, grid, order=1, mode="nearest")


def orientation_channels(img: np.ndarray) -> np.ndarray:
    """Gradient magnitude split over 8 orientation bins with linear
    interpolation between neighbouring bins. Returns ``(8, h, w)``."""
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    t = theta / (2 * np.pi / N_ORIENT)
    lo = np.floor(t)
    frac = t - lo
    lo = lo.astype(np.int64) % N_ORIENT
    hi = (lo + 1) % N_ORIENT
    w_lo = mag * (1.0 - frac)
    w_hi = mag * frac
    out = np.empty((N_ORIENT,) + img.shape)
    for k in range(N_ORIENT):
        out[k] = np.where(lo == k, w_lo, 0.0) + np.where(hi == k, w_hi, 0.0)
    return out


def _box_sums(chan: np.ndarray, b: int) -> np.ndarray:
    """Sum over every b x b box; result[y, x] covers chan[y:y+b, x:x+b]."""
    c = np.pad(chan, ((0, 0), (1, 0), (1, 0))).cumsum(axis=1).cumsum(axis=2)
    return c[:, b:, b:] - c[:, :-b, b:] - c[:, b:, :-b] + c[:, :-b, :-b]


def normalize_sift(raw: np.ndarray, clamp: float = 0.2) -> np.ndarray:
    """l2 normalize, clamp at ``clamp``, renormalize; flat rows become zero."""
    out = np.zeros_like(raw)
    norms = np.linalg.norm(raw, axis=1)
    ok = norms > _FLAT_NORM
    v = raw[ok] / norms[ok, None]
    v = np.minimum(v, clamp)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    out[ok] = v
    return out


def _sift_one_scale(img: np.ndarray, step: int, bin_size: int, clamp: float):
    win = N_CELLS * bin_size
    h, w = img.shape
    if h < win or w < win:
        return None
    chans = orientation_channels(img)
    boxes = _box_sums(chans, bin_size)
    y0 = np.arange(0, h - win + 1, step)
    x0 = np.arange(0, w - win + 1, step)
    yy, xx = np.meshgrid(y0, x0, indexing="ij")
    yy, xx = yy.ravel(), xx.ravel()
    parts = []
    for cy in range(N_CELLS):
        for cx in range(N_CELLS):
            # (8, n) -> (n, 8)
            parts.append(boxes[:, yy + cy * bin_size, xx + cx * bin_size].T)
    raw = np.concatenate(parts, axis=1)
    desc = normalize_sift(raw, clamp)
    centers = np.stack([xx + win / 2.0 - 0.5, yy + win / 2.0 - 0.5], axis=1)
    return desc, centers


def dense_sift(image: ImagePlane, step: int = 2, bin_size: int = 6, n_scales: int = 4,
               clamp: float = 0.2, root: bool = False) -> DescriptorSet:
    """Dense SIFT at scales ``2**(i/3)``, ``i = 0 .. n_scales-1``.

    Scales whose resampled image cannot hold one window are skipped and the
    result is flagged ``"scales_skipped"``; if no scale fits, the set is empty
    and flagged ``"too_small"``. ``root=True`` applies the RootSIFT mapping
    (l1 normalize then square root) after the usual normalization.
    """
    if step < 1 or bin_size < 1 or n_scales < 1:
        raise ValueError("step, bin_size and n_scales must be positive")
    img = np.asarray(image.values, dtype=np.float64)
    descs, locs, flags = [], [], set()
    for s in scale_factors(n_scales):
        res = _sift_one_scale(_rescale(img, s), step, bin_size, clamp)
        if res is None:
            flags.add("scales_skipped")
            continue
        d, c = res
        descs.append(d)
        loc = np.empty((len(d), 3))
        loc[:, :2] = (c + 0.5) * s - 0.5
        loc[:, 2] = s
        locs.append(loc)
    kind = "rootsift" if root else "sift"
    if not descs:
        logger.warning("image %sx%s too small for a %d-pixel SIFT window",
                       img.shape[1], img.shape[0], N_CELLS * bin_size)
        return DescriptorSet.empty(SIFT_DIM, kind, {"too_small"} | flags)
    d = np.concatenate(descs)
    if root:
        l1 = d.sum(axis=1, keepdims=True)
        d = np.sqrt(np.divide(d, l1, out=np.zeros_like(d), where=l1 > 0))
    return DescriptorSet(d, np.concatenate(locs), kind, frozenset(flags))


def count_windows(height: int, width: int, step: int, bin_size: int) -> int:
    win = N_CELLS * bin_size
    if height < win or width < win:
        return 0
    return ((height - win) // step + 1) * ((width - win) // step + 1)
