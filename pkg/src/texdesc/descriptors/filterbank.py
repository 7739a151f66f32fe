"""Leung-Malik and MR8 filter banks and dense filter responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ..dataset import ImagePlane
from .base import DescriptorSet

SUPPORT = 49
N_ORIENT = 6


@dataclass(frozen=True)
class FilterBank:
    """A list of 2-D kernels plus a grouping that defines the response vector.

    With ``combine="identity"`` every kernel is one response; with
    ``combine="max"`` each group of kernels (one filter at several
    orientations) contributes the largest absolute response of its members.
    Single-member groups keep their sign.
    """

    kernels: tuple
    groups: tuple
    combine: str
    zero_mean: tuple
    name: str

    @property
    def response_dim(self) -> int:
        return len(self.groups)

    @property
    def max_support(self) -> int:
        return max(max(k.shape) for k in self.kernels)

    def __len__(self):
        return len(self.kernels)


def _grid(support=SUPPORT):
    h = (support - 1) // 2
    cols, rows = np.meshgrid(np.arange(support), np.arange(support))
    # x to the right, y upwards
    return (cols - h).astype(np.float64), (h - rows).astype(np.float64)


def _gauss1d(sigma, x, order):
    var = sigma * sigma
    g = np.exp(-x * x / (2 * var)) / np.sqrt(2 * np.pi * var)
    if order == 1:
        g = -g * x / var
    elif order == 2:
        g = g * (x * x - var) / (var * var)
    return g


def _zero_mean_l1(f):
    f = f - f.mean()
    return f / np.abs(f).sum()


def _l1(f):
    return f / np.abs(f).sum()


def _oriented(scale, order, angle, elongation=3.0, support=SUPPORT):
    x, y = _grid(support)
    c, s = np.cos(angle), np.sin(angle)
    xr = c * x - s * y
    yr = s * x + c * y
    f = _gauss1d(elongation * scale, xr, 0) * _gauss1d(scale, yr, order)
    return _zero_mean_l1(f)


def _gaussian(sigma, support=SUPPORT):
    x, y = _grid(support)
    return _l1(np.exp(-(x * x + y * y) / (2 * sigma * sigma)))


def _log(sigma, support=SUPPORT):
    x, y = _grid(support)
    r2 = x * x + y * y
    f = (r2 - 2 * sigma * sigma) / sigma ** 4 * np.exp(-r2 / (2 * sigma * sigma))
    return _zero_mean_l1(f)


def build_lm_bank() -> FilterBank:
    """48 filters: first and second derivatives of an elongated Gaussian
    (3 scales x 6 orientations each), 8 LoG and 4 Gaussians."""
    scales = np.sqrt(2.0) ** np.arange(1, 4)
    kernels, zero_mean = [], []
    for order in (1, 2):
        for sc in scales:
            for o in range(N_ORIENT):
                kernels.append(_oriented(sc, order, np.pi * o / N_ORIENT))
                zero_mean.append(True)
    iso = np.sqrt(2.0) ** np.arange(1, 5)
    for sc in iso:
        kernels.append(_log(sc))
        zero_mean.append(True)
    for sc in iso:
        kernels.append(_log(3 * sc))
        zero_mean.append(True)
    for sc in iso:
        kernels.append(_gaussian(sc))
        zero_mean.append(False)
    groups = tuple((i,) for i in range(len(kernels)))
    return FilterBank(tuple(kernels), groups, "identity", tuple(zero_mean), "lm")


def build_mr8_bank() -> FilterBank:
    """38 filters: edge and bar at scales (1, 2, 4) x 6 orientations, plus a
    Gaussian and a LoG at sigma 10. Max over orientations gives 8 responses."""
    kernels, groups, zero_mean = [], [], []
    for order in (1, 2):
        for sc in (1.0, 2.0, 4.0):
            start = len(kernels)
            for o in range(N_ORIENT):
                kernels.append(_oriented(sc, order, np.pi * o / N_ORIENT))
                zero_mean.append(True)
            groups.append(tuple(range(start, start + N_ORIENT)))
    kernels.append(_gaussian(10.0))
    zero_mean.append(False)
    groups.append((len(kernels) - 1,))
    kernels.append(_log(10.0))
    zero_mean.append(True)
    groups.append((len(kernels) - 1,))
    return FilterBank(tuple(kernels), tuple(groups), "max", tuple(zero_mean), "mr8")


def single_kernel_bank(kernel: np.ndarray, name="custom") -> FilterBank:
    kernel = np.asarray(kernel, dtype=np.float64)
    return FilterBank((kernel,), ((0,),), "identity", (abs(kernel.sum()) < 1e-6,), name)


def correlate_symmetric(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate with ``kernel`` (odd-sized), symmetric padding, same-size output."""
    ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(img, ((ry, ry), (rx, rx)), mode="symmetric")
    return fftconvolve(padded, kernel[::-1, ::-1], mode="valid")


def filter_responses(image: ImagePlane, bank: FilterBank, step: int = 1) -> DescriptorSet:
    """Filter-bank responses sampled every ``step`` pixels.

    The image is first standardized to zero mean and unit variance; a
    zero-variance image is filtered as is and the result flagged
    ``"degenerate"``.
    """
    img = np.asarray(image.values, dtype=np.float64)
    if min(img.shape) < bank.max_support:
        raise ValueError(f"image {img.shape} smaller than the {bank.max_support}-pixel kernels")
    flags = set()
    std = img.std()
    if std > 1e-12:
        img = (img - img.mean()) / std
    else:
        flags.add("degenerate")
    rows = np.arange(0, img.shape[0], step)
    cols = np.arange(0, img.shape[1], step)
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    responses = np.empty((len(bank.kernels), yy.size))
    for k, kern in enumerate(bank.kernels):
        responses[k] = correlate_symmetric(img, kern)[yy, xx].ravel()
    out = np.empty((yy.size, bank.response_dim))
    for g, members in enumerate(bank.groups):
        if len(members) == 1:
            out[:, g] = responses[members[0]]
        else:
            # edge filters flip sign under a half turn, so compare magnitudes
            out[:, g] = np.abs(responses[list(members)]).max(axis=0)
    loc = np.stack([xx.ravel(), yy.ravel(), np.ones(yy.size)], axis=1)
    return DescriptorSet(out, loc, bank.name, frozenset(flags))
