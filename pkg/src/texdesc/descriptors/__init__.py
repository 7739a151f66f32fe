"""Local descriptor extraction."""

from .base import DescriptorSet, read_descriptors, write_descriptors
from .filterbank import (FilterBank, build_lm_bank, build_mr8_bank, filter_responses,
                         single_kernel_bank)
from .lbp import LbpHistogram, lbp_codes, lbp_uniform, lbp_vq_descriptors
from .patches import raw_patches
from .sift import dense_sift

DESCRIPTOR_KINDS = ("sift", "lm", "mr8", "patch3", "patch7", "patch3rgb", "lbpvq")


def needs_rgb(kind: str) -> bool:
    return kind.endswith("rgb")


def extract(image, kind: str, **params) -> DescriptorSet:
    """Dispatch to an extractor by descriptor kind name.

    ``params`` are forwarded (``step``, ``bin_size``, ``n_scales`` for SIFT;
    ``step`` for filter banks and patches; ``cell`` for LBP-VQ).
    """
    if kind == "sift":
        return dense_sift(image, **params)
    if kind in ("lm", "mr8"):
        bank = _BANKS.get(kind)
        if bank is None:
            bank = _BANKS[kind] = build_lm_bank() if kind == "lm" else build_mr8_bank()
        return filter_responses(image, bank, **params)
    if kind in ("patch3", "patch7", "patch3rgb"):
        return raw_patches(image, size=int(kind[5]), **params)
    if kind == "lbpvq":
        return lbp_vq_descriptors(image, **params)
    raise ValueError(f"unknown descriptor kind {kind!r}; choose from {DESCRIPTOR_KINDS}")


_BANKS: dict = {}

__all__ = [
    "DescriptorSet", "read_descriptors", "write_descriptors", "FilterBank", "build_lm_bank",
    "build_mr8_bank", "filter_responses", "single_kernel_bank", "LbpHistogram", "lbp_codes",
    "lbp_uniform", "lbp_vq_descriptors", "raw_patches", "dense_sift", "extract",
    "DESCRIPTOR_KINDS", "needs_rgb",
]
