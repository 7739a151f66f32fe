"""Visual vocabularies and global encodings."""

from .encoding import (EncodedVector, Recipe, bovw_counts, encode_bovw, encode_ifv, encode_vlad,
                       fisher_statistics, l2_normalize, signed_sqrt, vlad_residuals)
from .gmm import GmmModel, posterior, train_gmm
from .kmeans import Codebook, nearest_center, train_kmeans
from .pca import PcaModel, apply_pca, train_pca

__all__ = [
    "EncodedVector", "Recipe", "bovw_counts", "encode_bovw", "encode_ifv", "encode_vlad",
    "fisher_statistics", "l2_normalize", "signed_sqrt", "vlad_residuals", "GmmModel",
    "posterior", "train_gmm", "Codebook", "nearest_center", "train_kmeans", "PcaModel",
    "apply_pca", "train_pca",
]
