"""Pooling local descriptors into one global vector per image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..descriptors.base import DescriptorSet
from .gmm import GmmModel, posterior
from .kmeans import Codebook, nearest_center
from .pca import PcaModel


@dataclass(frozen=True)
class Recipe:
    descriptor: str
    encoding: str
    vocabulary: str

    def as_dict(self):
        return {"descriptor": self.descriptor, "encoding": self.encoding,
                "vocabulary": self.vocabulary}


@dataclass(frozen=True)
class EncodedVector:
    """A global image statistic with the recipe that produced it.

    ``empty`` marks vectors built from no descriptors, or whose raw
    statistics were all zero; those keep the documented fallback value.
    """

    values: np.ndarray
    recipe: Recipe
    empty: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("encoded vector must be a finite 1-D array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def signed_sqrt(z: np.ndarray) -> np.ndarray:
    return np.sign(z) * np.sqrt(np.abs(z))


def l2_normalize(z: np.ndarray):
    """Return ``(z / ||z||, was_zero)``; the zero vector is returned as is."""
    norm = np.linalg.norm(z)
    if norm == 0.0:
        return np.zeros_like(z), True
    return z / norm, False


def _check_dim(ds: DescriptorSet, dim: int):
    if ds.dim != dim:
        raise ValueError(f"descriptor dim {ds.dim} does not match vocabulary dim {dim}")


def bovw_counts(X: np.ndarray, codebook: Codebook) -> np.ndarray:
    idx, _ = nearest_center(X, codebook.centers)
    return np.bincount(idx, minlength=codebook.K).astype(np.float64)


def encode_bovw(ds: DescriptorSet, codebook: Codebook) -> EncodedVector:
    """l1-normalized histogram of nearest-centre assignments.

    An empty descriptor set gives the uniform histogram, flagged empty.
    """
    _check_dim(ds, codebook.dim)
    recipe = Recipe(ds.kind, "bovw", codebook.digest())
    if len(ds) == 0:
        return EncodedVector(np.full(codebook.K, 1.0 / codebook.K), recipe, empty=True)
    counts = bovw_counts(ds.descriptors, codebook)
    return EncodedVector(counts / counts.sum(), recipe)


def vlad_residuals(X: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Per-centre sums of ``x - c_k`` over hard-assigned descriptors, ``(K*d,)``."""
    C = codebook.centers
    idx, _ = nearest_center(X, C)
    out = np.zeros_like(C)
    for k in range(codebook.K):
        members = X[idx == k]
        if len(members):
            out[k] = (members - C[k]).sum(axis=0)
    return out.ravel()


def encode_vlad(ds: DescriptorSet, codebook: Codebook) -> EncodedVector:
    """VLAD residuals followed by signed square root and l2 normalization.

    Zero residuals (or no descriptors) give the zero vector, flagged empty.
    """
    _check_dim(ds, codebook.dim)
    recipe = Recipe(ds.kind, "vlad", codebook.digest())
    if len(ds) == 0:
        return EncodedVector(np.zeros(codebook.K * codebook.dim), recipe, empty=True)
    raw = vlad_residuals(ds.descriptors, codebook)
    values, zero = l2_normalize(signed_sqrt(raw))
    return EncodedVector(values, recipe, empty=zero)


def fisher_statistics(X: np.ndarray, gmm: GmmModel, posterior_floor: float = 0.0) -> np.ndarray:
    """Raw first and second order Fisher statistics, stacked as
    ``(u_1, v_1, ..., u_K, v_K)`` with length ``2 K d``.

    ``u_jk = sum_i q_ik z_ijk / (n sqrt(pi_k))`` and
    ``v_jk = sum_i q_ik (z_ijk**2 - 1) / (n sqrt(2 pi_k))`` where
    ``z_ijk = (x_ij - mu_jk) / sigma_jk``. Posteriors below
    ``posterior_floor`` are dropped.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    q = posterior(gmm, X)
    if posterior_floor > 0:
        q = np.where(q < posterior_floor, 0.0, q)
    sigma = np.sqrt(gmm.variances)
    K, d = gmm.K, gmm.dim
    out = np.zeros((K, 2, d))
    for k in range(K):
        qk = q[:, k]
        active = qk > 0
        if not np.any(active):
            continue
        z = (X[active] - gmm.means[k]) / sigma[k]
        w = qk[active]
        out[k, 0] = w @ z / (n * np.sqrt(gmm.priors[k]))
        out[k, 1] = w @ (z * z - 1.0) / (n * np.sqrt(2.0 * gmm.priors[k]))
    return out.ravel()


def encode_ifv(ds: DescriptorSet, gmm: GmmModel, pca: PcaModel | None = None,
               posterior_floor: float = 0.0) -> EncodedVector:
    """Improved Fisher vector: Fisher statistics, signed square root, l2.

    With ``pca`` the descriptors are projected first. No descriptors give
    the zero vector, flagged empty.
    """
    X = ds.descriptors
    if pca is not None:
        if ds.dim != pca.input_dim:
            raise ValueError(f"descriptor dim {ds.dim} does not match PCA input {pca.input_dim}")
        X = pca.project(X) if len(X) else np.zeros((0, pca.output_dim))
    if X.shape[1] != gmm.dim:
        raise ValueError(f"descriptor dim {X.shape[1]} does not match GMM dim {gmm.dim}")
    vocab = gmm.digest() + (f"+pca{pca.output_dim}:{pca.digest()}" if pca is not None else "")
    recipe = Recipe(ds.kind, "ifv", vocab)
    if len(X) == 0:
        return EncodedVector(np.zeros(2 * gmm.K * gmm.dim), recipe, empty=True)
    raw = fisher_statistics(X, gmm, posterior_floor)
    values, zero = l2_normalize(signed_sqrt(raw))
    return EncodedVector(values, recipe, empty=zero)
