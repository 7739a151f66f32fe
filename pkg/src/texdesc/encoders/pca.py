"""PCA decorrelation of local descriptors."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..descriptors.base import DescriptorSet


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Projection ``(x - mean) @ basis`` onto ``basis.shape[1]`` components."""

    mean: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or mean.shape != (basis.shape[0],):
            raise ValueError("PCA mean/basis shapes disagree")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(basis.shape[1]), atol=1e-6):
            raise ValueError("PCA basis columns must be orthonormal")
        mean.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    def __eq__(self, other):
        if not isinstance(other, PcaModel):
            return NotImplemented
        return (np.array_equal(self.mean, other.mean)
                and np.array_equal(self.basis, other.basis))

    __hash__ = None

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(self.mean.tobytes() + self.basis.tobytes()).hexdigest()[:16]

    def project(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ValueError(f"descriptor dim {X.shape[1]} does not match PCA dim {self.input_dim}")
        return (X - self.mean) @ self.basis


def train_pca(X, n_components: int) -> PcaModel:
    """Principal directions of ``X`` sorted by decreasing variance.

    Each basis column is signed so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("PCA needs at least 2 samples")
    d = X.shape[1]
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must be in [1, {d}], got {n_components}")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False).reshape(d, d)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:n_components]
    basis = evecs[:, order]
    pivot = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivot, np.arange(n_components)])
    signs[signs == 0] = 1.0
    return PcaModel(mean, basis * signs)


def apply_pca(pca: PcaModel, ds: DescriptorSet) -> DescriptorSet:
    return ds.with_descriptors(pca.project(ds.descriptors) if len(ds) else
                               np.zeros((0, pca.output_dim)))
