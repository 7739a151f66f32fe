"""Diagonal-covariance Gaussian mixtures trained by EM."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .. import container
from .kmeans import nearest_center, train_kmeans

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture with priors ``(K,)``, means ``(K, d)`` and variances ``(K, d)``."""

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    variance_floor: float = 1e-6
    log_likelihoods: tuple = field(default=(), compare=False)

    def __post_init__(self):
        p = np.asarray(self.priors, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if m.ndim != 2 or v.shape != m.shape or p.shape != (m.shape[0],):
            raise ValueError("GMM shapes disagree")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-8:
            raise ValueError("GMM priors must be positive and sum to one")
        if np.any(v <= 0):
            raise ValueError("GMM variances must be positive")
        for a in (p, m, v):
            a.setflags(write=False)
        object.__setattr__(self, "priors", p)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    def __eq__(self, other):
        if not isinstance(other, GmmModel):
            return NotImplemented
        return (np.array_equal(self.priors, other.priors)
                and np.array_equal(self.means, other.means)
                and np.array_equal(self.variances, other.variances))

    __hash__ = None

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.priors, self.means, self.variances):
            h.update(a.tobytes())
        return h.hexdigest()[:16]

    def log_joint(self, X: np.ndarray) -> np.ndarray:
        """``(n, K)`` array of ``log pi_k + log N(x_i; mu_k, diag var_k)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"descriptor dim {X.shape[1]} does not match GMM dim {self.dim}")
        prec = 1.0 / self.variances
        # sum_j (x_j - mu_j)^2 / var_j expanded into matrix products, after a
        # common translation that keeps the expansion well conditioned
        origin = self.means.mean(axis=0)
        X = X - origin
        mu = self.means - origin
        quad = ((X * X) @ prec.T - 2.0 * X @ (mu * prec).T
                + (mu * mu * prec).sum(axis=1)[None, :])
        log_det = np.log(self.variances).sum(axis=1)
        return (np.log(self.priors)[None, :]
                - 0.5 * (self.dim * _LOG_2PI + log_det[None, :] + np.maximum(quad, 0.0)))

    def log_likelihood(self, X) -> float:
        """Mean per-sample log-likelihood."""
        return float(logsumexp(self.log_joint(X), axis=1).mean())

    def save(self, path, meta=None, pca=None):
        arrays = {"priors": self.priors, "means": self.means, "variances": self.variances}
        if pca is not None:
            arrays["pca_mean"] = pca.mean
            arrays["pca_basis"] = pca.basis
        container.save(path, "gmm", {"variance_floor": self.variance_floor, **(meta or {})},
                       arrays)

    @classmethod
    def load(cls, path, config_hash=None):
        """Return ``(gmm, pca_or_None)``."""
        from .pca import PcaModel

        _, meta, a = container.load(path, "gmm", config_hash)
        gmm = cls(a["priors"], a["means"], a["variances"], meta["variance_floor"])
        pca = PcaModel(a["pca_mean"], a["pca_basis"]) if "pca_mean" in a else None
        return gmm, pca


def posterior(gmm: GmmModel, X) -> np.ndarray:
    """Soft assignments ``q_ik`` of each descriptor to each mode, rows sum to 1."""
    lj = gmm.log_joint(X)
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def _diag_stats(X, resp, floor):
    nk = resp.sum(axis=0)
    nk_safe = np.maximum(nk, 1e-12)
    means = (resp.T @ X) / nk_safe[:, None]
    ex2 = (resp.T @ (X * X)) / nk_safe[:, None]
    variances = np.maximum(ex2 - means * means, floor[None, :])
    priors = nk_safe / nk_safe.sum()
    return priors, means, variances


def train_gmm(X, K: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6) -> GmmModel:
    """Fit a K-mode diagonal GMM by EM, initialized from k-means.

    Variances are floored at ``max(1e-6, 1e-4 * var_j)`` where ``var_j`` is
    the data variance along dimension j. The mean log-likelihood after each
    iteration is kept in ``GmmModel.log_likelihoods``; iteration stops when
    it improves by less than ``tol`` (absolute, per sample).
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if X.ndim != 2 or n < K or K < 1:
        raise ValueError(f"need at least K={K} descriptors, got {n}")
    floor = np.maximum(1e-6, 1e-4 * X.var(axis=0))
    # moments are accumulated on centred data to limit cancellation
    shift = X.mean(axis=0)
    Xc = X - shift
    if K == 1:
        assign = np.zeros(n, dtype=np.int64)
    else:
        cb = train_kmeans(X, K, seed=seed, max_iter=20)
        assign, _ = nearest_center(X, cb.centers)
    resp = np.zeros((n, K))
    resp[np.arange(n), assign] = 1.0
    priors, means, variances = _diag_stats(Xc, resp, floor)
    gmm = GmmModel(priors, means + shift, variances, float(floor.min()))
    history = [gmm.log_likelihood(X)]
    for _ in range(max_iter):
        lj = gmm.log_joint(X)
        resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
        priors, means, variances = _diag_stats(Xc, resp, floor)
        gmm = GmmModel(priors, means + shift, variances, float(floor.min()))
        history.append(gmm.log_likelihood(X))
        if history[-1] - history[-2] < tol:
            break
    return GmmModel(gmm.priors, gmm.means, gmm.variances, gmm.variance_floor, tuple(history))
