"""Lloyd k-means with k-means++ seeding."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .. import container

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Codebook:
    """``K x d`` cluster centres used for hard quantization."""

    centers: np.ndarray
    trained_on: str = "unknown"
    distortions: tuple = field(default=(), compare=False)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("Codebook needs a non-empty 2-D centre matrix")
        if not np.all(np.isfinite(c)):
            raise ValueError("codebook centres must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return np.array_equal(self.centers, other.centers)

    __hash__ = None

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(self.centers.tobytes()).hexdigest()[:16]

    def save(self, path, meta=None):
        container.save(path, "codebook", {"trained_on": self.trained_on, **(meta or {})},
                       {"centers": self.centers})

    @classmethod
    def load(cls, path, config_hash=None):
        _, meta, arrays = container.load(path, "codebook", config_hash)
        return cls(arrays["centers"], meta.get("trained_on", "unknown"))


def squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``(n, K)`` squared Euclidean distances via the expansion trick."""
    d2 = (X * X).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C * C).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def nearest_center(X: np.ndarray, C: np.ndarray):
    """Index and squared distance of the nearest centre for every row of X.

    Ties go to the lowest index. Near-ties left by the expansion trick are
    re-checked with exact differences.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    idx = np.empty(len(X), dtype=np.int64)
    best = np.empty(len(X))
    for start in range(0, len(X), _CHUNK):
        xs = X[start:start + _CHUNK]
        d2 = squared_distances(xs, C)
        lo = d2.min(axis=1)
        slack = 1e-9 * (1.0 + lo + (xs * xs).sum(axis=1))
        close = d2 <= (lo + slack)[:, None]
        amb = np.flatnonzero(close.sum(axis=1) > 1)
        arg = d2.argmin(axis=1)
        for r in amb:
            cand = np.flatnonzero(close[r])
            exact = ((xs[r] - C[cand]) ** 2).sum(axis=1)
            arg[r] = cand[np.argmin(exact)]
            lo[r] = exact.min()
        idx[start:start + _CHUNK] = arg
        best[start:start + _CHUNK] = lo
    return idx, best


def _cluster_sums(X, assign, K):
    onehot = sparse.csr_matrix((np.ones(len(X)), (assign, np.arange(len(X)))), shape=(K, len(X)))
    return np.asarray(onehot @ X)


def kmeans_plus_plus(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            raise ValueError(f"data has fewer than K={K} distinct points")
        nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def train_kmeans(X, K: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-5,
                 kind: str = "unknown") -> Codebook:
    """Cluster the rows of ``X`` into ``K`` centres.

    Stops when the relative distortion drop falls below ``tol`` or after
    ``max_iter`` Lloyd iterations. A centre that loses all its points is moved
    onto the point currently farthest from its centre, which can only lower
    the distortion. The per-iteration mean distortion is kept in
    ``Codebook.distortions``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("k-means input must be 2-D")
    n = len(X)
    if K < 1 or n < K:
        raise ValueError(f"need at least K={K} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = kmeans_plus_plus(X, K, rng)
    assign, dist = nearest_center(X, centers)
    history = [float(dist.mean())]
    for _ in range(max_iter):
        counts = np.bincount(assign, minlength=K)
        sums = _cluster_sums(X, assign, K)
        new = centers.copy()
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        for k in np.flatnonzero(~nonempty):
            far = int(np.argmax(dist))
            new[k] = X[far]
            dist[far] = 0.0
        centers = new
        assign, dist = nearest_center(X, centers)
        history.append(float(dist.mean()))
        prev, cur = history[-2], history[-1]
        if prev - cur <= tol * max(prev, 1e-300):
            break
    return Codebook(centers, kind, tuple(history))
