"""Kernels between global image vectors.

The chi-squared style kernels are sign-extended: each coordinate
contributes ``sign(x) sign(y) k(|x|, |y|)``, which keeps the kernel
positive semi-definite on signed inputs such as Fisher vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateDataError

KERNEL_KINDS = ("linear", "hellinger", "add-chi2", "exp-chi2", "rbf")
_ALIASES = {"chi2": "add-chi2", "expchi2": "exp-chi2", "additive-chi2": "add-chi2"}
_ROW_CHUNK = 64


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    lam: float | None = None
    normalize: bool = False

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.lam is not None and not self.lam > 0:
            raise ValueError("kernel lambda must be positive")

    @property
    def needs_lambda(self) -> bool:
        return self.kind in ("exp-chi2", "rbf")

    def with_lambda(self, lam: float) -> "KernelSpec":
        return KernelSpec(self.kind, float(lam), self.normalize)

    def as_dict(self):
        return {"kind": self.kind, "lam": self.lam, "normalize": self.normalize}


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    spec: KernelSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ValueError("kernel matrix must be a finite 2-D array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _as_matrix(X) -> np.ndarray:
    if hasattr(X, "values") and not isinstance(X, np.ndarray):
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


def _chi2_terms(x, Y):
    """Sign-extended ``s |x||y| / (|x| + |y|)`` per coordinate, 0/0 := 0."""
    ax, aY = np.abs(x), np.abs(Y)
    den = ax + aY
    num = ax * aY
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return np.sign(x) * np.sign(Y) * t


def _rowwise(X, Y, fn):
    out = np.empty((len(X), len(Y)))
    for i in range(len(X)):
        out[i] = fn(X[i], Y)
    return out


def chi2_distance_matrix(X, Y) -> np.ndarray:
    """Sign-extended chi-squared distance ``sum (x - y)^2 / (x + y)``.

    On signed data each coordinate contributes
    ``|x| + |y| - 4 s |x||y| / (|x| + |y|)``, the squared distance between
    the additive chi-squared feature maps, so ``exp(-lam * D)`` stays PSD.
    """
    X, Y = _as_matrix(X), _as_matrix(Y)
    absY = np.abs(Y).sum(axis=1)
    return _rowwise(X, Y, lambda x, Yc: np.maximum(
        np.abs(x).sum() + absY - 4.0 * _chi2_terms(x, Yc).sum(axis=1), 0.0))


def sq_euclidean_matrix(X, Y) -> np.ndarray:
    X, Y = _as_matrix(X), _as_matrix(Y)
    return _rowwise(X, Y, lambda x, Yc: ((Yc - x) ** 2).sum(axis=1))


def _raw_matrix(X, Y, spec: KernelSpec) -> np.ndarray:
    kind = spec.kind
    if spec.needs_lambda and spec.lam is None:
        raise ValueError(f"{kind} kernel needs lambda; call select_lambda first")
    if kind == "linear":
        return _rowwise(X, Y, lambda x, Yc: Yc @ x)
    if kind == "hellinger":
        sX = np.sign(X) * np.sqrt(np.abs(X))
        sY = np.sign(Y) * np.sqrt(np.abs(Y))
        return _rowwise(sX, sY, lambda x, Yc: Yc @ x)
    if kind == "add-chi2":
        return _rowwise(X, Y, lambda x, Yc: _chi2_terms(x, Yc).sum(axis=1))
    if kind == "exp-chi2":
        return np.exp(-spec.lam * chi2_distance_matrix(X, Y))
    return np.exp(-spec.lam * sq_euclidean_matrix(X, Y))


def self_similarity(X, spec: KernelSpec) -> np.ndarray:
    """``K(x, x)`` for every row, without normalization."""
    X = _as_matrix(X)
    if spec.kind in ("exp-chi2", "rbf"):
        return np.ones(len(X))
    if spec.kind == "linear":
        return (X * X).sum(axis=1)
    if spec.kind == "hellinger":
        return np.abs(X).sum(axis=1)
    return 0.5 * np.abs(X).sum(axis=1)


def _normalize(K, dx, dy):
    scale = np.sqrt(np.outer(dx, dy))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(scale > 0, K / np.where(scale > 0, scale, 1.0), 0.0)


def kernel_matrix(X, Y=None, spec: KernelSpec = KernelSpec()) -> KernelMatrix:
    """Kernel values between the rows of X and Y (Y defaults to X).

    With ``spec.normalize`` entries are divided by ``sqrt(K(x,x) K(y,y))``;
    rows with zero self-similarity give zero entries. The Gram matrix of X
    with itself is exactly symmetric.
    """
    X = _as_matrix(X)
    same = Y is None
    Y = X if same else _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"feature dims differ: {X.shape[1]} vs {Y.shape[1]}")
    K = _raw_matrix(X, Y, spec)
    if spec.normalize:
        K = _normalize(K, self_similarity(X, spec), self_similarity(Y, spec))
    if same:
        K = 0.5 * (K + K.T)
    return KernelMatrix(K, spec)


def kernel(x, y, spec: KernelSpec) -> float:
    x, y = np.asarray(_as_matrix(x)[0]), np.asarray(_as_matrix(y)[0])
    if x.shape != y.shape:
        raise ValueError(f"feature dims differ: {x.shape} vs {y.shape}")
    return float(kernel_matrix(x, y, spec).values[0, 0])


def select_lambda(X, spec: KernelSpec) -> float:
    """One over the mean pairwise distance on the training set, self pairs included.

    The distance is chi-squared for ``exp-chi2`` and squared Euclidean for
    ``rbf``.
    """
    X = _as_matrix(X)
    if len(X) == 0:
        raise ValueError("select_lambda needs at least one training vector")
    if spec.kind == "exp-chi2":
        D = chi2_distance_matrix(X, X)
    elif spec.kind == "rbf":
        D = sq_euclidean_matrix(X, X)
    else:
        raise ValueError(f"{spec.kind} kernel has no lambda")
    mean = D.mean()
    if not mean > 0:
        raise DegenerateDataError("mean training distance is zero; all vectors identical")
    return float(1.0 / mean)


def fit_spec(X, spec: KernelSpec) -> KernelSpec:
    """Fill in lambda from the training data when the kind needs one."""
    if spec.needs_lambda and spec.lam is None:
        return spec.with_lambda(select_lambda(X, spec))
    return spec


def combine_kernels(specs, feature_sets, weights=None, other_sets=None) -> KernelMatrix:
    """Weighted average of per-feature kernels, each scaled to unit mean self-similarity.

    ``feature_sets`` are the training features of each channel; the scale
    of channel c is the mean of ``K_c(x, x)`` over them, so the combined
    Gram matrix has unit mean diagonal. With ``other_sets`` the result is
    the rectangular kernel between those rows and the training rows, using
    the training scales.
    """
    specs = list(specs)
    feature_sets = [_as_matrix(F) for F in feature_sets]
    if len(specs) != len(feature_sets) or not specs:
        raise ValueError("need one spec per feature set")
    if len({len(F) for F in feature_sets}) != 1:
        raise ValueError("feature sets have different numbers of rows")
    w = np.full(len(specs), 1.0 / len(specs)) if weights is None else np.asarray(weights, float)
    if w.shape != (len(specs),) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative, one per feature set")
    w = w / w.sum()
    if other_sets is not None:
        other_sets = [_as_matrix(F) for F in other_sets]
        if len(other_sets) != len(specs) or len({len(F) for F in other_sets}) != 1:
            raise ValueError("other feature sets do not line up")
    total = None
    for c, (spec, F) in enumerate(zip(specs, feature_sets)):
        K = kernel_matrix(F if other_sets is None else other_sets[c],
                          None if other_sets is None else F, spec).values
        diag = self_similarity(F, spec)
        if spec.normalize:
            diag = (diag > 0).astype(np.float64)
        scale = diag.mean()
        if not scale > 0:
            raise DegenerateDataError(f"feature set {c} has zero self-similarity")
        part = w[c] * K / scale
        total = part if total is None else total + part
    return KernelMatrix(total, specs[0] if len(specs) == 1 else KernelSpec("linear"))
