"""C-SVM on a precomputed kernel, solved by SMO with second-order pair selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import container
from .kernels import KernelMatrix, KernelSpec

_TAU = 1e-12
MAX_PAIR_UPDATES = 10_000_000


def _gram(K) -> np.ndarray:
    return np.asarray(K.values if isinstance(K, KernelMatrix) else K, dtype=np.float64)


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be a vector of +1/-1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present in the labels")
    return y


@dataclass(frozen=True)
class SvmModel:
    """Decision function ``f(x) = sum_i coef_i K(x_i, x) + bias``.

    ``coef`` holds ``alpha_i * y_i`` for every training item; items with
    ``alpha_i > 0`` are the support vectors.
    """

    coef: np.ndarray
    bias: float
    C: float
    spec: KernelSpec = KernelSpec()
    recipe: str = ""
    iterations: int = 0
    kkt_violation: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=np.float64)
        if c.ndim != 1 or np.any(np.abs(c) > self.C * (1 + 1e-12)):
            raise ValueError("dual coefficients must satisfy |alpha| <= C")
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def alpha(self) -> np.ndarray:
        return np.abs(self.coef)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coef != 0)

    def decision(self, K_rows) -> np.ndarray:
        """Scores for kernel rows of shape ``(m, n_train)``."""
        K = np.atleast_2d(_gram(K_rows))
        if K.shape[1] != len(self.coef):
            raise ValueError(f"kernel has {K.shape[1]} columns, model has {len(self.coef)} items")
        return K @ self.coef + self.bias


def dual_objective(alpha, y, K) -> float:
    """``sum(alpha) - 0.5 alpha' Q alpha`` with ``Q_ij = y_i y_j K_ij``."""
    K = _gram(K)
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def kkt_violation(model: SvmModel, y, K) -> float:
    """Largest violation of the per-item optimality conditions of ``model``."""
    y = np.asarray(y, dtype=np.float64)
    margin = y * model.decision(_gram(K))
    a = model.alpha
    tol = 1e-12 * model.C
    viol = np.where(a <= tol, np.maximum(1.0 - margin, 0.0),
                    np.where(a >= model.C - tol, np.maximum(margin - 1.0, 0.0),
                             np.abs(margin - 1.0)))
    return float(viol.max()) if len(viol) else 0.0


def _rho(G, y, alpha, C):
    yG = y * G
    at_up = alpha >= C
    at_low = alpha <= 0
    free = ~(at_up | at_low)
    if np.any(free):
        return float(yG[free].mean())
    ub_mask = (at_up & (y < 0)) | (at_low & (y > 0))
    lb_mask = (at_up & (y > 0)) | (at_low & (y < 0))
    ub = yG[ub_mask].min() if np.any(ub_mask) else np.inf
    lb = yG[lb_mask].max() if np.any(lb_mask) else -np.inf
    return float((ub + lb) / 2)


def train_svm(K_train, labels, C: float, tol: float = 1e-3,
              max_updates: int = MAX_PAIR_UPDATES, recipe: str = "") -> SvmModel:
    """Solve the C-SVM dual on a precomputed kernel.

    Pairs are chosen by the maximal-violating first index and a
    second-order gain for the second; each update solves the two-variable
    subproblem exactly, so the dual objective never decreases. Iteration
    stops once the violating-pair gap ``m - M`` drops below ``tol``.
    """
    K = _gram(K_train)
    y = _check_binary(labels)
    n = len(y)
    if K.shape != (n, n):
        raise ValueError(f"kernel shape {K.shape} does not match {n} labels")
    if not C > 0:
        raise ValueError("C must be positive")
    spec = K_train.spec if isinstance(K_train, KernelMatrix) else KernelSpec()
    Q = K * np.outer(y, y)
    diag = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    gap = np.inf
    it = 0
    while it < max_updates:
        minus_yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not np.any(up) or not np.any(low):
            gap = 0.0
            break
        masked = np.where(up, minus_yG, -np.inf)
        i = int(np.argmax(masked))
        m = masked[i]
        M = np.where(low, minus_yG, np.inf).min()
        gap = m - M
        if gap < tol:
            break
        cand = low & (minus_yG < m)
        b = m - minus_yG
        a = diag[i] + diag - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, _TAU)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))
        it += 1
        ai_old, aj_old = alpha[i], alpha[j]
        Qi, Qj = Q[i], Q[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] + 2 * Qi[j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = max(diag[i] + diag[j] - 2 * Qi[j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0
                alpha[j] = total
        G += Qi * (alpha[i] - ai_old) + Qj * (alpha[j] - aj_old)
    rho = _rho(G, y, alpha, C)
    return SvmModel(alpha * y, -rho, float(C), spec, recipe, it, float(max(gap, 0.0)))


@dataclass(frozen=True)
class OneVsRest:
    """One binary SVM per class; prediction is the argmax of raw scores."""

    models: tuple
    classes: np.ndarray

    def decision(self, K_rows) -> np.ndarray:
        return np.stack([m.decision(K_rows) for m in self.models], axis=1)

    def predict(self, K_rows) -> np.ndarray:
        return self.classes[np.argmax(self.decision(K_rows), axis=1)]


def train_one_vs_rest(K_train, labels, C: float, tol: float = 1e-3) -> OneVsRest:
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    models = tuple(train_svm(K_train, np.where(labels == c, 1.0, -1.0), C, tol)
                   for c in classes)
    return OneVsRest(models, classes)


def save_models(path, models, meta=None):
    """Store a list of SvmModels sharing one kernel spec in a container file."""
    arrays = {}
    info = []
    for q, m in enumerate(models):
        arrays[f"coef{q}"] = m.coef
        info.append({"bias": m.bias, "C": m.C, "recipe": m.recipe})
    spec = models[0].spec.as_dict() if models else KernelSpec().as_dict()
    container.save(path, "svm", {"models": info, "spec": spec, **(meta or {})}, arrays)


def load_models(path, config_hash=None):
    _, meta, arrays = container.load(path, "svm", config_hash)
    spec = KernelSpec(**meta["spec"])
    models = [SvmModel(arrays[f"coef{q}"], d["bias"], d["C"], spec, d["recipe"])
              for q, d in enumerate(meta["models"])]
    return models, meta
