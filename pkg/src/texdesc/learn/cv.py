"""Choosing the SVM regularization constant on held-out data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .svm import train_one_vs_rest, train_svm

C_GRID = (0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class Fold:
    """Kernel blocks for one train/validation split.

    ``K_train`` is train x train and ``K_val`` is validation x train.
    Labels are +1/-1 for a binary problem, or class ids for one-vs-rest.
    """

    K_train: np.ndarray
    y_train: np.ndarray
    K_val: np.ndarray
    y_val: np.ndarray


def _is_binary(y) -> bool:
    return bool(np.all(np.isin(np.unique(y), (-1, 1))))


def validation_score(fold: Fold, C: float, metric: str = "accuracy") -> float:
    if len(fold.y_val) == 0:
        raise ValueError("validation subset is empty")
    if _is_binary(fold.y_train):
        scores = train_svm(fold.K_train, fold.y_train, C).decision(fold.K_val)
        if metric == "ap":
            from ..evaluation import average_precision

            return average_precision(scores, np.asarray(fold.y_val) > 0)
        pred = np.where(scores >= 0, 1, -1)
    else:
        pred = train_one_vs_rest(fold.K_train, fold.y_train, C).predict(fold.K_val)
    return float(np.mean(pred == np.asarray(fold.y_val)))


def cross_validate_C(folds, grid=C_GRID, metric: str = "accuracy"):
    """Grid value with the best mean validation metric; ties go to the smallest C.

    Returns ``(best_C, {C: mean_score})``.
    """
    folds = list(folds)
    grid = sorted(float(c) for c in grid)
    if not grid:
        raise ValueError("C grid is empty")
    table = {}
    best_C, best = grid[0], -np.inf
    for C in grid:
        score = float(np.mean([validation_score(f, C, metric) for f in folds]))
        table[C] = score
        if score > best:
            best_C, best = C, score
    return best_C, table
