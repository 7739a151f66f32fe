"""Ranking and classification metrics, and the multi-split experiment runner."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


def average_precision(scores, relevance) -> float:
    """Mean over relevant items of the precision at that item's rank.

    Items are sorted by descending score; ties keep the input order.
    """
    s = np.asarray(scores, dtype=np.float64)
    r = np.asarray(relevance).astype(bool)
    if s.shape != r.shape or s.ndim != 1:
        raise ValueError("scores and relevance must be equal-length vectors")
    if not r.any():
        raise UndefinedMetricError("average precision needs at least one relevant item")
    order = np.argsort(-s, kind="stable")
    hits = r[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, len(ranks) + 1) / ranks
    return float(precision.mean())


def mean_ap(aps) -> float:
    aps = np.asarray(list(aps), dtype=np.float64)
    if aps.size == 0:
        raise UndefinedMetricError("mean AP of no classes")
    return float(aps.mean())


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows indexed by truth and columns by prediction."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(c < 0) or not np.all(c == np.round(c)):
            raise ValueError("confusion counts must be nonnegative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_labels(cls, truth, pred, n_classes: int | None = None):
        truth = np.asarray(truth, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        n = n_classes if n_classes is not None else int(max(truth.max(), pred.max())) + 1
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (truth, pred), 1)
        return cls(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.counts.sum()
    if total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / total)


def mean_class_accuracy(cm: ConfusionMatrix) -> float:
    rows = cm.counts.sum(axis=1)
    if rows.sum() == 0:
        raise UndefinedMetricError("mean class accuracy of an empty confusion matrix")
    present = rows > 0
    return float(np.mean(np.diag(cm.counts)[present] / rows[present]))


@dataclass
class ExperimentReport:
    recipe: dict
    kernel: dict
    per_split: list
    mean: float
    std: float
    mean_map: float | None = None
    std_map: float | None = None
    wall_time_s: float | None = None
    config: dict | None = None

    def to_dict(self):
        return {"recipe": self.recipe, "kernel": self.kernel, "per_split": self.per_split,
                "mean": self.mean, "std": self.std, "mean_map": self.mean_map,
                "std_map": self.std_map, "wall_time_s": self.wall_time_s,
                "config": self.config}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def evaluate_split(features, labels, split, kernel_spec, C_grid, train_on_val: bool = True,
                   weights=None):
    """Train on one split and score the test items.

    ``features`` is an ``(n, D)`` matrix (or a list of them, combined by
    kernel averaging with optional ``weights``) and ``labels`` are integer
    class ids. C is chosen on
    the validation items; the final model is refit on train plus
    validation when ``train_on_val`` is set.
    """
    from .learn import Fold, combine_kernels, cross_validate_C, fit_spec, train_one_vs_rest

    split.check_disjoint()
    labels = np.asarray(labels)
    channels = features if isinstance(features, (list, tuple)) else [features]
    specs = kernel_spec if isinstance(kernel_spec, (list, tuple)) else [kernel_spec] * len(channels)
    tr, va, te = (np.asarray(split.train), np.asarray(split.val), np.asarray(split.test))

    def blocks(rows, cols):
        fitted = [fit_spec(np.asarray(F)[cols], s) for F, s in zip(channels, specs)]
        K_cc = combine_kernels(fitted, [np.asarray(F)[cols] for F in channels], weights)
        K_rc = combine_kernels(fitted, [np.asarray(F)[cols] for F in channels], weights,
                               other_sets=[np.asarray(F)[rows] for F in channels])
        return K_cc.values, K_rc.values, fitted

    K_tt, K_vt, _ = blocks(va, tr)
    best_C, table = cross_validate_C([Fold(K_tt, labels[tr], K_vt, labels[va])], C_grid)
    fit_idx = np.concatenate([tr, va]) if train_on_val else tr
    K_ff, K_ef, fitted = blocks(te, fit_idx)
    clf = train_one_vs_rest(K_ff, labels[fit_idx], best_C)
    scores = clf.decision(K_ef)
    pred = clf.classes[np.argmax(scores, axis=1)]
    classes = clf.classes
    truth = np.searchsorted(classes, labels[te])
    cm = ConfusionMatrix.from_labels(truth, np.searchsorted(classes, pred), len(classes))
    aps = [average_precision(scores[:, c], labels[te] == classes[c])
           for c in range(len(classes)) if np.any(labels[te] == classes[c])]
    return {"accuracy": accuracy(cm), "mean_class_accuracy": mean_class_accuracy(cm),
            "map": mean_ap(aps), "C": best_C,
            "val_scores": {repr(c): s for c, s in table.items()},
            "lambda": [s.lam for s in fitted]}


def run_experiment(features, labels, splits, kernel_spec, C_grid=(0.1, 1.0, 10.0, 100.0),
                   recipe: dict | None = None, config: dict | None = None,
                   train_on_val: bool = True, weights=None) -> ExperimentReport:
    """Per-split accuracy and mAP with mean and sample standard deviation."""
    start = time.perf_counter()
    per_split = []
    for s_idx, split in enumerate(splits):
        res = evaluate_split(features, labels, split, kernel_spec, C_grid, train_on_val, weights)
        res["split"] = s_idx + 1
        per_split.append(res)
    mean, std = _mean_std([r["accuracy"] for r in per_split])
    mmap, smap = _mean_std([r["map"] for r in per_split])
    specs = kernel_spec if isinstance(kernel_spec, (list, tuple)) else [kernel_spec]
    return ExperimentReport(recipe or {}, {"specs": [s.as_dict() for s in specs]}, per_split,
                            mean, std, mmap, smap, time.perf_counter() - start, config)
