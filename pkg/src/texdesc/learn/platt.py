"""Sigmoid calibration of classifier scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PlattParams:
    """``p(y=1 | s) = 1 / (1 + exp(A s + B))``; informative fits have ``A < 0``."""

    A: float
    B: float

    @property
    def informative(self) -> bool:
        return self.A < 0


def platt_apply(params: PlattParams, scores):
    """Calibrated probabilities, evaluated without overflow."""
    s = np.asarray(scores, dtype=np.float64)
    f = params.A * s + params.B
    out = np.where(f >= 0, np.exp(-np.abs(f)) / (1.0 + np.exp(-np.abs(f))),
                   1.0 / (1.0 + np.exp(-np.abs(f))))
    return float(out) if out.ndim == 0 else out


def _nll(A, B, s, t):
    f = A * s + B
    # sum of t f + log(1 + exp(-f)), stable for either sign of f
    return float(np.sum(np.where(f >= 0, t * f + np.log1p(np.exp(-f)),
                                 (t - 1) * f + np.log1p(np.exp(f)))))


def platt_fit(scores, labels, max_iter: int = 100, min_step: float = 1e-10,
              sigma: float = 1e-12, eps: float = 1e-10) -> PlattParams:
    """Maximum likelihood sigmoid fit with smoothed targets.

    Positives get target ``(N+ + 1) / (N+ + 2)`` and negatives
    ``1 / (N- + 2)``. Newton steps on ``(A, B)`` with a tiny ridge on the
    Hessian and backtracking line search.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present for calibration")
    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    fval = _nll(A, B, s, t)
    for _ in range(max_iter):
        f = A * s + B
        p = np.where(f >= 0, np.exp(-f) / (1.0 + np.exp(-f)), 1.0 / (1.0 + np.exp(f)))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(s * s * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(s * d2)
        d1 = t - p
        g1 = np.sum(s * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = _nll(nA, nB, s, t)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return PlattParams(float(A), float(B))
