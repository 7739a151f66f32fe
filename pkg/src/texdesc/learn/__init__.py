"""Kernels, SVM training, calibration and C selection."""

from .cv import C_GRID, Fold, cross_validate_C, validation_score
from .kernels import (KERNEL_KINDS, KernelMatrix, KernelSpec, chi2_distance_matrix,
                      combine_kernels, fit_spec, kernel, kernel_matrix, select_lambda,
                      self_similarity)
from .platt import PlattParams, platt_apply, platt_fit
from .svm import (OneVsRest, SvmModel, dual_objective, kkt_violation, load_models, save_models,
                  train_one_vs_rest, train_svm)

__all__ = [
    "C_GRID", "Fold", "cross_validate_C", "validation_score", "KERNEL_KINDS", "KernelMatrix",
    "KernelSpec", "chi2_distance_matrix", "combine_kernels", "fit_spec", "kernel",
    "kernel_matrix", "select_lambda", "self_similarity", "PlattParams", "platt_apply",
    "platt_fit", "OneVsRest", "SvmModel", "dual_objective", "kkt_violation", "load_models",
    "save_models", "train_one_vs_rest", "train_svm",
]
