"""Exact GP regression with input-noise error propagation (eGP)."""

from .kernel import KernelParams, kernel_eval, kernel_matrix, kernel_grad_x1
from .gp import NoiseModel, TrainedModel, Prediction, PredictionBatch, fit
from .egp import CorrectionCache, build_correction, predictive_mean_gradient

__all__ = [
    "KernelParams",
    "kernel_eval",
    "kernel_matrix",
    "kernel_grad_x1",
    "NoiseModel",
    "TrainedModel",
    "Prediction",
    "PredictionBatch",
    "fit",
    "CorrectionCache",
    "build_correction",
    "predictive_mean_gradient",
]

__version__ = "0.1.0"
