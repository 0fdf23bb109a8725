"""
Input-noise error propagation for a fitted GP.

With known input noise eps_x ~ N(0, Sx) a first-order expansion of the
predictive mean gives

    var_egp(x*) = T** + k** - k*^T (K + s2 I + T)^{-1} k*
    T_ij = d_i^T Sx d_j,   T** = d*^T Sx d*

where d_i is the gradient of the predictive mean at x_i. The mean is
linear in alpha, so d_i only needs the kernel's input derivative. The
correction is applied at prediction time only; hyperparameters are not
refit with T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from .gp import TrainedModel, _as_inputs, _point, jittered_cholesky, quad_rows
from .kernel import kernel_matrix

__all__ = [
    "CorrectionCache",
    "predictive_mean_gradient",
    "mean_gradients",
    "build_correction",
    "predict_var_egp",
]


@dataclass(frozen=True, eq=False)
class CorrectionCache:
    """Training-side quantities for the corrected variance.

    Rebuild whenever the model or the input covariance changes.
    """

    train_jacobian: np.ndarray
    T_train: np.ndarray
    chol_corrected: np.ndarray
    input_cov: np.ndarray
    jitter: float = 0.0
    diagonal: bool = False


def mean_gradients(model: TrainedModel, X_star, Ks=None) -> np.ndarray:
    """M x D matrix; row m is the gradient of the predictive mean at X_star[m]."""
    Xs = _as_inputs(X_star, model.dim)
    if Ks is None:
        Ks = kernel_matrix(model.params, Xs, model.X_train)
    W = Ks * model.alpha[None, :]
    inv_l2 = 1.0 / model.params.lengthscales ** 2
    G = np.empty((Xs.shape[0], model.dim))
    for j in range(model.dim):
        diff = Xs[:, j, None] - model.X_train[None, :, j]
        G[:, j] = -inv_l2[j] * np.sum(diff * W, axis=1)
    return G


def predictive_mean_gradient(model: TrainedModel, x) -> np.ndarray:
    return mean_gradients(model, _point(model, x))[0]


def build_correction(model: TrainedModel, input_cov=None, diagonal=False) -> CorrectionCache:
    """Jacobian at the training inputs, T = J Sx J^T and chol(K + s2 I + T).

    ``input_cov`` overrides the model's noise model. ``diagonal=True`` keeps
    only diag(T), the per-point variant; the default is the full matrix.
    """
    S = model.noise.input_cov(model.dim) if input_cov is None else np.array(input_cov, dtype=float)
    if S.shape != (model.dim, model.dim):
        raise ValueError(f"input covariance has shape {S.shape}, expected "
                         f"({model.dim}, {model.dim})")
    J = mean_gradients(model, model.X_train)
    T = J @ S @ J.T
    T = 0.5 * (T + T.T)
    if diagonal:
        T = np.diag(np.diag(T))
    A = model.regularized_kernel() + T
    L, jitter = jittered_cholesky(A)
    for a in (J, T, L, S):
        a.setflags(write=False)
    return CorrectionCache(J, T, L, S, float(jitter), bool(diagonal))


def _egp_from_kstar(model, cache, Xs, Ks):
    G = mean_gradients(model, Xs, Ks)
    t_ss = np.einsum("ij,jk,ik->i", G, cache.input_cov, G)
    var = t_ss + model.params.signal_variance - quad_rows(cache.chol_corrected, Ks)
    return np.maximum(var, 0.0), G


def predict_var_egp(model: TrainedModel, cache: CorrectionCache, x_star) -> float:
    Xs = _point(model, x_star)
    Ks = kernel_matrix(model.params, Xs, model.X_train)
    return float(_egp_from_kstar(model, cache, Xs, Ks)[0][0])
