"""
Exact GP regression: Cholesky fit, predictive mean and latent variance.

    mean(x*) = k*^T alpha,            alpha = (K + s2 I)^{-1} y
    var(x*)  = k** - k*^T (K + s2 I)^{-1} k*

All quadratic forms go through triangular solves against the Cholesky
factor; no explicit inverse is ever formed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .kernel import KernelParams, kernel_matrix

__all__ = [
    "NoiseModel",
    "TrainedModel",
    "Prediction",
    "PredictionBatch",
    "CholeskyError",
    "jittered_cholesky",
    "fit",
    "predict_mean",
    "predict_var_gp",
    "predict_batch",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "egpr-model"
MODEL_VERSION = 1

JITTER_START = 1e-10
JITTER_STOP = 1e-4


class CholeskyError(LinAlgError):
    """Cholesky factorization failed even after jitter escalation."""

    def __init__(self, msg, jitter=None):
        super().__init__(msg)
        self.jitter = jitter


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NoiseModel:
    """Output noise variance and (optional) known input-noise covariance.

    ``input_covariance=None`` means noise-free inputs.
    """

    output_variance: float
    input_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        s2 = float(self.output_variance)
        if not np.isfinite(s2) or s2 < 0:
            raise ValueError(f"output_variance must be finite and >= 0, got {s2}")
        object.__setattr__(self, "output_variance", s2)
        S = self.input_covariance
        if S is None:
            return
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"input_covariance must be square, got shape {S.shape}")
        if not np.all(np.isfinite(S)):
            raise ValueError("input_covariance has non-finite entries")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(S))):
            raise ValueError("input_covariance is not symmetric")
        d = S.shape[0]
        floor = -1e-10 * max(np.trace(S) / d, 0.0)
        if np.linalg.eigvalsh(S)[0] < floor - 1e-300:
            raise ValueError("input_covariance is not positive semi-definite")
        object.__setattr__(self, "input_covariance", _frozen(S))

    @classmethod
    def diagonal(cls, output_variance, input_variances):
        return cls(output_variance, np.diag(np.atleast_1d(input_variances).astype(float)))

    def input_cov(self, dim):
        """D x D input covariance, zeros when inputs are noise-free."""
        if self.input_covariance is None:
            return np.zeros((dim, dim))
        if self.input_covariance.shape[0] != dim:
            raise ValueError(
                f"input_covariance is {self.input_covariance.shape[0]}-dimensional, "
                f"model inputs are {dim}-dimensional")
        return np.array(self.input_covariance)

    def with_input_covariance(self, S):
        return NoiseModel(self.output_variance, S)

    def __eq__(self, other):
        if not isinstance(other, NoiseModel):
            return NotImplemented
        a, b = self.input_covariance, other.input_covariance
        same_cov = (a is None and b is None) or (
            a is not None and b is not None and np.array_equal(a, b))
        return self.output_variance == other.output_variance and same_cov

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrainedModel:
    X_train: np.ndarray
    y_train: np.ndarray
    params: KernelParams
    noise: NoiseModel
    chol_factor: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self):
        return self.X_train.shape[1]

    @property
    def n(self):
        return self.X_train.shape[0]

    def regularized_kernel(self):
        """K + (s2 + jitter) I, the matrix chol_factor factorizes."""
        K = kernel_matrix(self.params, self.X_train)
        K[np.diag_indices_from(K)] += self.noise.output_variance + self.jitter
        return K


@dataclass(frozen=True)
class Prediction:
    mean: float
    var_gp: float
    var_egp: Optional[float] = None
    grad_norm: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    """Column-oriented predictions for M test points."""

    mean: np.ndarray
    var_gp: np.ndarray
    var_egp: Optional[np.ndarray] = None
    grad_norm: Optional[np.ndarray] = None

    def __len__(self):
        return self.mean.shape[0]

    def __getitem__(self, i):
        opt = lambda a: None if a is None else float(a[i])
        return Prediction(float(self.mean[i]), float(self.var_gp[i]),
                          opt(self.var_egp), opt(self.grad_norm))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def std_gp(self):
        return np.sqrt(self.var_gp)

    @property
    def std_egp(self):
        return None if self.var_egp is None else np.sqrt(self.var_egp)

    @classmethod
    def from_predictions(cls, preds):
        preds = list(preds)
        col = lambda name: np.array([getattr(p, name) for p in preds], dtype=float)
        has_egp = all(p.var_egp is not None for p in preds)
        has_grad = all(p.grad_norm is not None for p in preds)
        return cls(col("mean"), col("var_gp"),
                   col("var_egp") if has_egp else None,
                   col("grad_norm") if has_grad else None)


def jittered_cholesky(A, scale=None):
    """Lower Cholesky factor of A, adding diagonal jitter if needed.

    Jitter starts at 1e-10 * scale and grows x10 up to 1e-4 * scale, where
    scale defaults to mean(diag(A)). Returns (L, jitter).
    """
    try:
        return cholesky(A, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    if scale is None:
        scale = float(np.mean(np.diag(A)))
    jitter = JITTER_START * scale
    while True:
        try:
            L = cholesky(A + jitter * np.eye(A.shape[0]), lower=True, check_finite=False)
            return L, jitter
        except LinAlgError:
            if jitter >= JITTER_STOP * scale * (1 - 1e-12):
                raise CholeskyError(
                    f"Cholesky failed; final jitter tried {jitter:.3e}", jitter)
            jitter *= 10.0


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(a)))[0]
        raise ValueError(f"{name} has a non-finite entry at index {tuple(bad)}")


def _as_inputs(X, dim=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if dim in (None, 1) else X[None, :]
    if X.ndim != 2:
        raise ValueError(f"inputs must be 2-D, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"inputs have {X.shape[1]} columns, model expects {dim}")
    return X


def fit(X, y, params: KernelParams, noise: NoiseModel) -> TrainedModel:
    """Factor K + s2 I once and solve for alpha."""
    X = _as_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one training point")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[1] != params.dim:
        raise ValueError(f"X has {X.shape[1]} columns, kernel expects {params.dim}")
    _check_finite("X", X)
    _check_finite("y", y)
    noise.input_cov(X.shape[1])  # dimension check only

    A = kernel_matrix(params, X)
    A[np.diag_indices_from(A)] += noise.output_variance
    L, jitter = jittered_cholesky(A)
    alpha = cho_solve((L, True), y, check_finite=False)
    return TrainedModel(_frozen(X), _frozen(y), params, noise,
                        _frozen(L), _frozen(alpha), float(jitter))


def quad_rows(L, Ks):
    """k_m^T (L L^T)^{-1} k_m for every row k_m of Ks.

    One triangular solve per row: a multi-column solve blocks differently
    depending on the column count, and the per-row results must not depend
    on which other rows share the batch.
    """
    out = np.empty(Ks.shape[0])
    for m, k in enumerate(Ks):
        v = solve_triangular(L, k, lower=True, check_finite=False)
        out[m] = v @ v
    return out


def _latent(model, Xs):
    Ks = kernel_matrix(model.params, Xs, model.X_train)
    mean = (Ks * model.alpha).sum(axis=1)
    var = model.params.signal_variance - quad_rows(model.chol_factor, Ks)
    return Ks, mean, np.maximum(var, 0.0)


def _point(model, x_star):
    x = np.asarray(x_star, dtype=float).ravel()
    if x.size != model.dim:
        raise ValueError(f"x_star has length {x.size}, model expects {model.dim}")
    return x[None, :]


def predict_mean(model: TrainedModel, x_star) -> float:
    return float(_latent(model, _point(model, x_star))[1][0])


def predict_var_gp(model: TrainedModel, x_star) -> float:
    return float(_latent(model, _point(model, x_star))[2][0])


def predict_batch(model: TrainedModel, X_star, noise_correction=False,
                  cache=None) -> PredictionBatch:
    """Predict at M points.

    With ``noise_correction`` the input-noise corrected variance is added;
    ``cache`` may pass a prebuilt CorrectionCache, otherwise one is built.
    """
    Xs = _as_inputs(X_star, model.dim)
    for i, row in enumerate(Xs):
        if not np.all(np.isfinite(row)):
            raise ValueError(f"row {i}: non-finite test input")
    Ks, mean, var_gp = _latent(model, Xs)
    if not noise_correction:
        return PredictionBatch(mean, var_gp)

    from .egp import build_correction, _egp_from_kstar

    if cache is None:
        cache = build_correction(model)
    var_egp, grads = _egp_from_kstar(model, cache, Xs, Ks)
    return PredictionBatch(mean, var_gp, var_egp, np.linalg.norm(grads, axis=1))


def model_to_dict(model: TrainedModel) -> dict:
    S = model.noise.input_covariance
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": {
            "type": "ard-rbf",
            "log_signal_variance": model.params.log_signal_variance,
            "log_lengthscales": model.params.log_lengthscales.tolist(),
        },
        "noise": {
            "output_variance": model.noise.output_variance,
            "input_covariance": None if S is None else S.tolist(),
        },
        "X_train": model.X_train.tolist(),
        "y_train": model.y_train.tolist(),
        "alpha": model.alpha.tolist(),
    }


def model_from_dict(d: dict) -> TrainedModel:
    """Rebuild a model; the Cholesky factor is recomputed, never stored."""
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not an {MODEL_FORMAT} document")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    kern = d["kernel"]
    if kern.get("type") != "ard-rbf":
        raise ValueError(f"unsupported kernel type {kern.get('type')!r}")
    params = KernelParams(kern["log_signal_variance"], np.array(kern["log_lengthscales"]))
    S = d["noise"]["input_covariance"]
    noise = NoiseModel(d["noise"]["output_variance"], None if S is None else np.array(S))
    X = np.array(d["X_train"], dtype=float).reshape(-1, params.dim)
    model = fit(X, np.array(d["y_train"]), params, noise)
    stored = np.array(d["alpha"], dtype=float)
    scale = max(1.0, float(np.max(np.abs(model.alpha))))
    if stored.shape != model.alpha.shape or np.max(np.abs(stored - model.alpha)) > 1e-8 * scale:
        raise ValueError("stored alpha disagrees with the refitted model")
    return model


def save_model(model: TrainedModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
