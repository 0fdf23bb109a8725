"""
ARD squared-exponential kernel and its input derivatives.

    k(a, b) = sf2 * exp(-0.5 * sum_j (a_j - b_j)**2 / l_j**2)

Hyperparameters live on log scale so the optimizer can work unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelParams",
    "kernel_eval",
    "kernel_matrix",
    "kernel_diag",
    "kernel_grad_x1",
    "scaled_sqdist",
]


@dataclass(frozen=True)
class KernelParams:
    """Log-scale RBF hyperparameters.

    Attributes
    ----------
    log_signal_variance : float
        log(sf2).
    log_lengthscales : ndarray, shape (D,)
        log(l_j), one per input dimension.
    """

    log_signal_variance: float
    log_lengthscales: np.ndarray

    def __post_init__(self):
        ll = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=float)).copy()
        if ll.ndim != 1 or ll.size == 0:
            raise ValueError("log_lengthscales must be a non-empty 1-D vector")
        lsv = float(self.log_signal_variance)
        with np.errstate(over="ignore", under="ignore"):
            el, es = np.exp(ll), np.exp(lsv)
        if not (np.all(np.isfinite(el)) and np.all(el > 0)):
            raise ValueError("lengthscales must be finite and strictly positive")
        if not (np.isfinite(es) and es > 0):
            raise ValueError("signal variance must be finite and strictly positive")
        ll.setflags(write=False)
        object.__setattr__(self, "log_lengthscales", ll)
        object.__setattr__(self, "log_signal_variance", lsv)

    @classmethod
    def from_natural(cls, signal_variance, lengthscales, dim=None):
        """Build from sf2 and lengthscale(s); a scalar lengthscale is tied
        across ``dim`` dimensions (isotropic RBF)."""
        ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if dim is not None and ls.size == 1:
            ls = np.full(dim, ls[0])
        return cls(np.log(signal_variance), np.log(ls))

    @property
    def dim(self) -> int:
        return self.log_lengthscales.size

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.log_lengthscales)

    def __eq__(self, other):
        if not isinstance(other, KernelParams):
            return NotImplemented
        return (self.log_signal_variance == other.log_signal_variance
                and np.array_equal(self.log_lengthscales, other.log_lengthscales))

    __hash__ = None


def _as_point(params, v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size != params.dim:
        raise ValueError(
            f"argument '{name}' has shape {v.shape}, expected ({params.dim},)")
    return v


def _as_matrix(params, X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and params.dim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != params.dim:
        raise ValueError(
            f"argument '{name}' has shape {X.shape}, expected (n, {params.dim})")
    return X


def kernel_eval(params: KernelParams, a, b) -> float:
    """k(a, b) for two single points."""
    a = _as_point(params, a, "a")
    b = _as_point(params, b, "b")
    r = (a - b) / params.lengthscales
    return params.signal_variance * float(np.exp(-0.5 * np.dot(r, r)))


def scaled_sqdist(X, X2, lengthscales):
    """sum_j (x_j - x2_j)**2 / l_j**2 for all pairs.

    Accumulates one dimension at a time from direct differences rather than
    the expanded |a|^2 + |b|^2 - 2ab form: the result is exactly symmetric
    when X2 is X, exactly zero for coincident points, and never negative.
    """
    out = np.zeros((X.shape[0], X2.shape[0]))
    for j, ell in enumerate(lengthscales):
        diff = (X[:, j, None] - X2[None, :, j]) / ell
        out += diff * diff
    return out


def kernel_matrix(params: KernelParams, X, X2=None) -> np.ndarray:
    """N x M matrix of k(X_i, X2_j); X2 defaults to X."""
    X = _as_matrix(params, X, "X")
    X2 = X if X2 is None else _as_matrix(params, X2, "X2")
    return params.signal_variance * np.exp(
        -0.5 * scaled_sqdist(X, X2, params.lengthscales))


def kernel_diag(params: KernelParams, X) -> np.ndarray:
    X = _as_matrix(params, X, "X")
    return np.full(X.shape[0], params.signal_variance)


def kernel_grad_x1(params: KernelParams, a, b) -> np.ndarray:
    """Gradient of k(a, b) with respect to the first argument a."""
    a = _as_point(params, a, "a")
    b = _as_point(params, b, "b")
    return -(a - b) / params.lengthscales ** 2 * kernel_eval(params, a, b)
