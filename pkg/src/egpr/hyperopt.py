"""
Type-II maximum likelihood for the ARD-RBF GP.

    NLL = 0.5 y^T Ky^{-1} y + 0.5 log|Ky| + (N/2) log(2 pi),   Ky = K + s2 I

Parameters are optimized on log scale, ordered
[log l_1, ..., log l_D, log sf2, log s2], from several random starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .kernel import KernelParams, kernel_matrix
from .optimize import minimize_bfgs

__all__ = [
    "OptimizationConfig",
    "FitReport",
    "HyperoptError",
    "nll",
    "nll_gradient",
    "nll_and_gradient",
    "pack",
    "unpack",
    "default_init_ranges",
    "fit_hyperparameters",
]

log = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)

# starting points drawn per restart before it is declared failed
START_DRAWS = 10


class HyperoptError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizationConfig:
    """Settings for the multi-restart likelihood fit.

    ``init_ranges`` is a (D+2) x 2 array of [low, high] intervals for the
    log-parameter starting points; None derives them from the data scale.
    """

    restarts: int = 10
    max_iters: int = 200
    gtol: float = 1e-5
    rng_seed: int = 0
    init_ranges: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.restarts) < 1:
            raise ValueError("restarts must be >= 1")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.gtol > 0:
            raise ValueError("gtol must be > 0")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        if self.init_ranges is not None:
            r = np.asarray(self.init_ranges, dtype=float)
            if r.ndim != 2 or r.shape[1] != 2:
                raise ValueError("init_ranges must have shape (P, 2)")
            if not np.all(np.isfinite(r)) or np.any(r[:, 0] > r[:, 1]):
                raise ValueError("init_ranges must be finite, non-empty intervals")
            object.__setattr__(self, "init_ranges", r)


@dataclass
class FitReport:
    best_params: KernelParams
    best_output_variance: float
    best_nll: float
    restart_nlls: list
    iterations: list
    statuses: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "log_signal_variance": self.best_params.log_signal_variance,
            "log_lengthscales": self.best_params.log_lengthscales.tolist(),
            "output_variance": self.best_output_variance,
            "best_nll": self.best_nll,
            "restart_nlls": [None if v is None else float(v) for v in self.restart_nlls],
            "iterations": list(self.iterations),
            "statuses": list(self.statuses),
            "failures": list(self.failures),
        }


def pack(params: KernelParams, output_variance) -> np.ndarray:
    return np.r_[params.log_lengthscales, params.log_signal_variance, np.log(output_variance)]


def unpack(theta):
    theta = np.asarray(theta, dtype=float)
    return KernelParams(theta[-2], theta[:-2]), float(np.exp(theta[-1]))


def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    return X, y


def _factor(X, params, output_variance):
    K = kernel_matrix(params, X)
    Ky = K.copy()
    Ky[np.diag_indices_from(Ky)] += output_variance
    # no jitter here: a failed factorization rejects the candidate
    L = cholesky(Ky, lower=True, check_finite=False)
    return K, L


def nll(X, y, params: KernelParams, output_variance) -> float:
    X, y = _prepare(X, y)
    _, L = _factor(X, params, output_variance)
    alpha = cho_solve((L, True), y, check_finite=False)
    return float(0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * y.size * LOG_2PI)


def nll_and_gradient(X, y, params: KernelParams, output_variance, _prepared=False):
    """NLL and its gradient with respect to the packed log-parameters."""
    if not _prepared:
        X, y = _prepare(X, y)
    K, L = _factor(X, params, output_variance)
    n = y.size
    alpha = cho_solve((L, True), y, check_finite=False)
    f = 0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * LOG_2PI

    # dNLL/dtheta = 0.5 tr((Ky^{-1} - alpha alpha^T) dKy/dtheta)
    W = cho_solve((L, True), np.eye(n), check_finite=False)
    W -= np.outer(alpha, alpha)
    WK = W * K
    grad = np.empty(params.dim + 2)
    for j, ell in enumerate(params.lengthscales):
        diff = (X[:, j, None] - X[None, :, j]) / ell
        grad[j] = 0.5 * np.sum(WK * (diff * diff))
    grad[-2] = 0.5 * np.sum(WK)
    grad[-1] = 0.5 * output_variance * np.trace(W)
    return float(f), grad


def nll_gradient(X, y, params: KernelParams, output_variance) -> np.ndarray:
    return nll_and_gradient(X, y, params, output_variance)[1]


def default_init_ranges(X, y):
    """Scale-aware starting intervals for the log-parameters."""
    X, y = _prepare(X, y)
    s = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
    s = np.where(s > 0, s, 1.0)
    vy = float(np.var(y, ddof=1)) if y.size > 1 else 1.0
    vy = vy if vy > 0 else 1.0
    rows = [[np.log(0.1 * sj), np.log(10 * sj)] for sj in s]
    rows.append([np.log(vy) - 1.0, np.log(vy) + 1.0])
    rows.append([np.log(1e-4 * vy), np.log(vy)])
    return np.array(rows)


def _bounds(X, y):
    X, y = _prepare(X, y)
    s = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
    s = np.where(s > 0, s, 1.0)
    vy = float(np.var(y, ddof=1)) if y.size > 1 else 1.0
    vy = vy if vy > 0 else 1.0
    lower = np.r_[np.log(1e-3 * s), np.log(1e-4 * vy), np.log(1e-8 * vy)]
    upper = np.r_[np.log(1e3 * s), np.log(1e4 * vy), np.log(10 * vy)]
    return lower, upper


def fit_hyperparameters(X, y, config: OptimizationConfig = OptimizationConfig(),
                        fixed_output_variance=None, isotropic=False) -> FitReport:
    """Minimize the NLL from ``config.restarts`` random starting points.

    Restart i draws its start from child i of SeedSequence(rng_seed), so a
    run with more restarts replays the starts of a run with fewer. With
    ``fixed_output_variance`` the noise is held fixed and only the kernel
    parameters are optimized; ``isotropic`` ties all lengthscales.
    """
    X, y = _prepare(X, y)
    if X.shape[0] < 2:
        raise ValueError("need at least two training points")
    D = X.shape[1]
    ranges = default_init_ranges(X, y) if config.init_ranges is None else config.init_ranges
    if ranges.shape[0] != D + 2:
        raise ValueError(f"init_ranges has {ranges.shape[0]} rows, expected {D + 2}")
    lower, upper = _bounds(X, y)
    fixed = fixed_output_variance is not None
    if fixed:
        fixed_output_variance = float(fixed_output_variance)
        if fixed_output_variance < 0:
            raise ValueError("fixed_output_variance must be >= 0")

    # free vector: [log l (D or 1), log sf2, (log s2 unless fixed)]
    nls = 1 if isotropic else D
    keep = list(range(nls)) + [D] + ([] if fixed else [D + 1])
    if isotropic:
        ranges = np.vstack([ranges[:D].mean(axis=0), ranges[D:]])
        lower = np.r_[lower[:D].max(), lower[D:]]
        upper = np.r_[upper[:D].min(), upper[D:]]
        keep = [0, 1] + ([] if fixed else [2])
    ranges, lower, upper = ranges[keep], lower[keep], upper[keep]

    def expand(theta):
        ls = np.full(D, theta[0]) if isotropic else theta[:D]
        params = KernelParams(theta[nls], ls)
        s2 = fixed_output_variance if fixed else float(np.exp(theta[nls + 1]))
        return params, s2

    def objective(theta):
        params, s2 = expand(theta)
        f, g = nll_and_gradient(X, y, params, s2, _prepared=True)
        g_ls = np.array([g[:D].sum()]) if isotropic else g[:D]
        g = np.r_[g_ls, g[D]] if fixed else np.r_[g_ls, g[D], g[D + 1]]
        return f, g

    children = np.random.SeedSequence(config.rng_seed).spawn(config.restarts)
    finals, iters, statuses, failures = [], [], [], []
    best = None
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        res, exc = None, None
        for _ in range(START_DRAWS):
            theta0 = rng.uniform(ranges[:, 0], ranges[:, 1])
            try:
                res = minimize_bfgs(objective, theta0, max_iters=config.max_iters,
                                    gtol=config.gtol, lower=lower, upper=upper)
                break
            except ValueError as e:
                exc = e
        if res is None:
            failures.append(f"restart {i}: {exc} ({START_DRAWS} starting points tried)")
            finals.append(None)
            iters.append(0)
            statuses.append(None)
            continue
        log.debug("restart %d: nll=%.6g iters=%d (%s)", i, res.fun, res.iterations, res.message)
        finals.append(res.fun)
        iters.append(res.iterations)
        statuses.append(res.status)
        # strict comparison: ties go to the lowest restart index
        if best is None or res.fun < best.fun:
            best = res

    if best is None:
        raise HyperoptError("all restarts failed: " + "; ".join(failures))
    params, s2 = expand(best.x)
    return FitReport(params, s2, best.fun, finals, iters, statuses, failures)
