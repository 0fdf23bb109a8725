"""
BFGS with a backtracking (Armijo) line search.

Small and dependency-free so that hyperparameter fits are reproducible
bit-for-bit. Points outside the box [lower, upper] or where the objective
raises are treated as +inf and simply backtracked away from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptResult", "minimize_bfgs"]

STATUS = {
    0: "gradient norm below tolerance",
    1: "iteration limit reached",
    2: "line search failed to decrease the objective",
    3: "relative change in objective below tolerance",
}


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    status: int
    history: list = field(default_factory=list)

    @property
    def message(self):
        return STATUS[self.status]

    @property
    def converged(self):
        return self.status in (0, 3)


def _safe_eval(fun, x, lower, upper):
    if lower is not None and np.any(x < lower):
        return np.inf, None
    if upper is not None and np.any(x > upper):
        return np.inf, None
    try:
        f, g = fun(x)
    except (ArithmeticError, np.linalg.LinAlgError, ValueError):
        return np.inf, None
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return np.inf, None
    return float(f), np.asarray(g, dtype=float)


def minimize_bfgs(fun, x0, max_iters=200, gtol=1e-5, ftol=1e-12,
                  lower=None, upper=None, max_step=2.0, c1=1e-4,
                  max_backtracks=40):
    """Minimize ``fun(x) -> (f, grad)`` from ``x0``.

    ``gtol`` bounds the infinity norm of the gradient at convergence;
    ``max_step`` caps the Euclidean length of any single trial step.
    The history holds f after every accepted step and is strictly
    decreasing.
    """
    x = np.array(x0, dtype=float)
    f, g = _safe_eval(fun, x, lower, upper)
    if g is None:
        raise ValueError("objective is not finite at the starting point")
    n = x.size
    H = np.eye(n)
    history = [f]
    status = 1
    it = 0
    for it in range(1, max_iters + 1):
        if np.max(np.abs(g)) < gtol:
            status, it = 0, it - 1
            break
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            H = np.eye(n)
            p = -g
            slope = float(g @ p)
        pn = np.linalg.norm(p)
        step = min(1.0, max_step / pn) if pn > 0 else 1.0

        for _ in range(max_backtracks):
            x_new = x + step * p
            f_new, g_new = _safe_eval(fun, x_new, lower, upper)
            if g_new is not None and f_new <= f + c1 * step * slope and f_new < f:
                break
            step *= 0.5
        else:
            status = 2
            it -= 1
            break

        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(yv):
            if it == 1:
                H = np.eye(n) * (sy / float(yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            H = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                 + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s))

        df = f - f_new
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if df <= ftol * max(1.0, abs(f)):
            status = 3 if np.max(np.abs(g)) >= gtol else 0
            break
    return OptResult(x, f, g, it, status, history)
