"""
How well a predictive standard deviation tracks the realized error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .gp import PredictionBatch

__all__ = [
    "pearson",
    "spearman",
    "BinnedCurve",
    "MethodStats",
    "DiagnosticsReport",
    "binned_curve",
    "correlation_report",
    "empirical_variance_mc",
]


def pearson(a, b) -> Optional[float]:
    """Pearson correlation, or None when either series is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("pearson needs two 1-D series of equal length")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    scale_a = max(np.max(np.abs(a)), 1e-300)
    scale_b = max(np.max(np.abs(b)), 1e-300)
    if sa <= 1e-13 * scale_a * np.sqrt(a.size) or sb <= 1e-13 * scale_b * np.sqrt(b.size):
        return None
    r = float(np.dot(da, db) / (sa * sb))
    return min(1.0, max(-1.0, r))


def spearman(a, b) -> Optional[float]:
    return pearson(rankdata(a), rankdata(b))


@dataclass
class BinnedCurve:
    """Equal-count bins over the predicted std."""

    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mean_abs_error: np.ndarray
    mean_std: np.ndarray
    count: np.ndarray

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("center", "lo", "hi", "mean_abs_error", "mean_std", "count")}


def binned_curve(std, abs_err, n_bins=20) -> BinnedCurve:
    std = np.asarray(std, dtype=float)
    abs_err = np.asarray(abs_err, dtype=float)
    order = np.argsort(std, kind="stable")
    chunks = [c for c in np.array_split(order, min(n_bins, std.size)) if c.size]
    lo = np.array([std[c].min() for c in chunks])
    hi = np.array([std[c].max() for c in chunks])
    return BinnedCurve(
        center=0.5 * (lo + hi), lo=lo, hi=hi,
        mean_abs_error=np.array([abs_err[c].mean() for c in chunks]),
        mean_std=np.array([std[c].mean() for c in chunks]),
        count=np.array([c.size for c in chunks]),
    )


@dataclass
class MethodStats:
    pearson: Optional[float]
    spearman: Optional[float]
    curve: BinnedCurve
    degenerate: bool = False

    def to_dict(self):
        return {"pearson": self.pearson, "spearman": self.spearman,
                "degenerate": self.degenerate, "curve": self.curve.to_dict()}


@dataclass
class DiagnosticsReport:
    n: int
    mean_abs_error: float
    gp: MethodStats
    egp: Optional[MethodStats] = None
    mc_empirical_variance: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    @property
    def pearson_gp(self):
        return self.gp.pearson

    @property
    def pearson_egp(self):
        return None if self.egp is None else self.egp.pearson

    @property
    def spearman_gp(self):
        return self.gp.spearman

    @property
    def spearman_egp(self):
        return None if self.egp is None else self.egp.spearman

    def to_dict(self):
        d = {
            "n": self.n,
            "mean_abs_error": self.mean_abs_error,
            "pearson_gp": self.pearson_gp,
            "pearson_egp": self.pearson_egp,
            "spearman_gp": self.spearman_gp,
            "spearman_egp": self.spearman_egp,
            "gp": self.gp.to_dict(),
            "egp": None if self.egp is None else self.egp.to_dict(),
            "notes": list(self.notes),
        }
        if self.mc_empirical_variance is not None:
            d["mc_empirical_variance"] = np.asarray(self.mc_empirical_variance).tolist()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def curve_columns(self):
        """Flat columns for the binned curves of every method present."""
        cols = {"method": [], "bin": [], "center": [], "lo": [], "hi": [],
                "mean_abs_error": [], "mean_std": [], "count": []}
        for name, st in (("gp", self.gp), ("egp", self.egp)):
            if st is None:
                continue
            c = st.curve
            for i in range(c.center.size):
                cols["method"].append(name)
                cols["bin"].append(i)
                for k in ("center", "lo", "hi", "mean_abs_error", "mean_std"):
                    cols[k].append(float(getattr(c, k)[i]))
                cols["count"].append(int(c.count[i]))
        return cols


def _stats(name, std, abs_err, n_bins, notes):
    r_p = pearson(std, abs_err)
    r_s = spearman(std, abs_err)
    degenerate = r_p is None
    if degenerate:
        notes.append(f"{name}: std or error series has zero variance; correlation undefined")
    return MethodStats(r_p, r_s, binned_curve(std, abs_err, n_bins), degenerate)


def correlation_report(predictions, truths, n_bins=20, mc_empirical_variance=None
                       ) -> DiagnosticsReport:
    """Correlate sqrt(var) with |mean - truth| for the plain and corrected
    variances (the latter only when present)."""
    if not isinstance(predictions, PredictionBatch):
        predictions = PredictionBatch.from_predictions(predictions)
    truths = np.asarray(truths, dtype=float).ravel()
    n = len(predictions)
    if truths.size != n:
        raise ValueError(f"{n} predictions but {truths.size} truths")
    if n < 3:
        raise ValueError("correlation_report needs at least 3 points")
    abs_err = np.abs(predictions.mean - truths)
    notes = []
    gp = _stats("gp", np.sqrt(predictions.var_gp), abs_err, n_bins, notes)
    egp = None
    if predictions.var_egp is not None:
        egp = _stats("egp", np.sqrt(predictions.var_egp), abs_err, n_bins, notes)
    return DiagnosticsReport(n, float(abs_err.mean()), gp, egp,
                             mc_empirical_variance, notes)


def empirical_variance_mc(latent_fn, grid, input_cov, replicates, seed,
                          output_variance=0.0, chunk=2000) -> np.ndarray:
    """Monte-Carlo spread of latent_fn(x + eps) + output noise at each grid point.

    eps ~ N(0, input_cov); ``input_cov`` may be a scalar variance for 1-D
    grids. Replicates are drawn in fixed-size chunks, each from its own
    child seed, so results depend only on (seed, replicates).
    """
    replicates = int(replicates)
    if replicates < 100:
        raise ValueError("replicates must be >= 100")
    G = np.asarray(grid, dtype=float)
    one_d = G.ndim == 1
    if one_d:
        G = G[:, None]
    d = G.shape[1]
    S = np.atleast_2d(np.asarray(input_cov, dtype=float))
    if S.shape == (1, 1) and d > 1:
        S = S[0, 0] * np.eye(d)
    if S.shape != (d, d):
        raise ValueError(f"input_cov has shape {S.shape}, expected ({d}, {d})")
    w, V = np.linalg.eigh(S)
    C = V * np.sqrt(np.clip(w, 0, None))
    sy = np.sqrt(output_variance)

    call = (lambda Z: latent_fn(Z[:, 0])) if one_d else latent_fn
    n_chunks = -(-replicates // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    # running sums with a shift for stability
    shift = np.asarray(call(G), dtype=float)
    s1 = np.zeros(G.shape[0])
    s2 = np.zeros(G.shape[0])
    done = 0
    for child in children:
        m = min(chunk, replicates - done)
        rng = np.random.default_rng(child)
        eps = rng.standard_normal((m, G.shape[0], d)) @ C.T
        vals = np.asarray(call((G[None] + eps).reshape(-1, d)), dtype=float).reshape(m, -1)
        vals = vals + sy * rng.standard_normal(vals.shape) - shift
        s1 += vals.sum(axis=0)
        s2 += (vals * vals).sum(axis=0)
        done += m
    return (s2 - s1 * s1 / replicates) / (replicates - 1)
