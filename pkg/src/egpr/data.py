"""
Datasets, synthetic generators and linear preprocessing.

Every linear preprocessing step also maps the known input-noise covariance
into the new coordinates (x -> A x sends Sx to A Sx A^T), because the
corrected variance consumes Sx in the space the GP actually sees.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .gp import NoiseModel

__all__ = [
    "Dataset",
    "ToyConfig",
    "ToyData",
    "toy_latent",
    "generate_toy",
    "surrogate_loadings",
    "surrogate_input_covariance",
    "surrogate_target",
    "generate_surrogate",
    "PcaModel",
    "fit_pca",
    "pca_transform",
    "pca_inverse",
    "pca_transform_covariance",
    "Scaler",
    "standardize",
    "TableSchema",
    "TableError",
    "load_table",
    "write_table",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs X (N x D), targets y (N,), optional input-noise covariance.

    ``X_clean``/``y_clean`` hold the noise-free versions when a generator
    knows them.
    """

    X: np.ndarray
    y: Optional[np.ndarray] = None
    input_cov: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None
    target_name: Optional[str] = None
    X_clean: Optional[np.ndarray] = None
    y_clean: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, idx):
        take = lambda a: None if a is None else a[idx]
        return replace(self, X=self.X[idx], y=take(self.y),
                       X_clean=take(self.X_clean), y_clean=take(self.y_clean))


# ---------------------------------------------------------------- toy problem

@dataclass(frozen=True)
class ToyConfig:
    n_train: int = 100
    n_test_grid: int = 200
    input_noise_std: float = 0.3
    output_noise_var: float = 0.05
    sharpness: float = 3.0
    x_range: tuple = (-5.0, 5.0)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_train < 2:
            raise ValueError("n_train must be >= 2")
        if self.n_test_grid < 1:
            raise ValueError("n_test_grid must be >= 1")
        if self.input_noise_std < 0 or self.output_noise_var < 0:
            raise ValueError("noise parameters must be >= 0")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be > 0")
        lo, hi = self.x_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("x_range must be a finite interval with lo < hi")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")


def toy_latent(x, sharpness=3.0):
    """Nearly-square sine wave tanh(s * sin(x))."""
    return np.tanh(sharpness * np.sin(np.asarray(x, dtype=float)))


@dataclass(frozen=True, eq=False)
class ToyData:
    config: ToyConfig
    train: Dataset
    grid: np.ndarray
    grid_latent: np.ndarray
    test: Dataset

    def latent(self, x):
        return toy_latent(x, self.config.sharpness)


def generate_toy(config: ToyConfig = ToyConfig()) -> ToyData:
    """Noisy-input training pairs on a regular grid plus a noisy test set.

    Training: clean grid x_i, observed input x_i + N(0, sx^2), target
    f(x_i) + N(0, s2). Test: same construction on an ``n_test_grid`` grid,
    with y holding f at the clean input. ``grid`` is the clean test grid.
    """
    rng = np.random.default_rng(config.rng_seed)
    lo, hi = config.x_range
    sx = config.input_noise_std
    sy = math.sqrt(config.output_noise_var)
    f = lambda x: toy_latent(x, config.sharpness)
    cov = np.array([[sx * sx]])

    xc = np.linspace(lo, hi, config.n_train)
    x_obs = xc + sx * rng.standard_normal(xc.size)
    y_obs = f(xc) + sy * rng.standard_normal(xc.size)
    train = Dataset(x_obs[:, None], y_obs, cov, ("x",), "y", xc[:, None], f(xc))

    grid = np.linspace(lo, hi, config.n_test_grid)
    xt = grid + sx * rng.standard_normal(grid.size)
    test = Dataset(xt[:, None], f(grid), cov, ("x",), "y", grid[:, None], f(grid))
    return ToyData(config, train, grid, f(grid), test)


# ------------------------------------------------------- high-dim surrogate

def surrogate_loadings(d_raw, d_latent, seed, identity=False):
    """d_latent x d_raw loading matrix used by generate_surrogate."""
    if identity:
        if d_latent != d_raw:
            raise ValueError("identity loadings need d_latent == d_raw")
        return np.eye(d_raw)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    return rng.standard_normal((d_latent, d_raw)) / math.sqrt(d_latent)


def surrogate_input_covariance(d_raw, d_latent, seed, scale=0.02, diag=1e-3,
                               identity=False):
    """Channel noise covariance scale * A^T A + diag * I.

    The first term is noise in the latent factors seen through the same
    loadings A as the signal, the second independent per-channel noise.
    """
    A = surrogate_loadings(d_raw, d_latent, seed, identity)
    S = scale * (A.T @ A) + diag * np.eye(d_raw)
    return 0.5 * (S + S.T)


def surrogate_target(Z):
    """Smooth nonlinear response with a sharp transition along the first
    latent factor and gentler structure along the others."""
    Z = np.atleast_2d(Z)
    out = np.tanh(3.0 * Z[:, 0])
    if Z.shape[1] > 1:
        out = out + 0.5 * np.sin(1.5 * Z[:, 1])
    if Z.shape[1] > 2:
        out = out + 0.25 * np.sum(Z[:, 2:] ** 2, axis=1) / (Z.shape[1] - 2)
    return out


def generate_surrogate(n, d_raw, d_latent, noise: NoiseModel, seed,
                       identity_loadings=False) -> Dataset:
    """Correlated high-dimensional inputs with a known input covariance.

    Latent factors Z ~ N(0, I) are mixed into d_raw channels by
    ``surrogate_loadings`` and corrupted with N(0, Sx); the target is
    ``surrogate_target(Z)`` plus N(0, s2). The loadings depend only on
    (d_raw, d_latent, seed), the draws on seed.
    """
    if n < 1 or d_raw < 1 or d_latent < 1 or d_latent > d_raw:
        raise ValueError(f"invalid dimensions n={n}, d_raw={d_raw}, d_latent={d_latent}")
    S = noise.input_cov(d_raw)
    A = surrogate_loadings(d_raw, d_latent, seed, identity_loadings)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    Z = rng.standard_normal((n, d_latent))
    Xc = Z @ A
    # separate streams: with Sx = 0 the inputs do not depend on the noise draw
    rng_x = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    rng_y = np.random.default_rng(np.random.SeedSequence([int(seed), 4]))
    if np.any(S):
        w, V = np.linalg.eigh(S)
        C = V * np.sqrt(np.clip(w, 0, None))
        X = Xc + rng_x.standard_normal((n, d_raw)) @ C.T
    else:
        X = Xc.copy()
    yc = surrogate_target(Z)
    y = yc + math.sqrt(noise.output_variance) * rng_y.standard_normal(n)
    names = tuple(f"x{j}" for j in range(d_raw))
    return Dataset(X, y, S, names, "y", Xc, yc)


# ----------------------------------------------------------------------- PCA

@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # D x r, orthonormal columns
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[1]

    def to_dict(self):
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance_ratio": self.explained_variance_ratio.tolist()}

    @classmethod
    def from_dict(cls, d):
        mean = np.array(d["mean"], dtype=float)
        W = np.array(d["components"], dtype=float).reshape(mean.size, -1)
        return cls(mean, W, np.array(d["explained_variance_ratio"], dtype=float))


def fit_pca(X, target=0.99) -> PcaModel:
    """Principal components of X via eigendecomposition of the covariance.

    ``target`` is either a float in (0, 1] (keep the fewest components
    whose cumulative explained variance reaches it) or an int r. Component
    signs are fixed so the largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("fit_pca needs a 2-D array with at least two rows")
    n, d = X.shape
    mu = X.mean(axis=0)
    Xc = X - mu
    C = Xc.T @ Xc / (n - 1)
    w, V = np.linalg.eigh(C)
    w, V = w[::-1], V[:, ::-1]
    tol = max(w[0], 0.0) * max(n, d) * np.finfo(float).eps * 10
    w = np.where(w > tol, w, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("degenerate data: zero total variance, r = 0")
    ratio = w / total
    if isinstance(target, (int, np.integer)) and not isinstance(target, bool):
        r = int(target)
        if not 1 <= r <= d:
            raise ValueError(f"component count {r} outside [1, {d}]")
    else:
        q = float(target)
        if not 0 < q <= 1:
            raise ValueError(f"variance fraction {q} outside (0, 1]")
        cum = np.cumsum(ratio)
        r = int(np.searchsorted(cum, q - 1e-12) + 1)
        r = min(r, int(np.count_nonzero(w)))
    W = V[:, :r].copy()
    idx = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[idx, np.arange(r)])
    W *= np.where(signs == 0, 1.0, signs)
    return PcaModel(mu, W, ratio[:r].copy())


def _check_cols(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.mean.size:
        raise ValueError(f"data has shape {X.shape}, PCA expects {model.mean.size} columns")
    return X


def pca_transform(model: PcaModel, X) -> np.ndarray:
    return (_check_cols(model, X) - model.mean) @ model.components


def pca_inverse(model: PcaModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != model.n_components:
        raise ValueError(f"scores have shape {Z.shape}, expected r={model.n_components}")
    return Z @ model.components.T + model.mean


def pca_transform_covariance(model: PcaModel, cov) -> np.ndarray:
    """W^T Sx W, symmetrized."""
    S = np.asarray(cov, dtype=float)
    d = model.mean.size
    if S.shape != (d, d):
        raise ValueError(f"covariance has shape {S.shape}, expected ({d}, {d})")
    P = model.components.T @ S @ model.components
    return 0.5 * (P + P.T)


# ----------------------------------------------------------- standardization

@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-column affine map to zero mean, unit variance (population std).

    Constant columns keep scale 1.
    """

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0

    def transform_X(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.x_mean.size:
            raise ValueError(f"data has shape {X.shape}, scaler expects "
                             f"{self.x_mean.size} columns")
        return (X - self.x_mean) / self.x_scale

    def inverse_X(self, Xs):
        return np.asarray(Xs) * self.x_scale + self.x_mean

    def transform_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def inverse_y(self, ys):
        return np.asarray(ys) * self.y_scale + self.y_mean

    def inverse_std(self, s):
        return np.asarray(s) * self.y_scale

    def transform_cov(self, S):
        """Entry (i, j) divided by s_i s_j."""
        S = np.asarray(S, dtype=float)
        return S / np.outer(self.x_scale, self.x_scale)

    def inverse(self, ds: Dataset) -> Dataset:
        return replace(ds, X=self.inverse_X(ds.X),
                       y=None if ds.y is None else self.inverse_y(ds.y),
                       input_cov=None if ds.input_cov is None
                       else ds.input_cov * np.outer(self.x_scale, self.x_scale))

    def apply(self, ds: Dataset) -> Dataset:
        return replace(ds, X=self.transform_X(ds.X),
                       y=None if ds.y is None else self.transform_y(ds.y),
                       input_cov=None if ds.input_cov is None
                       else self.transform_cov(ds.input_cov),
                       X_clean=None, y_clean=None)

    def to_dict(self):
        return {"x_mean": self.x_mean.tolist(), "x_scale": self.x_scale.tolist(),
                "y_mean": self.y_mean, "y_scale": self.y_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["x_mean"], dtype=float), np.array(d["x_scale"], dtype=float),
                   float(d["y_mean"]), float(d["y_scale"]))


def _scale(a, axis=None):
    s = np.std(a, axis=axis)
    return np.where(s > 0, s, 1.0)


def standardize(ds: Dataset):
    """Returns (standardized dataset, scaler). Sx is rescaled alongside."""
    x_mean = ds.X.mean(axis=0)
    x_scale = _scale(ds.X, axis=0)
    if ds.y is not None:
        scaler = Scaler(x_mean, x_scale, float(np.mean(ds.y)), float(_scale(ds.y)))
    else:
        scaler = Scaler(x_mean, x_scale)
    return scaler.apply(ds), scaler


# ---------------------------------------------------------------- table I/O

class TableError(ValueError):
    pass


@dataclass(frozen=True)
class TableSchema:
    """Which columns to read. ``features=None`` takes every column other
    than the target (and ``id_column``)."""

    target: Optional[str] = "y"
    features: Optional[Sequence[str]] = None
    delimiter: Optional[str] = None
    id_column: Optional[str] = None
    require_target: bool = True


def _sniff_delimiter(path, header_line):
    if str(path).endswith((".tsv", ".tab")):
        return "\t"
    return "\t" if "\t" in header_line and "," not in header_line else ","


def load_table(path, schema: TableSchema = TableSchema()) -> Dataset:
    """Read a delimited UTF-8 table with a header row."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        delim = schema.delimiter or _sniff_delimiter(path, first)
        rows = list(csv.reader(fh, delimiter=delim))
    if not rows:
        raise TableError(f"{path}: empty file (header row required)")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    idx = {name: i for i, name in enumerate(header)}

    has_target = schema.target is not None and schema.target in idx
    if schema.target is not None and schema.require_target and not has_target:
        raise TableError(f"{path}: missing column(s): {schema.target}")
    skip = {schema.target, schema.id_column}
    features = list(schema.features) if schema.features is not None else [
        h for h in header if h not in skip]
    missing = [c for c in features if c not in idx]
    if missing:
        raise TableError(f"{path}: missing column(s): {', '.join(missing)}")
    if not features:
        raise TableError(f"{path}: no feature columns")

    def num(r, line, col):
        cell = r[idx[col]].strip()
        try:
            v = float(cell)
        except ValueError:
            raise TableError(f"{path}: row {line}, column '{col}': "
                             f"non-numeric value {cell!r}") from None
        if not math.isfinite(v):
            raise TableError(f"{path}: row {line}, column '{col}': non-finite value {cell!r}")
        return v

    X = np.empty((len(body), len(features)))
    y = np.empty(len(body)) if has_target else None
    for i, r in enumerate(body):
        line = i + 2
        if len(r) != len(header):
            raise TableError(f"{path}: row {line} has {len(r)} fields, header has {len(header)}")
        X[i] = [num(r, line, c) for c in features]
        if has_target:
            y[i] = num(r, line, schema.target)
    return Dataset(X, y, None, tuple(features), schema.target if has_target else None)


def write_table(path, columns: dict, delimiter=","):
    """Write equal-length columns with a header row. Floats use repr so the
    file round-trips exactly."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    n = {c.shape[0] for c in cols}
    if len(n) > 1:
        raise ValueError("columns have different lengths")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
