"""
Standardize -> optional PCA -> GP fit, with the input-noise covariance
carried through each step, and a JSON bundle for persistence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, PcaModel, Scaler, fit_pca, pca_transform, pca_transform_covariance, standardize
from .egp import CorrectionCache, build_correction
from .gp import NoiseModel, PredictionBatch, TrainedModel, fit, model_from_dict, model_to_dict, predict_batch
from .hyperopt import FitReport, OptimizationConfig, fit_hyperparameters

__all__ = ["FittedPipeline", "fit_pipeline", "save_pipeline", "load_pipeline"]

BUNDLE_FORMAT = "egpr-pipeline"
BUNDLE_VERSION = 1


@dataclass(frozen=True, eq=False)
class FittedPipeline:
    model: TrainedModel
    scaler: Scaler
    pca: Optional[PcaModel]
    feature_names: tuple
    target_name: Optional[str]
    raw_input_cov: Optional[np.ndarray] = None
    fit_report: Optional[dict] = None
    run_config: Optional[dict] = None

    def model_inputs(self, X_raw):
        Z = self.scaler.transform_X(X_raw)
        return Z if self.pca is None else pca_transform(self.pca, Z)

    def correction(self, diagonal=False) -> CorrectionCache:
        return build_correction(self.model, diagonal=diagonal)

    def predict(self, X_raw, noise_correction=True, cache=None, diagonal=False) -> PredictionBatch:
        """Predictions in original target units."""
        Z = self.model_inputs(X_raw)
        if noise_correction and cache is None:
            cache = self.correction(diagonal)
        p = predict_batch(self.model, Z, noise_correction, cache)
        s2 = self.scaler.y_scale ** 2
        return PredictionBatch(
            self.scaler.inverse_y(p.mean), p.var_gp * s2,
            None if p.var_egp is None else p.var_egp * s2,
            None if p.grad_norm is None else p.grad_norm * self.scaler.y_scale)

    def to_dict(self):
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "feature_names": list(self.feature_names),
            "target_name": self.target_name,
            "scaler": self.scaler.to_dict(),
            "pca": None if self.pca is None else self.pca.to_dict(),
            "raw_input_covariance": None if self.raw_input_cov is None
            else np.asarray(self.raw_input_cov).tolist(),
            "model": model_to_dict(self.model),
            "fit_report": self.fit_report,
            "run_config": self.run_config,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"not an {BUNDLE_FORMAT} document")
        if d.get("version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version {d.get('version')!r}")
        raw = d.get("raw_input_covariance")
        return cls(
            model=model_from_dict(d["model"]),
            scaler=Scaler.from_dict(d["scaler"]),
            pca=None if d["pca"] is None else PcaModel.from_dict(d["pca"]),
            feature_names=tuple(d["feature_names"]),
            target_name=d["target_name"],
            raw_input_cov=None if raw is None else np.array(raw, dtype=float),
            fit_report=d.get("fit_report"),
            run_config=d.get("run_config"),
        )


def fit_pipeline(train: Dataset, opt: OptimizationConfig = OptimizationConfig(),
                 pca_target=None, fixed_output_variance=None, isotropic=False,
                 run_config=None) -> FittedPipeline:
    """Standardize, reduce, fit hyperparameters and the final GP.

    ``pca_target`` is None (no PCA), a variance fraction or a component
    count. ``fixed_output_variance`` is in original target units.
    """
    if train.y is None:
        raise ValueError("training data has no target column")
    std, scaler = standardize(train)
    Z = std.X
    pca = None
    S = std.input_cov
    if pca_target is not None:
        pca = fit_pca(Z, pca_target)
        Z = pca_transform(pca, Z)
        if S is not None:
            S = pca_transform_covariance(pca, S)
    s2_fixed = None
    if fixed_output_variance is not None:
        s2_fixed = float(fixed_output_variance) / scaler.y_scale ** 2
    report: FitReport = fit_hyperparameters(Z, std.y, opt, s2_fixed, isotropic)
    model = fit(Z, std.y, report.best_params, NoiseModel(report.best_output_variance, S))
    names = train.feature_names or tuple(f"x{j}" for j in range(train.dim))
    return FittedPipeline(model, scaler, pca, tuple(names), train.target_name,
                          train.input_cov, report.to_dict(), run_config)


def save_pipeline(pipe: FittedPipeline, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pipe.to_dict(), fh, indent=1)
        fh.write("\n")


def load_pipeline(path) -> FittedPipeline:
    with open(path, encoding="utf-8") as fh:
        return FittedPipeline.from_dict(json.load(fh))
