"""
Command-line driver.

    egpr toy        toy nearly-square-wave experiment, all artifacts
    egpr surrogate  write a synthetic high-dimensional dataset
    egpr fit        standardize / PCA / ML fit, save a model bundle
    egpr predict    mean, std_gp, std_egp for a table of inputs
    egpr diagnose   std-vs-|error| correlation report for a predictions table

Exit codes: 0 success, 1 validation error, 2 numerical failure.
The default output directory is taken from $EGPR_OUTPUT_DIR (else ./runs).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import (TableError, TableSchema, ToyConfig, generate_surrogate, load_table,
                   surrogate_input_covariance, write_table)
from .diagnostics import correlation_report
from .gp import NoiseModel, PredictionBatch, save_model
from .hyperopt import HyperoptError, OptimizationConfig
from .pipeline import fit_pipeline, load_pipeline, save_pipeline

log = logging.getLogger("egpr")

OUTPUT_ENV = "EGPR_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _default_out():
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _config_echo(args):
    skip = {"func", "out", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _read_matrix(path):
    """Square covariance from a delimited file (no header), or one row of
    per-dimension variances."""
    text = Path(path).read_text(encoding="utf-8")
    delim = "\t" if "\t" in text and "," not in text else ","
    try:
        M = np.loadtxt(path, delimiter=delim, ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: cannot parse covariance: {exc}") from None
    if M.shape[0] == 1:
        return np.diag(M[0])
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{path}: covariance must be square, got {M.shape}")
    return M


def _input_cov(args, dim):
    if args.input_noise_file:
        S = _read_matrix(args.input_noise_file)
        if S.shape != (dim, dim):
            raise ValueError(f"input covariance is {S.shape}, data has {dim} features")
        return S
    if args.input_noise_var is not None:
        if args.input_noise_var < 0:
            raise ValueError("--input-noise-var must be >= 0")
        return args.input_noise_var * np.eye(dim)
    return None


# ----------------------------------------------------------------- commands

def cmd_toy(args):
    from .experiments import run_toy

    cfg = ToyConfig(n_train=args.n_train, n_test_grid=args.n_grid,
                    input_noise_std=args.sigma_x, output_noise_var=args.sigma_y2,
                    sharpness=args.sharpness, x_range=(args.x_min, args.x_max),
                    rng_seed=args.seed)
    opt = OptimizationConfig(restarts=args.restarts, max_iters=args.max_iters,
                             rng_seed=args.seed)
    if args.mc_replicates < 100:
        raise ValueError("--mc-replicates must be >= 100")
    out = Path(args.out) if args.out else _default_out() / "toy"
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "config.json", _config_echo(args))

    res = run_toy(cfg, opt, args.mc_replicates)
    d = res.data
    write_table(out / "train.csv", {"x": d.train.X[:, 0], "y": d.train.y,
                                    "x_clean": d.train.X_clean[:, 0]})
    _dump_json(out / "hyperparameters.json", res.fit_report.to_dict())
    save_model(res.model, out / "model.json")
    g = res.grid
    write_table(out / "grid_predictions.csv", {
        "x": d.grid, "latent": d.grid_latent, "mean": g.mean,
        "std_gp": g.std_gp, "std_egp": g.std_egp,
        "mc_variance": res.mc_variance, "mc_std": np.sqrt(res.mc_variance)})
    t = res.test
    write_table(out / "test_predictions.csv", {
        "row": np.arange(len(t)), "x": d.test.X[:, 0], "x_clean": d.test.X_clean[:, 0],
        "truth": d.test.y, "mean": t.mean, "std_gp": t.std_gp, "std_egp": t.std_egp})
    report = res.diagnostics.to_dict()
    egp_ratio, gp_ratio = res.region_ratios()
    r_egp, r_gp = res.mc_tracking()
    report["toy"] = {"steep_flat_ratio_egp": egp_ratio, "steep_flat_ratio_gp": gp_ratio,
                     "mc_std_pearson_egp": r_egp, "mc_std_pearson_gp": r_gp}
    _dump_json(out / "diagnostics.json", report)
    write_table(out / "diagnostics_curves.csv", res.diagnostics.curve_columns())
    print(f"pearson_gp={res.diagnostics.pearson_gp:.4f} "
          f"pearson_egp={res.diagnostics.pearson_egp:.4f} -> {out}")
    return EXIT_OK


def cmd_surrogate(args):
    if args.input_noise_file:
        S = _read_matrix(args.input_noise_file)
    else:
        S = surrogate_input_covariance(args.d_raw, args.d_latent, args.seed,
                                       args.noise_scale, args.noise_diag)
    ds = generate_surrogate(args.n, args.d_raw, args.d_latent,
                            NoiseModel(args.output_variance, S), args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = {name: ds.X[:, j] for j, name in enumerate(ds.feature_names)}
    cols["y"] = ds.y
    cols["y_clean"] = ds.y_clean
    write_table(out, cols)
    cov_path = out.with_name(out.stem + "_input_cov.csv")
    np.savetxt(cov_path, ds.input_cov, delimiter=",", fmt="%.17g")
    print(f"wrote {out} and {cov_path}")
    return EXIT_OK


def _pca_target(args):
    if args.pca_components is not None and args.pca_variance is not None:
        raise ValueError("use only one of --pca-components / --pca-variance")
    if args.pca_components is not None:
        return int(args.pca_components)
    if args.pca_variance is not None:
        return float(args.pca_variance)
    return None


def cmd_fit(args):
    features = args.features.split(",") if args.features else None
    exclude = set(args.exclude.split(",")) if args.exclude else set()
    schema = TableSchema(target=args.target, features=features,
                         delimiter=args.delimiter, id_column=args.id_column)
    ds = load_table(args.data, schema)
    if exclude:
        keep = [j for j, n in enumerate(ds.feature_names) if n not in exclude]
        ds = type(ds)(ds.X[:, keep], ds.y, None,
                      tuple(ds.feature_names[j] for j in keep), ds.target_name)
    S = _input_cov(args, ds.dim)
    if S is not None:
        ds = type(ds)(ds.X, ds.y, S, ds.feature_names, ds.target_name)
    if args.n_train is not None and args.n_train < ds.n:
        idx = np.sort(np.random.default_rng(args.seed).permutation(ds.n)[:args.n_train])
        ds = ds.subset(idx)
    opt = OptimizationConfig(restarts=args.restarts, max_iters=args.max_iters,
                             rng_seed=args.seed)
    pipe = fit_pipeline(ds, opt, _pca_target(args), args.output_variance,
                        args.isotropic, run_config=_config_echo(args))
    out = Path(args.out) if args.out else _default_out() / "model.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_pipeline(pipe, out)
    print(f"input_dim={pipe.model.dim} nll={pipe.fit_report['best_nll']:.6g} -> {out}")
    return EXIT_OK


def cmd_predict(args):
    pipe = load_pipeline(args.model)
    schema = TableSchema(target=pipe.target_name, features=pipe.feature_names,
                         delimiter=args.delimiter, require_target=False)
    ds = load_table(args.data, schema)
    correct = not args.no_correction
    p = pipe.predict(ds.X, noise_correction=correct, diagonal=args.diagonal_t)
    cols = {"row": np.arange(len(p)), "mean": p.mean, "std_gp": p.std_gp}
    if correct:
        cols["std_egp"] = p.std_egp
    if ds.y is not None:
        cols["truth"] = ds.y
    out = Path(args.out) if args.out else _default_out() / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(out, cols)
    print(f"{len(p)} predictions -> {out}")
    return EXIT_OK


def cmd_diagnose(args):
    need = ["mean", "std_gp", args.truth_column]
    table = load_table(args.predictions, TableSchema(
        target=args.truth_column, features=None, delimiter=args.delimiter))
    names = table.feature_names
    missing = [c for c in need[:2] if c not in names]
    if missing:
        raise TableError(f"{args.predictions}: missing column(s): {', '.join(missing)}")
    col = lambda c: table.X[:, names.index(c)]
    var_egp = col("std_egp") ** 2 if "std_egp" in names else None
    preds = PredictionBatch(col("mean"), col("std_gp") ** 2, var_egp)
    report = correlation_report(preds, table.y, n_bins=args.bins)
    out = Path(args.out) if args.out else _default_out() / "diagnostics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json(), encoding="utf-8")
    write_table(out.with_name(out.stem + "_curves.csv"), report.curve_columns())
    fmt = lambda v: "undefined" if v is None else f"{v:.4f}"
    print(f"pearson_gp={fmt(report.pearson_gp)} pearson_egp={fmt(report.pearson_egp)} -> {out}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="egpr", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("toy", help="run the nearly-square-wave toy experiment")
    t.add_argument("--n-train", type=int, default=100)
    t.add_argument("--n-grid", type=int, default=200)
    t.add_argument("--sigma-x", type=float, default=0.3, help="input noise std")
    t.add_argument("--sigma-y2", type=float, default=0.05, help="output noise variance")
    t.add_argument("--sharpness", type=float, default=3.0)
    t.add_argument("--x-min", type=float, default=-5.0)
    t.add_argument("--x-max", type=float, default=5.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--restarts", type=int, default=10)
    t.add_argument("--max-iters", type=int, default=200)
    t.add_argument("--mc-replicates", type=int, default=10000)
    t.add_argument("--out", help="output directory (default $EGPR_OUTPUT_DIR/toy)")
    t.set_defaults(func=cmd_toy)

    s = sub.add_parser("surrogate", help="write a synthetic high-dimensional dataset")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--d-raw", type=int, default=50)
    s.add_argument("--d-latent", type=int, default=3)
    s.add_argument("--noise-scale", type=float, default=0.02,
                   help="latent-factor noise variance seen through the loadings")
    s.add_argument("--noise-diag", type=float, default=1e-3,
                   help="independent per-channel noise variance")
    s.add_argument("--input-noise-file", help="explicit input covariance (overrides the two above)")
    s.add_argument("--output-variance", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="CSV path; covariance goes to <stem>_input_cov.csv")
    s.set_defaults(func=cmd_surrogate)

    f = sub.add_parser("fit", help="fit a model bundle on a table")
    f.add_argument("--data", required=True)
    f.add_argument("--target", default="y")
    f.add_argument("--features", help="comma-separated feature columns (default: all others)")
    f.add_argument("--exclude", help="comma-separated columns to drop from the features")
    f.add_argument("--id-column")
    f.add_argument("--delimiter", help="field delimiter (default: comma, tab for .tsv)")
    f.add_argument("--input-noise-var", type=float, help="isotropic input noise variance")
    f.add_argument("--input-noise-file", help="input covariance matrix file (raw units)")
    f.add_argument("--pca-variance", type=float, help="keep components up to this variance fraction")
    f.add_argument("--pca-components", type=int, help="keep this many components")
    f.add_argument("--n-train", type=int, help="random subset of rows to train on")
    f.add_argument("--restarts", type=int, default=10)
    f.add_argument("--max-iters", type=int, default=200)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--output-variance", type=float,
                   help="fix the output noise variance (target units) instead of learning it")
    f.add_argument("--isotropic", action="store_true", help="tie all lengthscales")
    f.add_argument("--out", help="model bundle path (default $EGPR_OUTPUT_DIR/model.json)")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="predict from a model bundle")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--delimiter")
    r.add_argument("--no-correction", action="store_true", help="omit the std_egp column")
    r.add_argument("--diagonal-t", action="store_true",
                   help="keep only the diagonal of the training correction matrix")
    r.add_argument("--out", help="predictions CSV (default $EGPR_OUTPUT_DIR/predictions.csv)")
    r.set_defaults(func=cmd_predict)

    g = sub.add_parser("diagnose", help="correlation report for a predictions table")
    g.add_argument("--predictions", required=True)
    g.add_argument("--truth-column", default="truth")
    g.add_argument("--bins", type=int, default=20)
    g.add_argument("--delimiter")
    g.add_argument("--out", help="report JSON (default $EGPR_OUTPUT_DIR/diagnostics.json)")
    g.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (np.linalg.LinAlgError, HyperoptError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
