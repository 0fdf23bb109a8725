import json

import numpy as np
import pytest

from egpr.cli import main
from egpr.data import TableSchema, load_table, write_table
from egpr.hyperopt import OptimizationConfig
from egpr.pipeline import fit_pipeline, load_pipeline, save_pipeline


def read(path):
    return load_table(path, TableSchema(target=None))


def col(ds, name):
    return ds.X[:, ds.feature_names.index(name)]


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert main(["toy", "--out", str(out / "a")]) == 0
    assert main(["toy", "--out", str(out / "b")]) == 0
    return out


@pytest.fixture(scope="module")
def surrogate_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("sur")
    assert main(["surrogate", "--n", "1000", "--seed", "3", "--out", str(d / "sur.csv")]) == 0
    return d / "sur.csv"


# -- toy

def test_toy_writes_all_artifacts(toy_run):
    names = {p.name for p in (toy_run / "a").iterdir()}
    assert names >= {"config.json", "train.csv", "hyperparameters.json", "grid_predictions.csv",
                     "test_predictions.csv", "diagnostics.json", "diagnostics_curves.csv",
                     "model.json"}
    cfg = json.loads((toy_run / "a" / "config.json").read_text())
    assert cfg["sigma_x"] == 0.3 and cfg["sigma_y2"] == 0.05 and cfg["restarts"] == 10


def test_toy_is_byte_identical(toy_run):
    for p in (toy_run / "a").iterdir():
        assert p.read_bytes() == (toy_run / "b" / p.name).read_bytes(), p.name


def test_toy_default_ordering(toy_run):
    rep = json.loads((toy_run / "a" / "diagnostics.json").read_text())
    assert rep["pearson_egp"] > rep["pearson_gp"]


def test_toy_without_input_noise(tmp_path):
    assert main(["toy", "--sigma-x", "0", "--mc-replicates", "200", "--out", str(tmp_path)]) == 0
    g = read(tmp_path / "grid_predictions.csv")
    np.testing.assert_allclose(col(g, "std_egp"), col(g, "std_gp"), rtol=1e-10, atol=1e-12)


def test_toy_rejects_bad_flags(tmp_path, capsys):
    assert main(["toy", "--n-train", "1", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and err.count("\n") == 1


def test_default_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("EGPR_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["toy", "--n-train", "20", "--n-grid", "20", "--restarts", "1",
                 "--mc-replicates", "100"]) == 0
    assert (tmp_path / "env" / "toy" / "diagnostics.json").exists()


# -- fit / predict

def test_fit_bundle_round_trip(surrogate_csv, tmp_path):
    ds = load_table(surrogate_csv, TableSchema(target="y", features=[f"x{j}" for j in range(50)]))
    cov = np.loadtxt(surrogate_csv.with_name("sur_input_cov.csv"), delimiter=",")
    ds = type(ds)(ds.X[:300], ds.y[:300], cov, ds.feature_names, "y")
    pipe = fit_pipeline(ds, OptimizationConfig(restarts=2), pca_target=0.99)
    save_pipeline(pipe, tmp_path / "m.json")
    back = load_pipeline(tmp_path / "m.json")
    a, b = pipe.predict(ds.X), back.predict(ds.X)
    for name in ("mean", "var_gp", "var_egp"):
        assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-12


def _fit(surrogate_csv, out, *extra):
    args = ["fit", "--data", str(surrogate_csv), "--exclude", "y_clean",
            "--input-noise-file", str(surrogate_csv.with_name("sur_input_cov.csv")),
            "--n-train", "250", "--out", str(out), *extra]
    return main(args)


def test_cli_fit_predict_diagnose(surrogate_csv, tmp_path):
    assert _fit(surrogate_csv, tmp_path / "m.json", "--pca-variance", "0.99") == 0
    bundle = json.loads((tmp_path / "m.json").read_text())
    assert bundle["pca"] is not None and bundle["run_config"]["pca_variance"] == 0.99
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--data", str(surrogate_csv),
                 "--out", str(tmp_path / "p.csv")]) == 0
    p = read(tmp_path / "p.csv")
    assert p.feature_names == ("row", "mean", "std_gp", "std_egp", "truth")
    assert p.n == 1000
    pipe = load_pipeline(tmp_path / "m.json")
    ref = pipe.predict(load_table(surrogate_csv, TableSchema(target="y",
                                                             features=pipe.feature_names)).X)
    np.testing.assert_allclose(col(p, "mean"), ref.mean, rtol=0, atol=1e-12)
    np.testing.assert_allclose(col(p, "std_egp"), ref.std_egp, rtol=0, atol=1e-12)
    assert main(["diagnose", "--predictions", str(tmp_path / "p.csv"),
                 "--out", str(tmp_path / "d.json")]) == 0
    rep = json.loads((tmp_path / "d.json").read_text())
    assert rep["n"] == 1000 and rep["pearson_egp"] is not None
    assert (tmp_path / "d_curves.csv").exists()


def test_more_restarts_never_worse(surrogate_csv, tmp_path):
    assert _fit(surrogate_csv, tmp_path / "r1.json", "--pca-variance", "0.99", "--restarts", "1") == 0
    assert _fit(surrogate_csv, tmp_path / "r10.json", "--pca-variance", "0.99", "--restarts", "10") == 0
    nll = lambda p: json.loads(p.read_text())["fit_report"]["best_nll"]
    assert nll(tmp_path / "r10.json") <= nll(tmp_path / "r1.json")


def test_fixed_component_count(surrogate_csv, tmp_path):
    assert _fit(surrogate_csv, tmp_path / "m.json", "--pca-components", "50",
                "--restarts", "1", "--max-iters", "5", "--n-train", "120") == 0
    assert load_pipeline(tmp_path / "m.json").model.dim == 50


def _small_table(path, n=15, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-3, 3, n))
    write_table(path, {"x": x, "y": np.sin(x)})
    return path


def test_noiseless_model_interpolates_training_file(tmp_path):
    data = _small_table(tmp_path / "t.csv")
    assert main(["fit", "--data", str(data), "--output-variance", "0", "--restarts", "3",
                 "--out", str(tmp_path / "m.json")]) == 0
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--data", str(data),
                 "--out", str(tmp_path / "p.csv")]) == 0
    p = read(tmp_path / "p.csv")
    np.testing.assert_allclose(col(p, "mean"), col(p, "truth"), rtol=0, atol=1e-5)


def test_no_correction_omits_column(tmp_path):
    data = _small_table(tmp_path / "t.csv")
    assert main(["fit", "--data", str(data), "--input-noise-var", "0.01", "--restarts", "1",
                 "--out", str(tmp_path / "m.json")]) == 0
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--data", str(data),
                 "--no-correction", "--out", str(tmp_path / "p.csv")]) == 0
    assert "std_egp" not in read(tmp_path / "p.csv").feature_names


def test_batch_equals_single_row_invocations(tmp_path):
    data = _small_table(tmp_path / "t.csv", n=12)
    assert main(["fit", "--data", str(data), "--input-noise-var", "0.04", "--restarts", "2",
                 "--out", str(tmp_path / "m.json")]) == 0
    model = str(tmp_path / "m.json")
    assert main(["predict", "--model", model, "--data", str(data), "--out", str(tmp_path / "all.csv")]) == 0
    full = read(tmp_path / "all.csv")
    src = load_table(data)
    rows = []
    for i in range(src.n):
        write_table(tmp_path / f"r{i}.csv", {"x": src.X[i:i + 1, 0], "y": src.y[i:i + 1]})
        assert main(["predict", "--model", model, "--data", str(tmp_path / f"r{i}.csv"),
                     "--out", str(tmp_path / f"o{i}.csv")]) == 0
        rows.append(read(tmp_path / f"o{i}.csv").X[0, 1:])
    np.testing.assert_allclose(np.array(rows), full.X[:, 1:], rtol=0, atol=1e-12)


def test_predict_schema_mismatch_names_columns(tmp_path, capsys):
    data = _small_table(tmp_path / "t.csv")
    assert main(["fit", "--data", str(data), "--restarts", "1", "--out", str(tmp_path / "m.json")]) == 0
    write_table(tmp_path / "other.csv", {"z": [1.0, 2.0]})
    assert main(["predict", "--model", str(tmp_path / "m.json"),
                 "--data", str(tmp_path / "other.csv")]) == 1
    assert "missing column(s): x" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "missing.csv")]) == 1
    write_table(tmp_path / "dup.csv", {"x": [0.0, 0.0, 0.0], "y": [0.0, 1.0, 2.0]})
    assert main(["fit", "--data", str(tmp_path / "dup.csv"), "--output-variance", "0",
                 "--restarts", "2", "--out", str(tmp_path / "m.json")]) == 2
    assert "numerical failure" in capsys.readouterr().err


# -- diagnose

def test_diagnose_proportional(tmp_path):
    err = np.array([0.1, 0.5, 0.2, 0.9, 0.4])
    write_table(tmp_path / "p.csv", {"row": np.arange(5), "mean": err, "std_gp": 2 * err,
                                     "std_egp": err, "truth": np.zeros(5)})
    assert main(["diagnose", "--predictions", str(tmp_path / "p.csv"),
                 "--out", str(tmp_path / "d.json")]) == 0
    rep = json.loads((tmp_path / "d.json").read_text())
    assert rep["pearson_gp"] == pytest.approx(1.0) and rep["pearson_egp"] == pytest.approx(1.0)


def test_diagnose_matches_hand_formula(tmp_path):
    from test_diagnostics import hand_pearson

    rng = np.random.default_rng(8)
    mean, std, truth = rng.normal(size=5), rng.uniform(0.1, 1, 5), rng.normal(size=5)
    write_table(tmp_path / "p.csv", {"mean": mean, "std_gp": std, "truth": truth})
    assert main(["diagnose", "--predictions", str(tmp_path / "p.csv"),
                 "--out", str(tmp_path / "d.json")]) == 0
    rep = json.loads((tmp_path / "d.json").read_text())
    assert rep["pearson_gp"] == pytest.approx(hand_pearson(list(std), list(np.abs(mean - truth))))
    assert rep["pearson_egp"] is None


def test_diagnose_toy_table(toy_run, tmp_path):
    assert main(["diagnose", "--predictions", str(toy_run / "a" / "test_predictions.csv"),
                 "--out", str(tmp_path / "d.json")]) == 0
    rep = json.loads((tmp_path / "d.json").read_text())
    assert rep["pearson_egp"] > rep["pearson_gp"]
