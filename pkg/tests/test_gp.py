import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model, random_problem
from egpr.gp import (CholeskyError, NoiseModel, PredictionBatch, fit, jittered_cholesky,
                     load_model, model_from_dict, model_to_dict, predict_batch, predict_mean,
                     predict_var_gp, save_model)
from egpr.kernel import KernelParams, kernel_matrix
from oracles import dense_predict


def unit(d=1):
    return KernelParams.from_natural(1.0, 1.0, dim=d)


# -- fit

def test_single_point_alpha():
    m = fit([[0.0]], [2.0], unit(), NoiseModel(1.0))
    np.testing.assert_allclose(m.alpha, [1.0], rtol=1e-15)


def test_alpha_solves_regularized_system(rng):
    X, y, p, noise = random_problem(rng, n=5, d=2)
    m = fit(X, y, p, noise)
    A = kernel_matrix(p, X) + noise.output_variance * np.eye(5)
    np.testing.assert_allclose(m.alpha, np.linalg.solve(A, y), rtol=1e-10)
    assert np.linalg.norm(A @ m.alpha - y) / np.linalg.norm(y) < 1e-8


def test_chol_reconstructs_regularized_kernel(rng):
    m = random_model(rng, n=20, d=3)
    A = m.regularized_kernel()
    L = m.chol_factor
    assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) < 1e-8
    np.testing.assert_array_equal(np.triu(L, 1), 0)


def test_zero_targets_give_zero_alpha(rng):
    X, _, p, noise = random_problem(rng, n=6)
    m = fit(X, np.zeros(6), p, noise)
    np.testing.assert_array_equal(m.alpha, 0)


def test_model_is_immutable(rng):
    m = random_model(rng)
    with pytest.raises(ValueError):
        m.alpha[0] = 1.0
    with pytest.raises(AttributeError):
        m.alpha = None


def test_fit_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        fit([[0.0], [np.nan]], [1.0, 2.0], unit(), NoiseModel(0.1))
    with pytest.raises(ValueError, match="non-finite"):
        fit([[0.0], [1.0]], [1.0, np.inf], unit(), NoiseModel(0.1))


def test_fit_is_deterministic(rng):
    X, y, p, noise = random_problem(rng)
    a, b = fit(X, y, p, noise), fit(X, y, p, noise)
    np.testing.assert_array_equal(a.chol_factor, b.chol_factor)
    np.testing.assert_array_equal(a.alpha, b.alpha)


def test_jitter_rescues_duplicate_inputs():
    X = np.zeros((4, 1))
    m = fit(X, np.ones(4), unit(), NoiseModel(0.0))
    assert m.jitter > 0
    assert m.jitter <= 1e-4


def test_jitter_failure_reports_final_jitter():
    A = -np.eye(3)
    with pytest.raises(CholeskyError, match="final jitter"):
        jittered_cholesky(A, scale=1.0)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(-1.0)
    with pytest.raises(ValueError, match="symmetric"):
        NoiseModel(0.1, [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="semi-definite"):
        NoiseModel(0.1, [[1.0, 2.0], [2.0, 1.0]])
    nm = NoiseModel.diagonal(0.1, [1.0, 4.0])
    np.testing.assert_array_equal(nm.input_covariance, np.diag([1.0, 4.0]))
    np.testing.assert_array_equal(NoiseModel(0.1).input_cov(3), np.zeros((3, 3)))


# -- predict_mean / predict_var_gp

def test_far_point_reverts_to_prior(rng):
    m = random_model(rng, n=8, d=2)
    far = np.array([1e3, -1e3])
    assert predict_mean(m, far) == pytest.approx(0.0, abs=1e-300)
    assert predict_var_gp(m, far) == pytest.approx(m.params.signal_variance, rel=1e-15)


def test_noiseless_interpolation(rng):
    X = np.linspace(-2, 2, 7)[:, None]
    y = np.cos(2 * X[:, 0])
    m = fit(X, y, KernelParams.from_natural(1.0, 0.6, dim=1), NoiseModel(0.0))
    assert m.jitter == 0.0
    for xi, yi in zip(X, y):
        assert predict_mean(m, xi) == pytest.approx(yi, rel=1e-6)


def test_variance_vanishes_at_single_noiseless_point():
    m = fit([[0.3]], [1.0], unit(), NoiseModel(0.0))
    assert predict_var_gp(m, [0.3]) == pytest.approx(0.0, abs=1e-15)


def test_mean_and_variance_match_dense_oracle(rng):
    for _ in range(10):
        n, d = rng.integers(2, 21), rng.integers(1, 4)
        X, y, p, noise = random_problem(rng, n=n, d=d)
        m = fit(X, y, p, noise)
        for xs in rng.uniform(-2.5, 2.5, size=(5, d)):
            mu, var, _ = dense_predict(p.signal_variance, p.lengthscales,
                                       noise.output_variance, X, y, xs)
            assert predict_mean(m, xs) == pytest.approx(mu, rel=1e-10, abs=1e-12)
            assert predict_var_gp(m, xs) == pytest.approx(var, rel=1e-10, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_variance_within_prior_bounds(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n=15, d=2)
    pb = predict_batch(m, rng.uniform(-4, 4, size=(50, 2)))
    assert np.all(pb.var_gp >= 0)
    assert np.all(pb.var_gp <= m.params.signal_variance + 1e-10)


def test_mean_is_linear_in_targets(rng):
    X, y, p, noise = random_problem(rng, n=12, d=2)
    m1, m2 = fit(X, y, p, noise), fit(X, 2 * y, p, noise)
    Xs = rng.normal(size=(20, 2))
    np.testing.assert_allclose(predict_batch(m2, Xs).mean, 2 * predict_batch(m1, Xs).mean,
                               rtol=1e-10, atol=1e-14)


def test_dimension_mismatch(rng):
    m = random_model(rng, d=2)
    with pytest.raises(ValueError):
        predict_mean(m, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        predict_var_gp(m, [0.0])


# -- predict_batch

def test_batch_single_row_matches_point_calls(rng):
    m = random_model(rng)
    x = rng.normal(size=2)
    pb = predict_batch(m, x[None, :], noise_correction=True)
    assert len(pb) == 1
    assert pb.mean[0] == predict_mean(m, x)
    assert pb.var_gp[0] == pytest.approx(predict_var_gp(m, x), rel=1e-12, abs=1e-15)


def test_batch_matches_loop(rng):
    from egpr.egp import build_correction, predict_var_egp

    m = random_model(rng, n=20, d=3)
    cache = build_correction(m)
    Xs = rng.normal(size=(50, 3))
    pb = predict_batch(m, Xs, noise_correction=True, cache=cache)
    for i, x in enumerate(Xs):
        assert abs(pb.mean[i] - predict_mean(m, x)) <= 1e-12
        assert abs(pb.var_gp[i] - predict_var_gp(m, x)) <= 1e-12
        assert abs(pb.var_egp[i] - predict_var_egp(m, cache, x)) <= 1e-12
        assert pb[i].mean == pb.mean[i]


def test_batch_is_order_preserving(rng):
    m = random_model(rng)
    Xs = rng.normal(size=(100, 2))
    perm = rng.permutation(100)
    a = predict_batch(m, Xs, True)
    b = predict_batch(m, Xs[perm], True)
    for name in ("mean", "var_gp", "var_egp"):
        np.testing.assert_allclose(getattr(b, name), getattr(a, name)[perm], rtol=1e-12, atol=1e-15)


def test_batch_reports_bad_row(rng):
    m = random_model(rng)
    Xs = np.zeros((5, 2))
    Xs[3, 1] = np.nan
    with pytest.raises(ValueError, match="row 3"):
        predict_batch(m, Xs)


def test_batch_without_correction_has_no_egp(rng):
    pb = predict_batch(random_model(rng), np.zeros((3, 2)))
    assert pb.var_egp is None and pb.std_egp is None
    rebuilt = PredictionBatch.from_predictions(list(pb))
    np.testing.assert_array_equal(rebuilt.mean, pb.mean)


# -- persistence

def test_round_trip_reproduces_predictions(rng, tmp_path):
    m = random_model(rng, n=30, d=3)
    save_model(m, tmp_path / "m.json")
    m2 = load_model(tmp_path / "m.json")
    Xs = rng.normal(size=(40, 3))
    a, b = predict_batch(m, Xs, True), predict_batch(m2, Xs, True)
    for name in ("mean", "var_gp", "var_egp"):
        assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-12
    assert m2.noise == m.noise and m2.params == m.params


def test_persisted_document_has_no_cholesky(rng):
    d = model_to_dict(random_model(rng))
    assert d["version"] == 1
    assert "chol_factor" not in d


def test_load_rejects_tampered_alpha(rng):
    d = model_to_dict(random_model(rng))
    d["alpha"][0] += 1.0
    with pytest.raises(ValueError, match="alpha"):
        model_from_dict(d)
    d["version"] = 99
    with pytest.raises(ValueError, match="version"):
        model_from_dict(d)
