import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from adaptcov import models as M
from adaptcov.etkf import Ensemble, etkf_analysis, etkf_forecast, linearize, regenerate
from adaptcov.errors import InvalidInput


def test_linearize_square_identity():
    assert_allclose(linearize(np.eye(3), np.eye(3)), np.eye(3), atol=1e-14)


def test_linearize_zero_output(rng):
    assert_array_equal(linearize(rng.standard_normal((4, 6)), np.zeros((2, 6))), np.zeros((2, 4)))


def test_linearize_matches_svd_pseudo_inverse(rng):
    U = rng.standard_normal((5, 3))  # rank-deficient in state space
    V = rng.standard_normal((2, 3))
    u, s, vt = np.linalg.svd(U, full_matrices=False)
    oracle = V @ (vt.T / s) @ u.T
    assert_allclose(linearize(U, V), oracle, atol=1e-12)


def test_linearize_recovers_linear_map(rng):
    F = rng.standard_normal((3, 3))
    U = rng.standard_normal((3, 10))
    assert_allclose(linearize(U, F @ U), F, atol=1e-12)


def test_analysis_transform_mean_and_covariance(rng):
    n, Ne = 3, 8
    ens = Ensemble(rng.standard_normal((n, Ne)))
    H, R = np.eye(2, 3), 0.5 * np.eye(2)
    ens_a, rec = etkf_analysis(ens, rng.standard_normal(2), H, R)
    Bf = ens.covariance()
    K = Bf @ H.T @ np.linalg.inv(H @ Bf @ H.T + R)
    assert_allclose(ens_a.covariance(), (np.eye(n) - K @ H) @ Bf, atol=1e-12)
    assert_allclose(rec.K, K, atol=1e-12)
    assert_allclose(ens_a.mean, ens.mean + K @ rec.v, atol=1e-12)
    assert_allclose(ens_a.perturbations.sum(axis=1), 0, atol=1e-12)


def test_analysis_requires_positive_definite_r(rng):
    with pytest.raises(InvalidInput):
        etkf_analysis(Ensemble(rng.standard_normal((2, 4))), np.zeros(2), np.eye(2), np.zeros((2, 2)))


def test_regenerated_covariance_is_exact(rng):
    n, Ne = 4, 16
    B = M.random_covariance(n, rng)
    xbar = rng.standard_normal(n)
    X = regenerate(xbar, B, Ne, rng)
    U = X - X.mean(axis=1, keepdims=True)
    assert_allclose(U @ U.T / (Ne - 1), B, atol=1e-8)
    assert_allclose(X.mean(axis=1), xbar, atol=1e-13)


def test_forecast_without_noise_is_deterministic(rng):
    lin, _ = M.linear2d()
    ens = Ensemble(rng.standard_normal((2, 5)))
    out, F_hats = etkf_forecast(ens, lin.deterministic, lin.Gamma, np.zeros((2, 2)), 2, rng)
    assert_allclose(out.members, lin.F @ lin.F @ ens.members, atol=1e-13)
    assert len(F_hats) == 2
    assert_allclose(F_hats[0], lin.F, atol=1e-12)


def test_forecast_preserves_mean_and_recovers_f(rng):
    lin, _ = M.linear2d()
    ens = Ensemble(rng.standard_normal((2, 16)))
    out, F_hats = etkf_forecast(ens, lin.deterministic, lin.Gamma, lin.Q, 1, rng)
    assert_allclose(out.mean, lin.F @ ens.mean, atol=1e-12)
    assert_allclose(F_hats[0], lin.F, atol=1e-12)
    U = lin.F @ ens.perturbations
    assert_allclose(out.covariance(), U @ U.T / 15 + lin.Gamma @ lin.Q @ lin.Gamma.T, atol=1e-8)


def test_forecast_rejects_zero_steps(rng):
    lin, _ = M.linear2d()
    with pytest.raises(InvalidInput):
        etkf_forecast(Ensemble(np.zeros((2, 3))), lin.deterministic, lin.Gamma, lin.Q, 0, rng)


def test_small_ensemble_matches_span(rng):
    n, Ne = 6, 4
    B = M.random_covariance(n, rng)
    X = regenerate(np.zeros(n), B, Ne, rng)
    assert np.linalg.matrix_rank(X - X.mean(axis=1, keepdims=True)) == Ne - 1
    assert np.all(np.isfinite(X))


def test_constant_observation_map_leaves_prior(rng):
    ens = Ensemble(rng.standard_normal((3, 6)))
    ens_a, rec = etkf_analysis(ens, np.ones(2), lambda X: np.ones((2, X.shape[1])), np.eye(2))
    assert_allclose(ens_a.members, ens.members, atol=1e-13)
    assert_array_equal(rec.H, np.zeros((2, 3)))


def test_analysis_matches_kalman_filter(rng):
    from adaptcov.kalman import KalmanState, kf_analysis

    lin, scheme = M.linear2d("full")
    ens = Ensemble(rng.standard_normal((2, 16)))
    y = rng.standard_normal(2)
    ens_a, _ = etkf_analysis(ens, y, scheme.H, scheme.R_true)
    kf = kf_analysis(KalmanState(ens.mean, ens.covariance()), y, scheme.H, scheme.R_true)
    assert_allclose(ens_a.mean, kf.x_a, atol=1e-6)
    assert_allclose(ens_a.covariance(), kf.B_a, atol=1e-6)


def test_printed_exponent_differs_from_exact(rng):
    B = M.random_covariance(3, np.random.default_rng(1))
    X = regenerate(np.zeros(3), B, 10, np.random.default_rng(2), printed_exponent=True)
    U = X - X.mean(axis=1, keepdims=True)
    assert not np.allclose(U @ U.T / 9, B, atol=1e-6)
