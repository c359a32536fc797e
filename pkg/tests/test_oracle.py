"""Self-consistency of the dense reference implementations."""

import numpy as np
import pytest

from stgp import Gaussian, GaussianParams, UsageError
from stgp.oracle import (dense_conditional_marginals, dense_regression,
                         dense_svgp, dense_vgp_natgrad_step)

from conftest import dense_gram, random_sites, random_spatial, random_temporal, random_times


def test_scalar_bayes():
    mean, cov, logml = dense_regression(np.array([[1.0]]), [2.0], [1.0])
    np.testing.assert_allclose(mean, [1.0], atol=1e-14)
    np.testing.assert_allclose(cov, [[0.5]], atol=1e-14)
    assert abs(logml - (-0.5 * (np.log(2 * np.pi * 2) + 2.0))) < 1e-14


def test_no_data_returns_prior():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    K = A @ A.T + np.eye(4)
    mean, cov, logml = dense_regression(K, np.zeros(4), np.ones(4),
                                        mask=np.zeros(4, bool))
    np.testing.assert_array_equal(mean, np.zeros(4))
    np.testing.assert_array_equal(cov, K)
    assert logml == 0.0


def test_svgp_with_full_inducing_set_is_exact():
    rng = np.random.default_rng(1)
    kt, ks = random_temporal(rng), random_spatial(rng)
    t, S = random_times(rng, 4), random_sites(rng, 3)
    K = dense_gram(kt, ks, t, S)
    y = rng.normal(size=12)
    s2 = 0.3
    m_u, S_u, bound = dense_svgp(K, K, np.diag(K), y, s2)
    _, _, logml = dense_regression(K, y, s2 * np.ones(12))
    assert abs(bound - logml) < 1e-10
    # optimal q(u) at Z=X is the exact posterior
    mean, cov, _ = dense_regression(K, y, s2 * np.ones(12))
    np.testing.assert_allclose(m_u, mean, atol=1e-9)
    np.testing.assert_allclose(S_u, cov, atol=1e-9)


def test_svgp_bound_is_below_exact_logml():
    rng = np.random.default_rng(2)
    kt, ks = random_temporal(rng), random_spatial(rng)
    t, S = random_times(rng, 5), random_sites(rng, 3)
    K = dense_gram(kt, ks, t, S)
    y = rng.normal(size=15)
    s2 = 0.4
    # single inducing point: the full cross-covariance row at site 0
    from stgp.kernels import spatial_gram, temporal_gram
    Z = S[:1]
    K_zz = np.kron(temporal_gram(kt, t), spatial_gram(ks, Z))
    K_zx = np.kron(temporal_gram(kt, t), spatial_gram(ks, Z, S))
    _, _, bound = dense_svgp(K_zz, K_zx, np.diag(K), y, s2)
    _, _, logml = dense_regression(K, y, s2 * np.ones(15))
    assert bound <= logml + 1e-8


def test_natgrad_step_beta_zero_is_identity():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3))
    K = A @ A.T + np.eye(3)
    q = GaussianParams(rng.normal(size=3), K, "moment")
    out = dense_vgp_natgrad_step(q, K, rng.normal(size=3), Gaussian(0.5), 0.0)
    np.testing.assert_allclose(out.a, q.a, atol=1e-10)
    np.testing.assert_allclose(out.b, q.b, atol=1e-10)


def test_natgrad_full_step_from_prior_is_exact_posterior():
    rng = np.random.default_rng(4)
    kt, ks = random_temporal(rng), random_spatial(rng)
    t, S = random_times(rng, 3), random_sites(rng, 2)
    K = dense_gram(kt, ks, t, S)
    y = rng.normal(size=6)
    s2 = 0.7
    q = dense_vgp_natgrad_step(GaussianParams(np.zeros(6), K, "moment"),
                               K, y, Gaussian(s2), 1.0)
    mean, cov, _ = dense_regression(K, y, s2 * np.ones(6))
    np.testing.assert_allclose(q.a, mean, atol=1e-9)
    np.testing.assert_allclose(q.b, cov, atol=1e-9)


def test_conditional_marginals_at_inducing_points():
    rng = np.random.default_rng(5)
    ks = random_spatial(rng)
    from stgp.kernels import spatial_gram
    Z = random_sites(rng, 3)
    K_zz = spatial_gram(ks, Z)
    m_u = rng.normal(size=3)
    A = rng.normal(size=(3, 3))
    S_u = 0.1 * (A @ A.T)
    mean, var = dense_conditional_marginals(K_zz, K_zz, np.diag(K_zz),
                                            m_u, S_u)
    np.testing.assert_allclose(mean, m_u, atol=1e-10)
    np.testing.assert_allclose(var, np.diag(S_u), atol=1e-10)


def test_size_cap_enforced():
    with pytest.raises(UsageError):
        dense_regression(np.eye(300), np.zeros(300), np.ones(300))
