"""Expected log-likelihoods, their gradients and predictive densities."""

import numpy as np
import pytest

from stgp import Bernoulli, DomainError, Gaussian, Poisson, expected_log_lik, nlpd
from stgp.likelihoods import elik_grads


def test_gaussian_expected_log_lik_value():
    # sigma^2=2, y=1, m=0, v=1: -(1/2)log(4 pi) - (1+1)/4
    got = expected_log_lik(Gaussian(2.0), 1.0, 0.0, 1.0)
    assert abs(got - (-0.5 * np.log(4 * np.pi) - 0.5)) < 1e-12


def test_poisson_expected_log_lik_small_variance_limit():
    got = expected_log_lik(Poisson(), 0.0, 0.0, 1e-12)
    assert abs(got - (-1.0)) < 1e-6


def test_gaussian_nlpd_values():
    assert abs(nlpd(Gaussian(1.0), 0.5, 0.5, 1e-12)
               - 0.5 * np.log(2 * np.pi)) < 1e-9
    assert abs(nlpd(Gaussian(1.0), 0.0, 0.0, 1.0)
               - 0.5 * np.log(4 * np.pi)) < 1e-12


def test_poisson_nlpd_point_mass_limit():
    assert abs(nlpd(Poisson(), 1.0, 0.0, 1e-12) - 1.0) < 1e-6


def test_nlpd_quadrature_order_converged():
    rng = np.random.default_rng(0)
    y = rng.poisson(1.5, size=50).astype(float)
    m = rng.normal(0.2, 0.4, size=50)
    v = rng.uniform(0.05, 0.5, size=50)
    a = nlpd(Poisson(), y, m, v, order=50)
    b = nlpd(Poisson(), y, m, v, order=100)
    assert np.abs(a - b).max() < 1e-9


@pytest.mark.parametrize("lik,draw", [
    (Gaussian(0.7), lambda rng: rng.normal(size=100)),
    (Poisson(), lambda rng: rng.poisson(1.5, size=100).astype(float)),
    (Bernoulli(), lambda rng: rng.integers(0, 2, size=100).astype(float)),
])
def test_gradients_match_finite_differences(lik, draw):
    rng = np.random.default_rng(8)
    y = draw(rng)
    m = rng.normal(0.0, 0.8, size=100)
    v = rng.uniform(0.1, 1.0, size=100)
    g_m, g_v = elik_grads(lik, y, m, v, force_quadrature=True)
    h = 1e-6
    fd_m = (expected_log_lik(lik, y, m + h, v, force_quadrature=True)
            - expected_log_lik(lik, y, m - h, v, force_quadrature=True)) / (2 * h)
    fd_v = (expected_log_lik(lik, y, m, v + h, force_quadrature=True)
            - expected_log_lik(lik, y, m, v - h, force_quadrature=True)) / (2 * h)
    np.testing.assert_allclose(g_m, fd_m, atol=1e-5)
    np.testing.assert_allclose(g_v, fd_v, atol=1e-5)


def test_gaussian_quadrature_agrees_with_closed_form():
    rng = np.random.default_rng(9)
    lik = Gaussian(0.6)
    y = rng.normal(size=30)
    m = rng.normal(size=30)
    v = rng.uniform(0.2, 1.5, size=30)
    closed = expected_log_lik(lik, y, m, v)
    quad = expected_log_lik(lik, y, m, v, order=40, force_quadrature=True)
    np.testing.assert_allclose(quad, closed, atol=1e-10)
    gm_c, gv_c = elik_grads(lik, y, m, v)
    gm_q, gv_q = elik_grads(lik, y, m, v, order=40, force_quadrature=True)
    np.testing.assert_allclose(gm_q, gm_c, atol=1e-10)
    np.testing.assert_allclose(gv_q, gv_c, atol=1e-8)


def test_invalid_parameters_rejected():
    with pytest.raises(DomainError):
        Gaussian(0.0)
    with pytest.raises(DomainError):
        Poisson(binsize=-1.0)
    with pytest.raises(DomainError):
        expected_log_lik(Gaussian(1.0), 0.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        nlpd(Poisson(), 1.0, 0.0, -0.5)


def test_poisson_binsize_shifts_rate():
    lik = Poisson(binsize=2.0)
    # log p(y | f) with rate 2 e^f
    assert abs(lik.log_density(1.0, 0.0) - (np.log(2.0) - 2.0)) < 1e-12


def test_bernoulli_log_density_symmetry():
    lik = Bernoulli()
    f = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(lik.log_density(1.0, f),
                               lik.log_density(0.0, -f), atol=1e-12)
