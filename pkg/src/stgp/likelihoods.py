"""Observation models and their Gaussian-expectation calculus.

Each likelihood exposes log_density(y, f) plus its first two derivatives in
f; expected log-likelihoods, their gradients with respect to the marginal
mean/variance, and predictive NLPD are computed in closed form for the
Gaussian case and by Gauss-Hermite quadrature otherwise:

    E[g(f)] ≈ Σ_i w_i/√π · g(m + √(2v)·x_i)

with (x_i, w_i) the Hermite nodes/weights. Gradients use the identities
∂E/∂m = E[∂log p/∂f] and ∂E/∂v = ½·E[∂²log p/∂f²].
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, log_ndtr, logsumexp
from scipy.stats import norm

from .errors import DomainError

TRAIN_QUAD_ORDER = 20
NLPD_QUAD_ORDER = 100


@dataclass(frozen=True)
class Gaussian:
    """Homoscedastic Gaussian noise with variance σ_n²."""
    noise_variance: float

    def __post_init__(self):
        if self.noise_variance <= 0:
            raise DomainError("Gaussian noise variance must be positive, "
                              f"got {self.noise_variance}")

    def log_density(self, y, f):
        s2 = self.noise_variance
        return -0.5 * (np.log(2.0 * np.pi * s2) + (y - f) ** 2 / s2)

    def dlog_df(self, y, f):
        return (y - f) / self.noise_variance

    def d2log_df2(self, y, f):
        return np.broadcast_to(-1.0 / self.noise_variance,
                               np.broadcast(y, f).shape).copy()


@dataclass(frozen=True)
class Poisson:
    """Poisson counts with exponential link: rate = exp(f + log binsize)."""
    binsize: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.binsize) or self.binsize <= 0:
            raise DomainError(f"Poisson bin size must be positive and finite, "
                              f"got {self.binsize}")

    def log_density(self, y, f):
        lograte = f + np.log(self.binsize)
        return y * lograte - np.exp(lograte) - gammaln(np.asarray(y) + 1.0)

    def dlog_df(self, y, f):
        return y - np.exp(f + np.log(self.binsize))

    def d2log_df2(self, y, f):
        return -np.exp(f + np.log(self.binsize)) + 0.0 * y


@dataclass(frozen=True)
class Bernoulli:
    """Bernoulli with probit link; y ∈ {0, 1}. Experimental."""

    def log_density(self, y, f):
        z = 2.0 * np.asarray(y) - 1.0
        return log_ndtr(z * f)

    def dlog_df(self, y, f):
        z = 2.0 * np.asarray(y) - 1.0
        u = z * f
        r = np.exp(norm.logpdf(u) - log_ndtr(u))   # inverse Mills ratio
        return z * r

    def d2log_df2(self, y, f):
        z = 2.0 * np.asarray(y) - 1.0
        u = z * f
        r = np.exp(norm.logpdf(u) - log_ndtr(u))
        return -r * (u + r)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights of a given order."""
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @staticmethod
    def gauss_hermite(order):
        x, w = _hermgauss(order)
        return QuadratureRule(order, x, w)

    def expect(self, fun, m, v):
        """E_{N(f|m,v)}[fun(f)], vectorized over trailing-broadcast m, v."""
        m = np.asarray(m, float)
        v = np.asarray(v, float)
        f = m[..., None] + np.sqrt(2.0 * v)[..., None] * self.nodes
        return fun(f) @ (self.weights / np.sqrt(np.pi))


@lru_cache(maxsize=8)
def _hermgauss(order):
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, w


def _check_v(v):
    if np.any(np.asarray(v) <= 0):
        raise DomainError("marginal variance must be positive")


def _rule(order):
    return QuadratureRule.gauss_hermite(order)


def expected_log_lik(lik, y, m, v, order=TRAIN_QUAD_ORDER,
                     force_quadrature=False):
    """E_{N(f|m,v)}[log p(y|f)]; closed form for Gaussian noise."""
    _check_v(v)
    if isinstance(lik, Gaussian) and not force_quadrature:
        s2 = lik.noise_variance
        return -0.5 * np.log(2.0 * np.pi * s2) \
            - ((np.asarray(y, float) - m) ** 2 + v) / (2.0 * s2)
    y = np.asarray(y, float)
    return _rule(order).expect(lambda f: lik.log_density(y[..., None], f),
                               m, v)


def elik_grads(lik, y, m, v, order=TRAIN_QUAD_ORDER, force_quadrature=False):
    """(∂E/∂m, ∂E/∂v) of the expected log-likelihood."""
    _check_v(v)
    if isinstance(lik, Gaussian) and not force_quadrature:
        s2 = lik.noise_variance
        g_m = (np.asarray(y, float) - m) / s2
        g_v = np.broadcast_to(-0.5 / s2, np.shape(g_m)).copy() \
            if np.shape(g_m) else -0.5 / s2
        return g_m, g_v
    y = np.asarray(y, float)
    rule = _rule(order)
    g_m = rule.expect(lambda f: lik.dlog_df(y[..., None], f), m, v)
    g_v = 0.5 * rule.expect(lambda f: lik.d2log_df2(y[..., None], f), m, v)
    return g_m, g_v


def nlpd(lik, y, m, v, order=NLPD_QUAD_ORDER):
    """−log ∫ p(y|f) N(f|m,v) df per point (vectorized)."""
    _check_v(v)
    if isinstance(lik, Gaussian):
        s2 = v + lik.noise_variance
        return 0.5 * (np.log(2.0 * np.pi * s2)
                      + (np.asarray(y, float) - m) ** 2 / s2)
    y = np.asarray(y, float)
    m = np.asarray(m, float)
    v = np.asarray(v, float)
    rule = _rule(order)
    f = m[..., None] + np.sqrt(2.0 * v)[..., None] * rule.nodes
    logp = lik.log_density(y[..., None], f)
    return -logsumexp(logp + np.log(rule.weights) - 0.5 * np.log(np.pi),
                      axis=-1)
