"""Brute-force dense references for testing. Not wired into the CLI.

Everything here builds and factors full N×N grams, so callers keep N ≤ 256.
The production path never imports this module; tests pair its outputs with
the state-space implementations to certify exactness claims.
"""

import numpy as np
from scipy.linalg import cho_solve

from .errors import UsageError
from .gaussians import (GaussianParams, cholesky_factor, convert_params,
                        mvn_logpdf)
from .likelihoods import Gaussian, elik_grads

_ORACLE_CAP = 256


def _check_cap(n):
    if n > _ORACLE_CAP:
        raise UsageError(f"dense oracle capped at N={_ORACLE_CAP}, got {n}")


def _dense_noise(V, n):
    V = np.asarray(V, float)
    return np.diag(V) if V.ndim == 1 else V


def dense_regression(K_ff, Y, V, mask=None):
    """Exact GP regression against noisy observations.

    Returns the posterior mean/cov over all N latent points and
    log N(Y_obs | 0, K_obs + V_obs); masked rows are excluded entirely.
    """
    K_ff = np.asarray(K_ff, float)
    Y = np.asarray(Y, float)
    N = K_ff.shape[0]
    _check_cap(N)
    idx = np.flatnonzero(np.ones(N, bool) if mask is None else np.asarray(mask, bool))
    if idx.size == 0:
        return np.zeros(N), K_ff.copy(), 0.0
    Ko = K_ff[np.ix_(idx, idx)]
    Vo = _dense_noise(V, idx.size)
    if Vo.shape[0] == N and idx.size != N:
        Vo = Vo[np.ix_(idx, idx)]
    S = Ko + Vo
    C = cholesky_factor(S, name="K+V")
    yo = Y[idx]
    logml = mvn_logpdf(yo, np.zeros(idx.size), S, name="K+V")
    Kxo = K_ff[:, idx]
    alpha = cho_solve((C, True), yo)
    mean = Kxo @ alpha
    cov = K_ff - Kxo @ cho_solve((C, True), Kxo.T)
    return mean, 0.5 * (cov + cov.T), float(logml)


def dense_vgp_natgrad_step(q: GaussianParams, K_ff, y, lik, beta,
                           order=20) -> GaussianParams:
    """One natural-gradient VI step λ ← λ + β·dL/dµ on the joint q(f).

    q is in moment form; the factorized likelihood contributes site
    gradients on the diagonal. Returns the updated q in moment form.
    """
    K_ff = np.asarray(K_ff, float)
    _check_cap(K_ff.shape[0])
    q = convert_params(q, "moment")
    m, P = q.a, q.b
    g_m, g_v = elik_grads(lik, np.asarray(y, float), m, np.diag(P), order=order)

    CK = cholesky_factor(K_ff, name="K_ff")
    Kinv = cho_solve((CK, True), np.eye(K_ff.shape[0]))
    CP = cholesky_factor(P, name="P")
    Pinv = cho_solve((CP, True), np.eye(P.shape[0]))

    dLdm = g_m - Kinv @ m
    dLdP = np.diag(g_v) - 0.5 * (Kinv - Pinv)
    lam1 = Pinv @ m + beta * (dLdm - 2.0 * dLdP @ m)
    lam2 = -0.5 * Pinv + beta * dLdP
    out = GaussianParams(lam1, 0.5 * (lam2 + lam2.T), "natural")
    return convert_params(out, "moment")


def dense_svgp(K_zz, K_zx, kxx_diag, y, noise_variance):
    """Collapsed SVGP with the optimal q(u) for a Gaussian likelihood.

    Returns (m_u, S_u, collapsed ELBO) with
        Σ   = K_zz + σ⁻² K_zx K_xz
        m_u = σ⁻² K_zz Σ⁻¹ K_zx y
        S_u = K_zz Σ⁻¹ K_zz
        L   = log N(y | 0, Q_ff + σ²I) − tr(K_ff − Q_ff)/(2σ²).
    """
    K_zz = np.asarray(K_zz, float)
    K_zx = np.asarray(K_zx, float)
    y = np.asarray(y, float)
    _check_cap(y.shape[0])
    s2 = float(noise_variance)

    Sigma = K_zz + (K_zx @ K_zx.T) / s2
    CS = cholesky_factor(Sigma, name="Sigma")
    m_u = K_zz @ cho_solve((CS, True), K_zx @ y) / s2
    S_u = K_zz @ cho_solve((CS, True), K_zz)
    S_u = 0.5 * (S_u + S_u.T)

    CZ = cholesky_factor(K_zz, name="K_zz")
    Q_ff = K_zx.T @ cho_solve((CZ, True), K_zx)
    n = y.shape[0]
    logml = mvn_logpdf(y, np.zeros(n), Q_ff + s2 * np.eye(n), name="Qff+s2I")
    trace = np.sum(np.asarray(kxx_diag, float) - np.diag(Q_ff))
    return m_u, S_u, float(logml - trace / (2.0 * s2))


def dense_conditional_marginals(K_zz, K_qz, kqq_diag, m_u, S_u):
    """Marginals of ∫ p(f_q | u) q(u) du for arbitrary q(u) = N(m_u, S_u).

    mean = A m_u, var = k_qq − diag(A K_zq) + diag(A S_u Aᵀ), A = K_qz K_zz⁻¹.
    """
    CZ = cholesky_factor(np.asarray(K_zz, float), name="K_zz")
    A = cho_solve((CZ, True), np.asarray(K_qz, float).T).T
    mean = A @ np.asarray(m_u, float)
    var = (np.asarray(kqq_diag, float) - np.sum(A * K_qz, axis=1)
           + np.sum((A @ S_u) * A, axis=1))
    return mean, var
