"""Spatial inducing points: sparse projections, block sites, sparse training.

The state is reduced to one temporal process per spatial inducing point.
Function values at data sites are recovered through the conditional

    m_{n,k} = W_k m_n⁽ᵘ⁾,   P_{n,k} = W_k P_n⁽ᵘ⁾ W_kᵀ + σ²·q̃_k,

with W = K⁽ˢ⁾_SZ K⁽ˢ⁾_ZZ⁻¹ and q̃ the spatial conditional variances. The
approximate likelihood consequently factorizes across time but not space:
one M_s×M_s natural-parameter block per step.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .cvi import (SITE_PREC_EPS, FitOptions, FitState, SiteMarginals,
                  _run_filter, pack_hypers, run_fit, unpack_hypers)
from .errors import NumericalError, UsageError
from .gaussians import cholesky_factor
from .kernels import MarkovKernelSS, SpatialKernel, assemble_sparse, spatial_gram
from .likelihoods import elik_grads, expected_log_lik
from .state_space import PseudoObservations


@dataclass(frozen=True)
class SparseProjection:
    """W = K_SZ K_ZZ⁻¹ and per-site conditional variances q̃ ≥ 0."""
    Z: np.ndarray             # M_s × D_s
    W: np.ndarray             # N_s × M_s
    qtilde: np.ndarray        # N_s


def build_projection(ks: SpatialKernel, S, Z) -> SparseProjection:
    """Project data sites onto the inducing set via the K_ZZ Cholesky."""
    S = np.atleast_2d(np.asarray(S, float))
    Z = np.atleast_2d(np.asarray(Z, float))
    K_zz = spatial_gram(ks, Z)
    K_sz = spatial_gram(ks, S, Z)
    C = cholesky_factor(K_zz, name="K_zz")
    W = cho_solve((C, True), K_sz.T).T
    qtilde = 1.0 - np.sum(W * K_sz, axis=1)      # unit spatial variance
    if np.min(qtilde) < -1e-10:
        raise NumericalError(
            f"negative conditional variance {np.min(qtilde):.3e}; "
            "inducing set is numerically degenerate")
    return SparseProjection(Z, W, np.maximum(qtilde, 0.0))


@dataclass(frozen=True)
class BlockApproxLikelihood:
    """Per-time-step natural-parameter blocks over the inducing values."""
    lam1: np.ndarray          # N_t × M_s
    lam2: np.ndarray          # N_t × M_s × M_s
    informative: np.ndarray   # N_t bool

    @staticmethod
    def zero(num_steps, num_inducing):
        return BlockApproxLikelihood(
            np.zeros((num_steps, num_inducing)),
            np.zeros((num_steps, num_inducing, num_inducing)),
            np.zeros(num_steps, bool))


def block_to_pseudo(bank: BlockApproxLikelihood) -> PseudoObservations:
    """Ṽ_n = (−2λ̃²_n)⁻¹, Ỹ_n = Ṽ_n λ̃¹_n per informative block."""
    N, M = bank.lam1.shape
    V = np.tile(np.eye(M), (N, 1, 1))
    y = np.zeros((N, M))
    mask = np.zeros((N, M), bool)
    for n in np.flatnonzero(bank.informative):
        C = cholesky_factor(-2.0 * bank.lam2[n], name="-2·lambda2")
        V[n] = cho_solve((C, True), np.eye(M))
        V[n] = 0.5 * (V[n] + V[n].T)
        y[n] = V[n] @ bank.lam1[n]
        mask[n] = True
    return PseudoObservations(y, V, mask)


def sparse_marginal(proj: SparseProjection, kt: MarkovKernelSS, m_u, P_u):
    """Site marginals from inducing marginals q(u_n) = N(m_u, P_u).

    Vectorized over steps: m_u is N_t × M_s, P_u is N_t × M_s × M_s.
    """
    mean = m_u @ proj.W.T
    var = np.einsum("km,nml,kl->nk", proj.W, P_u, proj.W) \
        + kt.variance * proj.qtilde[None, :]
    return SiteMarginals(mean, var)


def sparse_cvi_step(bank: BlockApproxLikelihood, proj: SparseProjection,
                    m_u, site: SiteMarginals, Y, mask, lik, beta,
                    order=20) -> BlockApproxLikelihood:
    """Damped natural-gradient update of the per-step blocks.

    Gradients chain through the site marginals: g(m⁽ᵘ⁾) += W_kᵀ g_m and
    g(P⁽ᵘ⁾) += W_kᵀ g_v W_k over observed sites k of each step.
    """
    if not 0.0 <= beta <= 1.0:
        raise UsageError(f"beta must lie in [0, 1], got {beta}")
    if beta == 0.0:
        return bank
    obs = np.asarray(mask, bool)
    Yf = np.asarray(Y, float)
    g_m = np.zeros(obs.shape)
    g_v = np.zeros(obs.shape)
    g_m[obs], g_v[obs] = elik_grads(lik, Yf[obs], site.mean[obs],
                                    site.var[obs], order=order)
    gm_u = g_m @ proj.W                                   # N_t × M_s
    gP_u = np.einsum("km,nk,kl->nml", proj.W, g_v, proj.W)

    step_obs = obs.any(axis=1)
    lam1 = bank.lam1.copy()
    lam2 = bank.lam2.copy()
    lam1[step_obs] = (1.0 - beta) * bank.lam1[step_obs] + beta * (
        gm_u[step_obs]
        - 2.0 * np.einsum("nml,nl->nm", gP_u[step_obs], m_u[step_obs]))
    lam2[step_obs] = (1.0 - beta) * bank.lam2[step_obs] + beta * gP_u[step_obs]
    for n in np.flatnonzero(step_obs):
        lam2[n] = _clamp_neg_def(lam2[n])
    return BlockApproxLikelihood(lam1, lam2, bank.informative | step_obs)


def _clamp_neg_def(block):
    """Clip eigenvalues at −ε so the block stays negative definite."""
    w, U = np.linalg.eigh(0.5 * (block + block.T))
    if np.all(w <= -SITE_PREC_EPS):
        return block
    w = np.minimum(w, -SITE_PREC_EPS)
    return (U * w) @ U.T


def sparse_elbo_from_smoothed(bank: BlockApproxLikelihood, pseudo,
                              proj: SparseProjection, kt, loglik, m_u, P_u,
                              Y, mask, lik, order=20):
    """Sparse ELBO terms given already-smoothed inducing marginals."""
    site = sparse_marginal(proj, kt, m_u, P_u)

    obs = np.asarray(mask, bool)
    term1 = float(np.sum(expected_log_lik(
        lik, np.asarray(Y, float)[obs], site.mean[obs], site.var[obs],
        order=order))) if obs.any() else 0.0

    term2 = 0.0
    M = bank.lam1.shape[1]
    for n in np.flatnonzero(bank.informative):
        Vn, yn = pseudo.V[n], pseudo.y[n]
        C = cholesky_factor(Vn, name="V_n")
        r = yn - m_u[n]
        z = np.linalg.solve(C, r)
        Vinv = cho_solve((C, True), np.eye(M))
        e_pseudo = -0.5 * (M * np.log(2.0 * np.pi)
                           + 2.0 * np.sum(np.log(np.diag(C)))
                           + z @ z + np.sum(Vinv * P_u[n]))
        term2 -= e_pseudo
    return term1 + term2 + loglik


def sparse_elbo(model, bank: BlockApproxLikelihood, proj: SparseProjection,
                Y, mask, lik, order=20, mode="sequential"):
    """Three-term sparse ELBO with the block trace in the pseudo term."""
    pseudo = block_to_pseudo(bank)
    fr, sm = _run_filter(model, pseudo, mode)
    return sparse_elbo_from_smoothed(bank, pseudo, proj, model.temporal,
                                     fr.loglik, sm.fmeans, sm.fcovs,
                                     Y, mask, lik, order)


def init_inducing(S, num_inducing, seed=0):
    """k-means centers over the spatial inputs."""
    from sklearn.cluster import KMeans
    S = np.atleast_2d(np.asarray(S, float))
    if num_inducing >= S.shape[0]:
        return S.copy()
    km = KMeans(n_clusters=num_inducing, random_state=seed, n_init=10)
    km.fit(S)
    return km.cluster_centers_


@dataclass
class SparseModelFit:
    """Result of sparse_fit(): training state plus prediction inputs."""
    state: FitState
    data: object
    Z: np.ndarray
    kt0: MarkovKernelSS
    ks0: SpatialKernel
    lik0: object
    opts: FitOptions

    def current(self):
        kt, ks, lik = unpack_hypers(
            [n for n in self.state.names if not n.startswith("z_")],
            [th for n, th in zip(self.state.names, self.state.theta)
             if not n.startswith("z_")],
            self.kt0, self.ks0, self.lik0)
        Z = self._z_from_theta()
        return kt, ks, lik, Z

    def _z_from_theta(self):
        zvals = [th for n, th in zip(self.state.names, self.state.theta)
                 if n.startswith("z_")]
        if not zvals:
            return self.Z
        return np.asarray(zvals, float).reshape(self.Z.shape)


def sparse_fit(data, kt: MarkovKernelSS, ks: SpatialKernel, lik, Z,
               opts: FitOptions = None, learn_z=False) -> SparseModelFit:
    """Train the sparse model with fixed or jointly-optimized Z_s."""
    opts = opts or FitOptions()
    Z = np.atleast_2d(np.asarray(Z, float))
    names, theta0 = pack_hypers(kt, ks, lik)
    n_h = len(names)
    if learn_z:
        # inducing coordinates ride along unconstrained (not log-domain)
        names = names + [f"z_{i}_{j}" for i in range(Z.shape[0])
                         for j in range(Z.shape[1])]
        theta0 = np.concatenate([theta0, Z.reshape(-1)])

    def build(theta):
        kt2, ks2, lik2 = unpack_hypers(names[:n_h], theta[:n_h], kt, ks, lik)
        Z2 = theta[n_h:].reshape(Z.shape) if learn_z else Z
        model = assemble_sparse(kt2, ks2, Z2, data.t)
        proj = build_projection(ks2, data.S, Z2)
        return model, proj, lik2

    def cvi_sweep(bundle, bank, beta):
        model, proj, lik2 = bundle
        _, sm = _run_filter(model, block_to_pseudo(bank), opts.filter_mode)
        site = sparse_marginal(proj, model.temporal, sm.fmeans, sm.fcovs)
        return sparse_cvi_step(bank, proj, sm.fmeans, site, data.Y,
                               data.mask, lik2, beta, opts.quad_order)

    def objective(bundle, bank):
        model, proj, lik2 = bundle
        return sparse_elbo(model, bank, proj, data.Y, data.mask, lik2,
                           opts.quad_order, opts.filter_mode)

    bank0 = BlockApproxLikelihood.zero(data.num_steps, Z.shape[0])
    state = run_fit(build, cvi_sweep, objective, names, theta0, bank0, opts)
    return SparseModelFit(state, data, Z, kt, ks, lik, opts)


def sparse_predict(fitres: SparseModelFit, t_query, S_query=None):
    """(mean, variance) at arbitrary spatial locations and query times."""
    data = fitres.data
    kt2, ks2, _, Z2 = fitres.current()
    S_query = data.S if S_query is None \
        else np.atleast_2d(np.asarray(S_query, float))
    t_query = np.atleast_1d(np.asarray(t_query, float))

    t_all = np.union1d(data.t, t_query)
    model = assemble_sparse(kt2, ks2, Z2, t_all)
    proj_q = build_projection(ks2, S_query, Z2)

    bank = fitres.state.bank
    pos = np.searchsorted(t_all, data.t)
    M = bank.lam1.shape[1]
    lam1 = np.zeros((t_all.size, M))
    lam2 = np.zeros((t_all.size, M, M))
    informative = np.zeros(t_all.size, bool)
    lam1[pos] = bank.lam1
    lam2[pos] = bank.lam2
    informative[pos] = bank.informative
    expanded = BlockApproxLikelihood(lam1, lam2, informative)

    _, sm = _run_filter(model, block_to_pseudo(expanded),
                        fitres.opts.filter_mode)
    qpos = np.searchsorted(t_all, t_query)
    site = sparse_marginal(proj_q, model.temporal,
                           sm.fmeans[qpos], sm.fcovs[qpos])
    return site.mean, site.var
