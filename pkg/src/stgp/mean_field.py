"""Spatial mean-field approximation via a decoupled reformulation.

The Kronecker model is rewritten in whitened coordinates x = (C ⊗ I) x̄
with C the Cholesky factor of the spatial gram. The reformulated chain has
transition I ⊗ A_t, noise I ⊗ Q_t and prior I ⊗ P∞, so the exact state
covariances are block-diagonal only when the spatial gram is; the mean-field
approximation forces that pattern by zeroing cross-blocks after every
predict, update and combine. Function reads keep the full emission
C ⊗ H_t, so the spatial mixing survives in the marginals.

Reformulation alone is exact: with the projection disabled it reproduces
the coupled model, projection changes nothing when the spatial gram is
diagonal (and in particular for a single site).
"""

from dataclasses import dataclass

import numpy as np

from .cvi import (SEQUENTIAL, ApproxLikelihoodBank, FitOptions, FitState,
                  SiteMarginals, bank_to_pseudo, cvi_step, elbo_from_smoothed,
                  pack_hypers, run_fit, unpack_hypers)
from .gaussians import cholesky_factor
from .kernels import (DiscreteSTModel, MarkovKernelSS, SpatialKernel,
                      assemble_full, assemble_sparse)
from .sparse import (BlockApproxLikelihood, block_to_pseudo,
                     build_projection, sparse_cvi_step,
                     sparse_elbo_from_smoothed, sparse_marginal)
from .state_space import (parallel_filter, parallel_smoother, rts_smoother,
                          sequential_filter)


@dataclass(frozen=True)
class MFModel:
    """Decoupled chain: one independent temporal process per spatial point."""
    base: DiscreteSTModel
    A: np.ndarray               # N_t × d × d, I ⊗ A_t
    Q: np.ndarray               # N_t × d × d, I ⊗ Q_t
    H: np.ndarray               # G × d, C ⊗ H_t (full mixing)
    P0: np.ndarray              # d × d, I ⊗ P∞
    C: np.ndarray               # G × G lower Cholesky of the spatial gram
    block: np.ndarray           # d × d bool, the admissible sparsity pattern

    @property
    def t(self):
        return self.base.t

    @property
    def temporal(self):
        return self.base.temporal

    @property
    def num_steps(self):
        return self.base.num_steps

    @property
    def num_points(self):
        return self.base.num_points

    @property
    def state_dim(self):
        return self.A.shape[1]

    @property
    def m0(self):
        return np.zeros(self.state_dim)

    def project(self, P):
        """Zero every cross-block of a (batched) state covariance."""
        return P * self.block


def reformulate(model: DiscreteSTModel) -> MFModel:
    """Exact whitened restatement of a coupled Kronecker model."""
    kt = model.temporal
    dt = kt.dim
    G = model.num_points
    C = cholesky_factor(model.K_ss, name="spatial gram")
    I_G = np.eye(G)

    # K_ss has unit diagonal, so the (0,0) block of K⊗Q_t is Q_t itself
    Q = np.empty_like(model.Q)
    for n in range(model.num_steps):
        Q[n] = np.kron(I_G, model.Q[n][:dt, :dt])

    H = np.kron(C, kt.H)
    P0 = np.kron(I_G, kt.Pinf)
    block = np.kron(np.eye(G, dtype=bool), np.ones((dt, dt), bool))
    return MFModel(base=model, A=model.A, Q=Q, H=H, P0=P0, C=C, block=block)


def mf_filter_smoother(mf: MFModel, pseudo, mode=SEQUENTIAL):
    """Filter + smoother with the block-diagonal projection enforced."""
    if mode == "parallel":
        fr = parallel_filter(mf, pseudo, project=mf.project)
        return fr, parallel_smoother(mf, fr, project=mf.project)
    fr = sequential_filter(mf, pseudo, project=mf.project)
    return fr, rts_smoother(mf, fr, project=mf.project)


def mf_posterior(mf: MFModel, bank: ApproxLikelihoodBank, mode=SEQUENTIAL):
    _, sm = mf_filter_smoother(mf, bank_to_pseudo(bank), mode)
    return sm, SiteMarginals(sm.fmeans, np.asarray(sm.fvars))


def mf_elbo(mf: MFModel, bank: ApproxLikelihoodBank, Y, mask, lik,
            order=20, mode=SEQUENTIAL):
    pseudo = bank_to_pseudo(bank)
    fr, sm = mf_filter_smoother(mf, pseudo, mode)
    return elbo_from_smoothed(bank, pseudo, fr.loglik, sm.fmeans,
                              np.asarray(sm.fvars), Y, mask, lik, order)


@dataclass
class MFModelFit:
    """Result of mf_fit(); Z is None for the non-sparse variant."""
    state: FitState
    data: object
    Z: np.ndarray
    kt0: MarkovKernelSS
    ks0: SpatialKernel
    lik0: object
    opts: FitOptions

    def current(self):
        return unpack_hypers(self.state.names, self.state.theta,
                             self.kt0, self.ks0, self.lik0)


def mf_fit(data, kt: MarkovKernelSS, ks: SpatialKernel, lik,
           opts: FitOptions = None, Z=None) -> MFModelFit:
    """Train under the mean-field approximation, full or sparse."""
    opts = opts or FitOptions()
    names, theta0 = pack_hypers(kt, ks, lik)
    if Z is not None:
        Z = np.atleast_2d(np.asarray(Z, float))

    if Z is None:
        def build(theta):
            kt2, ks2, lik2 = unpack_hypers(names, theta, kt, ks, lik)
            return reformulate(assemble_full(kt2, ks2, data.S, data.t)), lik2

        def cvi_sweep(bundle, bank, beta):
            mf, lik2 = bundle
            _, site = mf_posterior(mf, bank, opts.filter_mode)
            return cvi_step(bank, site, data.Y, data.mask, lik2, beta,
                            opts.quad_order)

        def objective(bundle, bank):
            mf, lik2 = bundle
            return mf_elbo(mf, bank, data.Y, data.mask, lik2,
                           opts.quad_order, opts.filter_mode)

        bank0 = ApproxLikelihoodBank.zero(data.num_steps, data.num_sites)
    else:
        def build(theta):
            kt2, ks2, lik2 = unpack_hypers(names, theta, kt, ks, lik)
            mf = reformulate(assemble_sparse(kt2, ks2, Z, data.t))
            return mf, build_projection(ks2, data.S, Z), lik2

        def cvi_sweep(bundle, bank, beta):
            mf, proj, lik2 = bundle
            _, sm = mf_filter_smoother(mf, block_to_pseudo(bank),
                                       opts.filter_mode)
            site = sparse_marginal(proj, mf.temporal, sm.fmeans, sm.fcovs)
            return sparse_cvi_step(bank, proj, sm.fmeans, site, data.Y,
                                   data.mask, lik2, beta, opts.quad_order)

        def objective(bundle, bank):
            mf, proj, lik2 = bundle
            pseudo = block_to_pseudo(bank)
            fr, sm = mf_filter_smoother(mf, pseudo, opts.filter_mode)
            return sparse_elbo_from_smoothed(
                bank, pseudo, proj, mf.temporal, fr.loglik,
                sm.fmeans, sm.fcovs, data.Y, data.mask, lik2, opts.quad_order)

        bank0 = BlockApproxLikelihood.zero(data.num_steps, Z.shape[0])

    state = run_fit(build, cvi_sweep, objective, names, theta0, bank0, opts)
    return MFModelFit(state, data, Z, kt, ks, lik, opts)


def mf_predict(fitres: MFModelFit, t_query, S_query=None):
    """Mean-field (mean, variance); off-grid space needs the sparse variant."""
    data = fitres.data
    kt2, ks2, _ = fitres.current()
    t_query = np.atleast_1d(np.asarray(t_query, float))
    t_all = np.union1d(data.t, t_query)
    pos = np.searchsorted(t_all, data.t)
    qpos = np.searchsorted(t_all, t_query)
    bank = fitres.state.bank

    if fitres.Z is None:
        if S_query is not None:
            return _grid_check_and_predict(fitres, t_query, S_query)
        mf = reformulate(assemble_full(kt2, ks2, data.S, t_all))
        lam1 = np.zeros((t_all.size, data.num_sites))
        lam2 = np.zeros_like(lam1)
        informative = np.zeros(lam1.shape, bool)
        lam1[pos], lam2[pos] = bank.lam1, bank.lam2
        informative[pos] = bank.informative
        expanded = ApproxLikelihoodBank(lam1, lam2, informative)
        _, sm = mf_filter_smoother(mf, bank_to_pseudo(expanded),
                                   fitres.opts.filter_mode)
        return sm.fmeans[qpos], np.asarray(sm.fvars)[qpos]

    S_query = data.S if S_query is None \
        else np.atleast_2d(np.asarray(S_query, float))
    mf = reformulate(assemble_sparse(kt2, ks2, fitres.Z, t_all))
    proj_q = build_projection(ks2, S_query, fitres.Z)
    M = bank.lam1.shape[1]
    lam1 = np.zeros((t_all.size, M))
    lam2 = np.zeros((t_all.size, M, M))
    informative = np.zeros(t_all.size, bool)
    lam1[pos], lam2[pos] = bank.lam1, bank.lam2
    informative[pos] = bank.informative
    expanded = BlockApproxLikelihood(lam1, lam2, informative)
    _, sm = mf_filter_smoother(mf, block_to_pseudo(expanded),
                               fitres.opts.filter_mode)
    site = sparse_marginal(proj_q, mf.temporal,
                           sm.fmeans[qpos], sm.fcovs[qpos])
    return site.mean, site.var


def _grid_check_and_predict(fitres, t_query, S_query):
    from .errors import UsageError
    data = fitres.data
    S_query = np.atleast_2d(np.asarray(S_query, float))
    train = {tuple(row) for row in np.atleast_2d(data.S)}
    if any(tuple(row) not in train for row in S_query):
        raise UsageError("mean-field predict only covers the training "
                         "spatial grid; pass Z for off-grid locations")
    mean, var = mf_predict(fitres, t_query, None)
    rows = [tuple(row) for row in np.atleast_2d(data.S)]
    idx = [rows.index(tuple(row)) for row in S_query]
    return mean[:, idx], var[:, idx]
