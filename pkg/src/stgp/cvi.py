"""Natural-gradient variational inference via conjugate updates (CVI).

The non-conjugate likelihood is replaced per site by a Gaussian pseudo
observation N(Ỹ_{n,k} | f_{n,k}, Ṽ_{n,k}) whose natural parameters follow

    λ̃ ← (1−β) λ̃ + β · [g(m) − 2 g(P) m, g(P)]

with (g(m), g(P)) the gradients of the expected log-likelihood at the
current posterior marginals. Each sweep is then ordinary Kalman smoothing
against the pseudo data, and the ELBO splits into three terms: expected
log-likelihood, minus the expected pseudo log-likelihood, plus the filter
log marginal likelihood.

Hyperparameters are optimized in the log domain with Adam; their gradient
holds the pseudo-likelihood bank fixed and re-runs the smoother per probe
(central finite differences).
"""

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import NumericalError, UsageError
from .kernels import (MarkovKernelSS, SpatialKernel, assemble_full,
                      build_temporal_ss)
from .likelihoods import Gaussian, elik_grads, expected_log_lik
from .state_space import (PseudoObservations, parallel_filter,
                          parallel_smoother, rts_smoother, sequential_filter)

# site precisions are clamped at −SITE_PREC_EPS so Ṽ stays finite positive
SITE_PREC_EPS = 1e-8

SEQUENTIAL = "sequential"
PARALLEL = "parallel"


@dataclass(frozen=True)
class ApproxLikelihoodBank:
    """Per-site natural parameters of the approximate likelihood.

    Sites start at exactly zero information and are marked informative on
    their first update; masked sites stay uninformative forever.
    """
    lam1: np.ndarray          # N_t × G
    lam2: np.ndarray          # N_t × G, ≤ −ε where informative
    informative: np.ndarray   # N_t × G bool

    @staticmethod
    def zero(num_steps, num_sites):
        return ApproxLikelihoodBank(
            np.zeros((num_steps, num_sites)),
            np.zeros((num_steps, num_sites)),
            np.zeros((num_steps, num_sites), bool))


class SiteMarginals(NamedTuple):
    mean: np.ndarray          # N_t × G
    var: np.ndarray           # N_t × G


def bank_to_pseudo(bank: ApproxLikelihoodBank) -> PseudoObservations:
    """Ṽ = (−2λ̃²)⁻¹ and Ỹ = Ṽλ̃¹; uninformative sites become missing."""
    V = np.ones_like(bank.lam1)
    np.divide(1.0, -2.0 * bank.lam2, out=V, where=bank.informative)
    y = np.where(bank.informative, V * bank.lam1, 0.0)
    return PseudoObservations(y, V, bank.informative.copy())


def cvi_step(bank: ApproxLikelihoodBank, marginals: SiteMarginals, Y, mask,
             lik, beta, order=20) -> ApproxLikelihoodBank:
    """One damped natural-gradient update of every observed site."""
    if not 0.0 <= beta <= 1.0:
        raise UsageError(f"beta must lie in [0, 1], got {beta}")
    if beta == 0.0:
        return bank
    obs = np.asarray(mask, bool)
    m = marginals.mean[obs]
    v = marginals.var[obs]
    g_m, g_v = elik_grads(lik, np.asarray(Y, float)[obs], m, v, order=order)

    lam1 = bank.lam1.copy()
    lam2 = bank.lam2.copy()
    lam1[obs] = (1.0 - beta) * bank.lam1[obs] + beta * (g_m - 2.0 * g_v * m)
    lam2[obs] = np.minimum((1.0 - beta) * bank.lam2[obs] + beta * g_v,
                           -SITE_PREC_EPS)
    informative = bank.informative | obs
    return ApproxLikelihoodBank(lam1, lam2, informative)


def _run_filter(model, pseudo, mode):
    if mode == PARALLEL:
        fr = parallel_filter(model, pseudo)
        return fr, parallel_smoother(model, fr)
    fr = sequential_filter(model, pseudo)
    return fr, rts_smoother(model, fr)


def posterior(model, bank: ApproxLikelihoodBank, mode=SEQUENTIAL):
    """Smoothed state marginals plus per-site (mean, variance) reads."""
    _, sm = _run_filter(model, bank_to_pseudo(bank), mode)
    return sm, SiteMarginals(sm.fmeans, np.asarray(sm.fvars))


def elbo_from_smoothed(bank, pseudo, loglik, m, v, Y, mask, lik, order=20):
    """ELBO terms given already-smoothed site marginals (m, v)."""
    obs = np.asarray(mask, bool)
    term1 = float(np.sum(expected_log_lik(
        lik, np.asarray(Y, float)[obs], m[obs], v[obs], order=order))) \
        if obs.any() else 0.0

    inf = bank.informative
    if inf.any():
        Vt = pseudo.V[inf]
        Yt = pseudo.y[inf]
        e_pseudo = -0.5 * np.log(2.0 * np.pi * Vt) \
            - ((Yt - m[inf]) ** 2 + v[inf]) / (2.0 * Vt)
        term2 = -float(np.sum(e_pseudo))
    else:
        term2 = 0.0
    return term1 + term2 + loglik


def elbo(model, bank: ApproxLikelihoodBank, Y, mask, lik, order=20,
         mode=SEQUENTIAL):
    """Three-term ELBO: E[log p] − E[log pseudo] + filter log-lik."""
    pseudo = bank_to_pseudo(bank)
    fr, sm = _run_filter(model, pseudo, mode)
    return elbo_from_smoothed(bank, pseudo, fr.loglik, sm.fmeans,
                              np.asarray(sm.fvars), Y, mask, lik, order)


@dataclass
class FitOptions:
    """Knobs of the training loop (Algorithm-1 style alternation)."""
    beta: float = 1.0             # natural-gradient rate; 0.1 for non-conjugate
    rho: float = 0.01             # Adam rate on log-hyperparameters; 0 disables
    iters: int = 100
    quad_order: int = 20
    filter_mode: str = SEQUENTIAL
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    fd_rel_step: float = 1e-4

    def __post_init__(self):
        if self.beta < 0 or self.beta > 1:
            raise UsageError(f"beta must lie in [0, 1], got {self.beta}")
        if self.rho < 0:
            raise UsageError(f"rho must be nonnegative, got {self.rho}")
        if self.filter_mode not in (SEQUENTIAL, PARALLEL):
            raise UsageError(f"unknown filter mode: {self.filter_mode!r}")


@dataclass
class FitState:
    """Mutable training state: log-hyperparameters, bank, Adam moments."""
    names: list
    theta: np.ndarray             # log-domain hyperparameters
    bank: object
    adam_m: np.ndarray
    adam_v: np.ndarray
    iteration: int = 0
    elbo_trace: list = field(default_factory=list)
    iter_seconds: list = field(default_factory=list)

    def hypers(self):
        return dict(zip(self.names, np.exp(self.theta)))


def hyper_grad(objective: Callable, theta, names=None, rel_step=1e-4):
    """∂objective/∂θ by central differences, h_i = rel_step·max(1, |θ_i|)."""
    theta = np.asarray(theta, float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        f_up, f_dn = objective(up), objective(dn)
        if not (np.isfinite(f_up) and np.isfinite(f_dn)):
            coord = names[i] if names else f"theta[{i}]"
            raise NumericalError(
                f"non-finite ELBO while probing gradient of {coord}",
                diagnostics={"coordinate": coord, "theta": theta.tolist()})
        g[i] = (f_up - f_dn) / (2.0 * h)
    return g


def run_fit(build, cvi_sweep, objective, names, theta0, bank0,
            opts: FitOptions) -> FitState:
    """Shared training loop: CVI step, then Adam step on θ, per iteration.

    build(θ) returns whatever bundle cvi_sweep/objective need; the bank is
    held fixed through the hyperparameter probes.
    """
    state = FitState(list(names), np.asarray(theta0, float).copy(), bank0,
                     np.zeros(len(theta0)), np.zeros(len(theta0)))
    for it in range(1, opts.iters + 1):
        tic = time.perf_counter()
        bundle = build(state.theta)
        state.bank = cvi_sweep(bundle, state.bank, opts.beta)
        value = objective(bundle, state.bank)
        if not np.isfinite(value):
            raise NumericalError(
                "ELBO became non-finite during fit",
                diagnostics={"iteration": it,
                             "theta": dict(zip(names, np.exp(state.theta))),
                             "elbo_trace": list(state.elbo_trace)})
        state.elbo_trace.append(float(value))
        if opts.rho > 0 and len(theta0):
            bank = state.bank
            g = hyper_grad(lambda th: objective(build(th), bank),
                           state.theta, names, opts.fd_rel_step)
            state.adam_m = opts.adam_beta1 * state.adam_m \
                + (1 - opts.adam_beta1) * g
            state.adam_v = opts.adam_beta2 * state.adam_v \
                + (1 - opts.adam_beta2) * g * g
            mhat = state.adam_m / (1 - opts.adam_beta1 ** it)
            vhat = state.adam_v / (1 - opts.adam_beta2 ** it)
            state.theta = state.theta \
                + opts.rho * mhat / (np.sqrt(vhat) + opts.adam_eps)
        state.iteration = it
        state.iter_seconds.append(time.perf_counter() - tic)
    return state


def pack_hypers(kt: MarkovKernelSS, ks: SpatialKernel, lik):
    """Name/value vectors of the learnable positive hyperparameters."""
    names = ["temporal_variance", "temporal_lengthscale"]
    values = [kt.variance, kt.lengthscale]
    for i, ell in enumerate(np.atleast_1d(ks.lengthscales)):
        names.append(f"spatial_lengthscale_{i}")
        values.append(float(ell))
    if isinstance(lik, Gaussian):
        names.append("noise_variance")
        values.append(lik.noise_variance)
    return names, np.log(np.asarray(values, float))


def unpack_hypers(names, theta, kt: MarkovKernelSS, ks: SpatialKernel, lik):
    """Rebuild kernels and likelihood from log-domain parameters."""
    vals = dict(zip(names, np.exp(np.asarray(theta, float))))
    kt2 = build_temporal_ss(kt.family, vals["temporal_variance"],
                            vals["temporal_lengthscale"])
    ls = [vals[f"spatial_lengthscale_{i}"]
          for i in range(np.atleast_1d(ks.lengthscales).size)]
    ks2 = SpatialKernel(ks.family, np.asarray(ls))
    if isinstance(lik, Gaussian):
        lik2 = Gaussian(vals["noise_variance"])
    else:
        lik2 = lik
    return kt2, ks2, lik2


@dataclass
class FullModelFit:
    """Result of fit(): training state plus what predict() needs."""
    state: FitState
    data: object              # GridDataset
    kt0: MarkovKernelSS
    ks0: SpatialKernel
    lik0: object
    opts: FitOptions

    def current(self):
        return unpack_hypers(self.state.names, self.state.theta,
                             self.kt0, self.ks0, self.lik0)


def fit(data, kt: MarkovKernelSS, ks: SpatialKernel, lik,
        opts: FitOptions = None) -> FullModelFit:
    """Train the full (non-sparse) model on a gridded dataset."""
    opts = opts or FitOptions()
    names, theta0 = pack_hypers(kt, ks, lik)

    def build(theta):
        kt2, ks2, lik2 = unpack_hypers(names, theta, kt, ks, lik)
        return assemble_full(kt2, ks2, data.S, data.t), lik2

    def cvi_sweep(bundle, bank, beta):
        model, lik2 = bundle
        _, site = posterior(model, bank, opts.filter_mode)
        return cvi_step(bank, site, data.Y, data.mask, lik2, beta,
                        opts.quad_order)

    def objective(bundle, bank):
        model, lik2 = bundle
        return elbo(model, bank, data.Y, data.mask, lik2,
                    opts.quad_order, opts.filter_mode)

    bank0 = ApproxLikelihoodBank.zero(data.num_steps, data.num_sites)
    state = run_fit(build, cvi_sweep, objective, names, theta0, bank0, opts)
    return FullModelFit(state, data, kt, ks, lik, opts)


def predict(fitres: FullModelFit, t_query, S_query=None):
    """Smoothed (mean, variance) at query times over the training grid.

    Off-grid query times get predict-only steps inserted into the chain.
    Spatial queries must lie on the training grid; arbitrary locations are
    the sparse layer's job.
    """
    data = fitres.data
    cols = None
    if S_query is not None:
        S_query = np.atleast_2d(np.asarray(S_query, float))
        rows = [tuple(row) for row in np.atleast_2d(data.S)]
        train = set(rows)
        if any(tuple(row) not in train for row in S_query):
            raise UsageError("full-model predict only covers the training "
                             "spatial grid; use the sparse variant for "
                             "off-grid locations")
        cols = [rows.index(tuple(row)) for row in S_query]
    t_query = np.atleast_1d(np.asarray(t_query, float))
    kt2, ks2, lik2 = fitres.current()

    t_all = np.union1d(data.t, t_query)
    model = assemble_full(kt2, ks2, data.S, t_all)

    pos = np.searchsorted(t_all, data.t)
    bank = fitres.state.bank
    lam1 = np.zeros((t_all.size, data.num_sites))
    lam2 = np.zeros_like(lam1)
    informative = np.zeros(lam1.shape, bool)
    lam1[pos] = bank.lam1
    lam2[pos] = bank.lam2
    informative[pos] = bank.informative
    expanded = ApproxLikelihoodBank(lam1, lam2, informative)

    sm, _ = posterior(model, expanded, fitres.opts.filter_mode)
    qpos = np.searchsorted(t_all, t_query)
    mean = sm.fmeans[qpos]
    var = np.asarray(sm.fvars)[qpos]
    if cols is not None:
        mean, var = mean[:, cols], var[:, cols]
    return mean, var
