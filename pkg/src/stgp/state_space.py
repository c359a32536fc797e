"""Kalman filtering and smoothing, sequential and parallel.

Both paths consume a DiscreteSTModel and per-step pseudo observations
N(Ỹ_n | H_n x_n, Ṽ_n) and return filtered/smoothed time-marginals plus the
log marginal likelihood of the pseudo data. The parallel path expresses the
recursions as an associative scan over five-element (filter) and
three-element (smoother) tuples; results agree with the sequential path to
filter-tolerance regardless of execution schedule.

Conventions: transitions are arrival-indexed (A[n] carries step n−1 to n,
A[0]=I, Q[0]=0) and the state at the first step is the stationary prior
(m0, P0). Every covariance leaving a predict, update or combine is
symmetrized to suppress drift over long scans.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DefinitenessError
from .gaussians import cholesky_factor
from .kernels import DiscreteSTModel


@dataclass(frozen=True)
class PseudoObservations:
    """Per-step pseudo observations with a missing-entry mask.

    y:    N_t × R means (R = rows of the model's H)
    V:    N_t × R diagonal variances, or N_t × R × R dense blocks
    mask: N_t × R, True where the entry carries information
    """
    y: np.ndarray
    V: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, float))
        object.__setattr__(self, "V", np.asarray(self.V, float))
        object.__setattr__(self, "mask", np.asarray(self.mask, bool))

    @property
    def diagonal(self):
        return self.V.ndim == 2

    def step(self, n):
        """Observed row indices and the dense (y, V) block at step n."""
        idx = np.flatnonzero(self.mask[n])
        if idx.size == 0:
            return idx, None, None
        y = self.y[n, idx]
        if self.diagonal:
            V = np.diag(self.V[n, idx])
        else:
            V = self.V[n][np.ix_(idx, idx)]
        return idx, y, V

    @staticmethod
    def empty(num_steps, rows):
        """All-masked observations (pure prior propagation)."""
        return PseudoObservations(np.zeros((num_steps, rows)),
                                  np.ones((num_steps, rows)),
                                  np.zeros((num_steps, rows), bool))


@dataclass(frozen=True)
class FilterResult:
    means: np.ndarray           # N_t × d
    covs: np.ndarray            # N_t × d × d
    loglik: float


@dataclass(frozen=True)
class StateMarginals:
    """Smoothed state marginals and their H-projections to function space."""
    means: np.ndarray           # N_t × d
    covs: np.ndarray            # N_t × d × d
    fmeans: np.ndarray          # N_t × G
    fcovs: np.ndarray           # N_t × G × G

    @property
    def fvars(self):
        return np.diagonal(self.fcovs, axis1=-2, axis2=-1)


def _project(model, means, covs) -> StateMarginals:
    H = model.H
    fmeans = means @ H.T
    fcovs = np.einsum("ij,njk,lk->nil", H, covs, H)
    return StateMarginals(means, covs, fmeans, fcovs)


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _gauss_loglik(r, C):
    # log N(r | 0, CCᵀ) from the Cholesky factor C
    z = solve_triangular(C, r, lower=True)
    return -0.5 * (z @ z + r.shape[0] * np.log(2.0 * np.pi)) \
        - np.sum(np.log(np.diag(C)))


def sequential_filter(model: DiscreteSTModel, obs: PseudoObservations,
                      project=None) -> FilterResult:
    """Forward Kalman filter; fully masked steps predict only.

    project, when given, maps a covariance onto a constrained set (e.g. a
    block-diagonal sparsity pattern) and is applied after every predict and
    update.
    """
    N, d = model.num_steps, model.state_dim
    means = np.empty((N, d))
    covs = np.empty((N, d, d))
    m, P = model.m0, model.P0
    ll = 0.0
    for n in range(N):
        A, Q = model.A[n], model.Q[n]
        m = A @ m
        P = _sym(A @ P @ A.T + Q)
        if project is not None:
            P = project(P)
        idx, y, V = obs.step(n)
        if idx.size:
            Hn = model.H[idx]
            S = _sym(Hn @ P @ Hn.T + V)
            try:
                C = cholesky_factor(S, name="innovation covariance")
            except DefinitenessError as e:
                raise DefinitenessError(f"innovation covariance at step {n}",
                                        pivot=e.pivot) from e
            r = y - Hn @ m
            ll += _gauss_loglik(r, C)
            W = cho_solve((C, True), Hn @ P).T
            m = m + W @ r
            P = _sym(P - W @ S @ W.T)
            if project is not None:
                P = project(P)
        means[n] = m
        covs[n] = P
    return FilterResult(means, covs, float(ll))


def rts_smoother(model: DiscreteSTModel, filtered: FilterResult,
                 project=None) -> StateMarginals:
    """Backward Rauch-Tung-Striebel pass over the filtered marginals."""
    N = model.num_steps
    means = filtered.means.copy()
    covs = filtered.covs.copy()
    for n in range(N - 2, -1, -1):
        A1, Q1 = model.A[n + 1], model.Q[n + 1]
        Pf = filtered.covs[n]
        R = _sym(A1 @ Pf @ A1.T + Q1)
        try:
            C = cholesky_factor(R, name="R")
        except DefinitenessError as e:
            raise DefinitenessError(f"smoother covariance R at step {n + 1}",
                                    pivot=e.pivot) from e
        G = cho_solve((C, True), A1 @ Pf).T
        means[n] = filtered.means[n] + G @ (means[n + 1] - A1 @ filtered.means[n])
        covs[n] = _sym(Pf + G @ (covs[n + 1] - R) @ G.T)
        if project is not None:
            covs[n] = project(covs[n])
    return _project(model, means, covs)


class FilterElement(NamedTuple):
    """Associative filter element (B, m̂, P̂, φ, J); arrays may be batched."""
    B: np.ndarray
    m: np.ndarray
    P: np.ndarray
    phi: np.ndarray
    J: np.ndarray


class SmootherElement(NamedTuple):
    """Associative smoother element (E, m̄, P̄); arrays may be batched."""
    E: np.ndarray
    m: np.ndarray
    P: np.ndarray


def combine_filter_elements(ei: FilterElement,
                            ej: FilterElement) -> FilterElement:
    """Associative combination of filter elements (information-form W).

    W_ij = (P̂ᵢ⁻¹+J_j)⁻¹P̂ᵢ⁻¹ is computed as (I + P̂ᵢJ_j)⁻¹, which stays
    well-defined for singular P̂ᵢ.
    """
    d = ei.B.shape[-1]
    eye = np.broadcast_to(np.eye(d), ei.P.shape[:-2] + (d, d))
    W = np.linalg.solve(eye + ei.P @ ej.J, np.ascontiguousarray(eye))
    WT = np.swapaxes(W, -1, -2)
    BjW = ej.B @ W
    BiT = np.swapaxes(ei.B, -1, -2)
    B = BjW @ ei.B
    m = _mv(BjW, ei.m + _mv(ei.P, ej.phi)) + ej.m
    P = _sym(BjW @ ei.P @ np.swapaxes(ej.B, -1, -2) + ej.P)
    phi = _mv(BiT @ WT, ej.phi - _mv(ej.J, ei.m)) + ei.phi
    J = _sym(BiT @ WT @ ej.J @ ei.B + ei.J)
    return FilterElement(B, m, P, phi, J)


def combine_smoother_elements(ei: SmootherElement,
                              ej: SmootherElement) -> SmootherElement:
    """Associative combination for the backward smoother scan."""
    E = ei.E @ ej.E
    m = _mv(ei.E, ej.m) + ei.m
    P = _sym(ei.E @ ej.P @ np.swapaxes(ei.E, -1, -2) + ei.P)
    return SmootherElement(E, m, P)


def _mv(M, v):
    return (M @ v[..., None])[..., 0]


def associative_scan(fn, elems, reverse=False):
    """Inclusive associative scan over tuples of equally-batched arrays.

    Recursive odd-even schedule; fn must be vectorized over the leading
    dimension. reverse=True scans from the right.
    """
    if reverse:
        rev = type(elems)(*(np.flip(x, 0) for x in elems))
        out = associative_scan(lambda a, b: fn(b, a), rev)
        return type(elems)(*(np.flip(x, 0) for x in out))
    n = elems[0].shape[0]
    if n < 2:
        return elems
    evens = type(elems)(*(x[0:-1:2] for x in elems))
    odds = type(elems)(*(x[1::2] for x in elems))
    scanned = associative_scan(fn, fn(evens, odds))
    rest = type(elems)(*(x[2::2] for x in elems))
    k = rest[0].shape[0]
    if k:
        head = type(elems)(*(x[:k] for x in scanned))
        even_res = fn(head, rest)
    else:
        even_res = rest
    out = []
    for x0, xs, xe in zip(elems, scanned, even_res):
        buf = np.empty((n,) + x0.shape[1:], dtype=x0.dtype)
        buf[0] = x0[0]
        buf[1::2] = xs
        buf[2::2] = xe
        out.append(buf)
    return type(elems)(*out)


def _filter_elements(model, obs, project=None) -> FilterElement:
    """Per-step filter elements; step 1 consumes the prior as its 'noise'."""
    N, d = model.num_steps, model.state_dim
    H = model.H
    B = np.empty((N, d, d))
    mhat = np.zeros((N, d))
    Phat = np.empty((N, d, d))
    phi = np.zeros((N, d))
    J = np.zeros((N, d, d))
    m0 = model.m0
    for n in range(N):
        A = model.A[n]
        Q = model.P0 if n == 0 else model.Q[n]
        idx, y, V = obs.step(n)
        if idx.size == 0:
            B[n] = A
            Phat[n] = Q
            if n == 0:
                mhat[n] = A @ m0
            continue
        Hn = H[idx]
        T = _sym(Hn @ Q @ Hn.T + V)
        try:
            C = cholesky_factor(T, name="T")
        except DefinitenessError as e:
            raise DefinitenessError(f"innovation covariance at step {n}",
                                    pivot=e.pivot) from e
        K = cho_solve((C, True), Hn @ Q).T
        HA = Hn @ A
        B[n] = A - K @ HA
        Phat[n] = _sym(Q - K @ Hn @ Q)
        TinvHA = cho_solve((C, True), HA)
        phi[n] = TinvHA.T @ y
        J[n] = _sym(HA.T @ TinvHA)
        if n == 0:
            mp = A @ m0
            mhat[n] = mp + K @ (y - Hn @ mp)
        else:
            mhat[n] = K @ y
    if project is not None:
        Phat = project(Phat)
        J = project(J)
    return FilterElement(B, mhat, Phat, phi, J)


def parallel_filter(model: DiscreteSTModel, obs: PseudoObservations,
                    project=None) -> FilterResult:
    """Associative-scan filter; equals sequential_filter to 1e-8.

    project (covariances onto a sparsity pattern) is applied to the
    element covariances at construction and again after every combine.
    """
    elems = _filter_elements(model, obs, project)
    if project is None:
        fn = combine_filter_elements
    else:
        def fn(a, b):
            out = combine_filter_elements(a, b)
            return FilterElement(out.B, out.m, project(out.P),
                                 out.phi, project(out.J))
    scanned = associative_scan(fn, elems)
    means, covs = scanned.m, _sym(scanned.P)

    ll = 0.0
    for n in range(model.num_steps):
        idx, y, V = obs.step(n)
        if idx.size == 0:
            continue
        Hn = model.H[idx]
        if n == 0:
            mp, Pp = model.m0, model.P0
        else:
            A, Q = model.A[n], model.Q[n]
            mp = A @ means[n - 1]
            Pp = A @ covs[n - 1] @ A.T + Q
        if project is not None:
            Pp = project(Pp)
        S = _sym(Hn @ Pp @ Hn.T + V)
        try:
            C = cholesky_factor(S, name="innovation covariance")
        except DefinitenessError as e:
            raise DefinitenessError(f"innovation covariance at step {n}",
                                    pivot=e.pivot) from e
        ll += _gauss_loglik(y - Hn @ mp, C)
    return FilterResult(means, covs, float(ll))


def _smoother_elements(model, filtered, project=None) -> SmootherElement:
    N, d = model.num_steps, model.state_dim
    E = np.zeros((N, d, d))
    m = np.empty((N, d))
    P = np.empty((N, d, d))
    m[N - 1] = filtered.means[N - 1]
    P[N - 1] = filtered.covs[N - 1]
    for n in range(N - 1):
        A1, Q1 = model.A[n + 1], model.Q[n + 1]
        Pf = filtered.covs[n]
        R = _sym(A1 @ Pf @ A1.T + Q1)
        try:
            C = cholesky_factor(R, name="R")
        except DefinitenessError as e:
            raise DefinitenessError(
                f"smoother covariance A P̂ Aᵀ + Q at step {n + 1}",
                pivot=e.pivot) from e
        En = cho_solve((C, True), A1 @ Pf).T
        E[n] = En
        m[n] = filtered.means[n] - En @ (A1 @ filtered.means[n])
        P[n] = _sym(Pf - En @ A1 @ Pf)
    if project is not None:
        P = project(P)
    return SmootherElement(E, m, P)


def parallel_smoother(model: DiscreteSTModel, filtered: FilterResult,
                      project=None) -> StateMarginals:
    """Associative-scan smoother; equals rts_smoother to 1e-8."""
    elems = _smoother_elements(model, filtered, project)
    if project is None:
        fn = combine_smoother_elements
    else:
        def fn(a, b):
            out = combine_smoother_elements(a, b)
            return SmootherElement(out.E, out.m, project(out.P))
    scanned = associative_scan(fn, elems, reverse=True)
    return _project(model, scanned.m, _sym(scanned.P))
