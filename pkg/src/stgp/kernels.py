"""Markov temporal kernels, spatial kernels and the discrete model assembly.

A separable spatio-temporal kernel κ(t,s,t′,s′) = κ_t(t,t′)·κ_s(s,s′) with a
Markovian temporal factor admits a state-space form

    dx(t) = F x(t) dt + L dβ(t),   f(t) = H x(t),

whose discretization over the time grid yields per-step transition matrices
A_n = exp(F Δ_n) and process noise Q_n. Stacking one temporal state per
spatial (or inducing) point gives the Kronecker-structured model

    A_n = I_G ⊗ A_n⁽ᵗ⁾,   Q_n = K⁽ˢ⁾ ⊗ Q_n⁽ᵗ⁾,   H = I_G ⊗ H⁽ᵗ⁾.

The overall variance lives on the temporal factor; spatial kernels have unit
variance to remove the σ²_t·σ²_s redundancy.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DataError, DomainError, UnsupportedKernelError

MATERN12 = "matern12"
MATERN32 = "matern32"
MATERN52 = "matern52"

TEMPORAL_FAMILIES = (MATERN12, MATERN32, MATERN52)
SPATIAL_FAMILIES = (MATERN12, MATERN32, MATERN52)


@dataclass(frozen=True)
class MarkovKernelSS:
    """Temporal Markov kernel in state-space form.

    F: feedback matrix (d_t × d_t), eigenvalues in the open left half plane
    L: noise effect (d_t × 1)
    Qc: white-noise spectral density (scalar)
    H: measurement row (1 × d_t)
    Pinf: stationary covariance, solves F P∞ + P∞ Fᵀ + L Qc Lᵀ = 0
    """
    family: str
    variance: float
    lengthscale: float
    F: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    Qc: float = field(repr=False)
    H: np.ndarray = field(repr=False)
    Pinf: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.F.shape[0]


def build_temporal_ss(family: str, variance: float,
                      lengthscale: float) -> MarkovKernelSS:
    """State-space form of a Matérn-1/2, 3/2 or 5/2 temporal kernel."""
    if variance <= 0:
        raise DomainError(f"variance must be positive, got {variance}")
    if lengthscale <= 0:
        raise DomainError(f"lengthscale must be positive, got {lengthscale}")
    s2, ell = float(variance), float(lengthscale)

    if family == MATERN12:
        F = np.array([[-1.0 / ell]])
        L = np.array([[1.0]])
        Qc = 2.0 * s2 / ell
        H = np.array([[1.0]])
        Pinf = np.array([[s2]])
    elif family == MATERN32:
        lam = np.sqrt(3.0) / ell
        F = np.array([[0.0, 1.0], [-lam**2, -2.0 * lam]])
        L = np.array([[0.0], [1.0]])
        Qc = 4.0 * lam**3 * s2
        H = np.array([[1.0, 0.0]])
        Pinf = np.diag([s2, lam**2 * s2])
    elif family == MATERN52:
        lam = np.sqrt(5.0) / ell
        F = np.array([[0.0, 1.0, 0.0],
                      [0.0, 0.0, 1.0],
                      [-lam**3, -3.0 * lam**2, -3.0 * lam]])
        L = np.array([[0.0], [0.0], [1.0]])
        Qc = s2 * 16.0 / 3.0 * lam**5
        H = np.array([[1.0, 0.0, 0.0]])
        kappa = lam**2 * s2 / 3.0
        Pinf = np.array([[s2, 0.0, -kappa],
                         [0.0, kappa, 0.0],
                         [-kappa, 0.0, lam**4 * s2]])
    else:
        raise UnsupportedKernelError(f"unknown temporal kernel family: {family!r}")
    return MarkovKernelSS(family, s2, ell, F, L, Qc, H, Pinf)


def discretize(k: MarkovKernelSS, dt: float):
    """Discrete transition A = expm(FΔ) and noise Q = P∞ − AP∞Aᵀ.

    Δ=0 returns (I, 0). Closed forms for Matérn-1/2 and 3/2; Matérn-5/2
    goes through scaling-and-squaring expm.
    """
    if dt < 0:
        raise DomainError(f"step size must be nonnegative, got {dt}")
    d = k.dim
    if dt == 0.0:
        return np.eye(d), np.zeros((d, d))
    if k.family == MATERN12:
        A = np.array([[np.exp(-dt / k.lengthscale)]])
    elif k.family == MATERN32:
        lam = np.sqrt(3.0) / k.lengthscale
        # F has a double eigenvalue −λ with nilpotent part N = F+λI, N²=0,
        # so expm(FΔ) = e^{−λΔ}(I + NΔ)
        e = np.exp(-lam * dt)
        A = e * np.array([[1.0 + lam * dt, dt],
                          [-lam**2 * dt, 1.0 - lam * dt]])
    else:
        A = expm(k.F * dt)
    Q = k.Pinf - A @ k.Pinf @ A.T
    return A, 0.5 * (Q + Q.T)


def temporal_kernel_value(k: MarkovKernelSS, tau):
    """κ_t(τ): stationary kernel value at lag τ (vectorized)."""
    r = np.abs(np.asarray(tau, float)) / k.lengthscale
    return k.variance * _matern_profile(k.family, r)


def temporal_gram(k: MarkovKernelSS, t, t2=None):
    """Gram matrix κ_t(t_i, t′_j) for dense-oracle use."""
    t = np.asarray(t, float)
    t2 = t if t2 is None else np.asarray(t2, float)
    return temporal_kernel_value(k, t[:, None] - t2[None, :])


def _matern_profile(family, r):
    if family == MATERN12:
        return np.exp(-r)
    if family == MATERN32:
        z = np.sqrt(3.0) * r
        return (1.0 + z) * np.exp(-z)
    if family == MATERN52:
        z = np.sqrt(5.0) * r
        return (1.0 + z + z**2 / 3.0) * np.exp(-z)
    raise UnsupportedKernelError(f"unknown kernel family: {family!r}")


@dataclass(frozen=True)
class SpatialKernel:
    """Unit-variance Matérn kernel over spatial inputs.

    lengthscales: one per spatial dimension (ARD); scalar broadcasts.
    """
    family: str
    lengthscales: np.ndarray

    def __post_init__(self):
        if self.family not in SPATIAL_FAMILIES:
            raise UnsupportedKernelError(
                f"unknown spatial kernel family: {self.family!r}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, float))
        if np.any(ls <= 0):
            raise DomainError("spatial lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)


def spatial_gram(k: SpatialKernel, S, S2=None):
    """Gram matrix κ_s(S_i, S′_j) with per-dimension length scaling."""
    S = np.atleast_2d(np.asarray(S, float))
    S2 = S if S2 is None else np.atleast_2d(np.asarray(S2, float))
    if S.shape[1] != S2.shape[1]:
        raise DataError(
            f"spatial dimensionality mismatch: {S.shape[1]} vs {S2.shape[1]}")
    ls = np.broadcast_to(k.lengthscales, (S.shape[1],))
    diff = (S[:, None, :] - S2[None, :, :]) / ls
    r = np.sqrt(np.sum(diff**2, axis=-1))
    return _matern_profile(k.family, r)


@dataclass(frozen=True)
class DiscreteSTModel:
    """Discrete-time Kronecker-structured state-space model over a time grid.

    A, Q are arrival-indexed: A[n], Q[n] carry the state from step n−1 to n,
    with A[0]=I, Q[0]=0 so the first step sits at the stationary prior
    (m0=0, P0 = K⁽ˢ⁾⊗P∞⁽ᵗ⁾).
    """
    t: np.ndarray
    points: np.ndarray          # G × D_s spatial (or inducing) locations
    A: np.ndarray               # N_t × d × d
    Q: np.ndarray               # N_t × d × d
    H: np.ndarray               # G × d
    P0: np.ndarray              # d × d
    K_ss: np.ndarray            # G × G spatial gram at `points`
    temporal: MarkovKernelSS
    spatial: SpatialKernel

    @property
    def num_steps(self):
        return self.t.shape[0]

    @property
    def num_points(self):
        return self.points.shape[0]

    @property
    def state_dim(self):
        return self.A.shape[1]

    @property
    def m0(self):
        return np.zeros(self.state_dim)

    @property
    def deltas(self):
        return np.concatenate([[0.0], np.diff(self.t)])


def _assemble(kt: MarkovKernelSS, ks: SpatialKernel, points,
              t) -> DiscreteSTModel:
    t = np.atleast_1d(np.asarray(t, float))
    if t.ndim != 1 or t.size == 0:
        raise DataError("time grid must be a nonempty 1-D array")
    if np.any(np.diff(t) <= 0):
        raise DataError("timestamps must be strictly increasing "
                        "(merge duplicates before assembly)")
    points = np.atleast_2d(np.asarray(points, float))
    G = points.shape[0]
    dt_state = kt.dim

    K_ss = spatial_gram(ks, points)
    deltas = np.concatenate([[0.0], np.diff(t)])
    I_G = np.eye(G)

    # discretize once per distinct step size
    uniq, inverse = np.unique(deltas, return_inverse=True)
    A_u = np.empty((uniq.size, G * dt_state, G * dt_state))
    Q_u = np.empty_like(A_u)
    for i, d in enumerate(uniq):
        At, Qt = discretize(kt, d)
        A_u[i] = np.kron(I_G, At)
        Q_u[i] = np.kron(K_ss, Qt)
    A = A_u[inverse]
    Q = Q_u[inverse]

    H = np.kron(I_G, kt.H)      # G rows, one per point
    P0 = np.kron(K_ss, kt.Pinf)
    return DiscreteSTModel(t=t, points=points, A=A, Q=Q, H=H, P0=P0,
                           K_ss=K_ss, temporal=kt, spatial=ks)


def assemble_full(kt: MarkovKernelSS, ks: SpatialKernel, S,
                  t) -> DiscreteSTModel:
    """Full model: one temporal state per spatial data site."""
    return _assemble(kt, ks, S, t)


def assemble_sparse(kt: MarkovKernelSS, ks: SpatialKernel, Z_s,
                    t) -> DiscreteSTModel:
    """Sparse model: one temporal state per spatial inducing point."""
    return _assemble(kt, ks, Z_s, t)
