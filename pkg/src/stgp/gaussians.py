"""Gaussian parameterizations, Kronecker products and Cholesky utilities.

Parameterizations follow the exponential-family conventions:

    moment       ξ = (m, P)
    natural      λ = (P⁻¹m, −½P⁻¹)
    expectation  µ = (m, mmᵀ + P)

All matrices are dense, row-major. Kronecker products are kept lazy and
only materialized below a size cap; larger products must be consumed
through the factor-aware matvec path.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpotrf

from .errors import CapacityError, DefinitenessError

MOMENT = "moment"
NATURAL = "natural"
EXPECTATION = "expectation"

_TAGS = (MOMENT, NATURAL, EXPECTATION)

# materialization cap for KroneckerMatrix.full(), per side
KRON_CAP = 4096


def cholesky_factor(P, name="P"):
    """Lower Cholesky factor of P, with a single jitter retry.

    On failure, retries once with +1e-8·mean(diag)·I; a second failure
    raises DefinitenessError carrying the failing pivot index.
    """
    P = np.asarray(P, dtype=float)
    C, info = dpotrf(P, lower=1, clean=1)
    if info == 0:
        return C
    jitter = 1e-8 * np.mean(np.diag(P))
    C, info = dpotrf(P + jitter * np.eye(P.shape[0]), lower=1, clean=1)
    if info == 0:
        return C
    if info < 0:
        raise DefinitenessError(name, diagnostics={"lapack_info": int(info)})
    # dpotrf reports the order of the first failing leading minor (1-based)
    raise DefinitenessError(name, pivot=int(info) - 1)


def solve_psd(P, B, name="P"):
    """Solve P X = B for symmetric positive-definite P via Cholesky."""
    C = cholesky_factor(P, name=name)
    from scipy.linalg import cho_solve
    return cho_solve((C, True), B)


@dataclass(frozen=True)
class GaussianParams:
    """A Gaussian in one of the three exponential-family parameterizations.

    a: first parameter vector (m, λ¹ or µ¹ depending on tag)
    b: second parameter matrix (P, λ² or µ²)
    """
    a: np.ndarray
    b: np.ndarray
    tag: str = MOMENT

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError(f"unknown parameterization tag: {self.tag!r}")
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, float)))
        object.__setattr__(self, "b", np.atleast_2d(np.asarray(self.b, float)))

    @property
    def dim(self):
        return self.a.shape[0]


def _to_moment(g: GaussianParams) -> GaussianParams:
    if g.tag == MOMENT:
        return g
    if g.tag == NATURAL:
        # P = (−2λ²)⁻¹, m = Pλ¹
        prec = -2.0 * g.b
        P = solve_psd(prec, np.eye(g.dim), name="-2·lambda2")
        P = 0.5 * (P + P.T)
        m = P @ g.a
        return GaussianParams(m, P, MOMENT)
    # expectation: P = µ₂ − µ₁µ₁ᵀ
    m = g.a
    P = g.b - np.outer(m, m)
    cholesky_factor(P, name="mu2 - mu1 mu1^T")
    return GaussianParams(m, 0.5 * (P + P.T), MOMENT)


def convert_params(g: GaussianParams, target: str) -> GaussianParams:
    """Convert between moment, natural and expectation parameterizations."""
    if target not in _TAGS:
        raise ValueError(f"unknown parameterization tag: {target!r}")
    if g.tag == target:
        return g
    xi = _to_moment(g)
    if target == MOMENT:
        return xi
    if target == NATURAL:
        prec = solve_psd(xi.b, np.eye(xi.dim), name="P")
        prec = 0.5 * (prec + prec.T)
        return GaussianParams(prec @ xi.a, -0.5 * prec, NATURAL)
    return GaussianParams(xi.a, xi.b + np.outer(xi.a, xi.a), EXPECTATION)


class KroneckerMatrix:
    """Lazy Kronecker product A ⊗ B.

    Stores the factors; `full()` materializes the product only when both
    result dimensions are within the cap.
    """

    def __init__(self, A, B, cap=KRON_CAP):
        self.A = np.atleast_2d(np.asarray(A, float))
        self.B = np.atleast_2d(np.asarray(B, float))
        self.cap = cap

    @property
    def shape(self):
        return (self.A.shape[0] * self.B.shape[0],
                self.A.shape[1] * self.B.shape[1])

    def full(self):
        rows, cols = self.shape
        if rows > self.cap or cols > self.cap:
            raise CapacityError(
                f"materializing a {rows}x{cols} Kronecker product exceeds "
                f"the {self.cap}x{self.cap} cap; use matvec()")
        return np.kron(self.A, self.B)

    def matvec(self, x):
        """(A⊗B) x without materializing, via the vec identity.

        With x = vec(X) laid out A-major (row blocks of size B.cols),
        (A⊗B) vec(X) = vec(B X Aᵀ) in the same layout.
        """
        p, q = self.A.shape
        r, s = self.B.shape
        X = np.asarray(x, float).reshape(q, s).T      # s×q
        Y = self.B @ X @ self.A.T                     # r×p
        return Y.T.reshape(p * r)

    def inv(self):
        """(A⊗B)⁻¹ = A⁻¹ ⊗ B⁻¹ for invertible square factors."""
        return KroneckerMatrix(np.linalg.inv(self.A), np.linalg.inv(self.B),
                               self.cap)

    def __matmul__(self, other):
        if isinstance(other, KroneckerMatrix):
            return KroneckerMatrix(self.A @ other.A, self.B @ other.B,
                                   min(self.cap, other.cap))
        other = np.asarray(other, float)
        if other.ndim == 1:
            return self.matvec(other)
        return np.column_stack([self.matvec(c) for c in other.T])


def kron(A, B, cap=KRON_CAP) -> KroneckerMatrix:
    """Kronecker product of two matrices, lazily represented."""
    return KroneckerMatrix(A, B, cap)


def mvn_logpdf(x, m, P, name="P"):
    """log N(x | m, P) evaluated through the Cholesky factor of P."""
    x = np.atleast_1d(np.asarray(x, float))
    m = np.atleast_1d(np.asarray(m, float))
    C = cholesky_factor(np.atleast_2d(P), name=name)
    from scipy.linalg import solve_triangular
    r = solve_triangular(C, x - m, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(C)))
    d = x.shape[0]
    return -0.5 * (r @ r + logdet + d * np.log(2.0 * np.pi))
