"""Shared generators for randomized tests.

Sites are spread with a minimum separation so spatial grams stay well
conditioned; timestamps get a small increasing offset so they are strictly
ordered even after rounding.
"""

import numpy as np

from stgp import GridDataset, SpatialKernel, build_temporal_ss
from stgp.kernels import spatial_gram, temporal_gram
from stgp.state_space import (FilterElement, PseudoObservations,
                              SmootherElement)

FAMILIES = ("matern12", "matern32", "matern52")


def random_temporal(rng, family=None):
    family = family or FAMILIES[rng.integers(3)]
    return build_temporal_ss(family,
                             variance=float(rng.uniform(0.5, 2.0)),
                             lengthscale=float(rng.uniform(0.4, 1.2)))


def random_spatial(rng, dim=1, family=None):
    family = family or FAMILIES[rng.integers(3)]
    return SpatialKernel(family, rng.uniform(0.5, 1.5, size=dim))


def random_times(rng, nt):
    t = np.sort(rng.uniform(0.0, 2.0, size=nt))
    return t + np.arange(nt) * 1e-3


def random_sites(rng, ns, dim=1):
    base = np.linspace(0.0, 1.0, ns)[:, None]
    jitter = rng.uniform(-0.2, 0.2, size=(ns, dim)) / max(ns, 2)
    return np.broadcast_to(base, (ns, dim)) + jitter


def random_filter_element(rng, d):
    B = rng.normal(size=(d, d))
    m = rng.normal(size=d)
    A = rng.normal(size=(d, d))
    P = A @ A.T + 0.5 * np.eye(d)
    phi = rng.normal(size=d)
    C = rng.normal(size=(d, d))
    return FilterElement(B, m, P, phi, C @ C.T)


def random_smoother_element(rng, d):
    E = rng.normal(size=(d, d))
    m = rng.normal(size=d)
    A = rng.normal(size=(d, d))
    return SmootherElement(E, m, A @ A.T + 0.3 * np.eye(d))


def random_pseudo(rng, nt, rows, observed=0.8):
    y = rng.normal(size=(nt, rows))
    V = rng.uniform(0.2, 1.5, size=(nt, rows))
    mask = rng.uniform(size=(nt, rows)) < observed
    if not mask.any():
        mask[0, 0] = True
    return PseudoObservations(y, V, mask)


def random_gaussian_dataset(rng, nt, ns, dim=1, missing=0.0):
    t = random_times(rng, nt)
    S = random_sites(rng, ns, dim)
    Y = rng.normal(size=(nt, ns))
    mask = rng.uniform(size=Y.shape) >= missing
    if not mask.any():
        mask[0, 0] = True
    return GridDataset(t, S, np.where(mask, Y, np.nan), mask)


def dense_gram(kt, ks, t, S):
    """K_ff for the separable kernel, vec ordering time-major then space."""
    return np.kron(temporal_gram(kt, t), spatial_gram(ks, S))
