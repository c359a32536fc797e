"""Datasets, CSV ingestion, synthetic generators and evaluation metrics.

Observations live on a time grid: rows sharing a timestamp form one step,
and the union of spatial coordinates across the file forms the site list.
Combinations absent from the file are masked. vec() ordering is time-major,
then space.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError
from .likelihoods import NLPD_QUAD_ORDER, nlpd


@dataclass(frozen=True)
class GridDataset:
    """Gridded observations with a missing mask.

    t:    N_t strictly increasing timestamps
    S:    N_s × D_s unique site coordinates (lexicographic order)
    Y:    N_t × N_s values, NaN where missing
    mask: N_t × N_s, True where observed
    truth: optional noiseless field (synthetic data only)
    """
    t: np.ndarray
    S: np.ndarray
    Y: np.ndarray
    mask: np.ndarray
    truth: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.t, float))
        S = np.atleast_2d(np.asarray(self.S, float))
        Y = np.asarray(self.Y, float)
        mask = np.asarray(self.mask, bool)
        if np.any(np.diff(t) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if Y.shape != (t.size, S.shape[0]) or mask.shape != Y.shape:
            raise DataError(f"inconsistent shapes: t {t.size}, S {S.shape[0]}, "
                            f"Y {Y.shape}, mask {mask.shape}")
        Y = np.where(mask, Y, np.nan)
        for name, val in (("t", t), ("S", S), ("Y", Y), ("mask", mask)):
            object.__setattr__(self, name, val)

    @property
    def num_steps(self):
        return self.t.size

    @property
    def num_sites(self):
        return self.S.shape[0]

    @property
    def num_observed(self):
        return int(self.mask.sum())

    @property
    def num_missing(self):
        return self.Y.size - self.num_observed

    def vec(self):
        """Observations flattened time-major then space."""
        return self.Y.reshape(-1)

    def unvec(self, values):
        """Inverse of vec(): reshape a flat vector back onto the grid."""
        return np.asarray(values).reshape(self.num_steps, self.num_sites)

    def with_mask(self, mask):
        """Same grid, different observation mask (for train/test splits)."""
        return GridDataset(self.t, self.S, np.where(mask, self.Y, np.nan),
                           mask & self.mask, truth=self.truth)


def load_csv(path) -> GridDataset:
    """Read a `t,s1[,s2,...],y` table into a GridDataset.

    Empty or NaN y cells mark missing observations. Duplicate (t, site)
    rows and malformed cells are errors carrying the 1-based line number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty dataset (no header row)") from None
        header = [h.strip() for h in header]
        ds_dim = len(header) - 2
        expected = ["t"] + [f"s{i + 1}" for i in range(ds_dim)] + ["y"]
        if ds_dim < 1 or header != expected:
            raise DataError(f"{path}: line 1: header must be "
                            "'t,s1[,s2,...],y', got " + ",".join(header))
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells or all(c.strip() == "" for c in cells):
                continue
            if len(cells) != len(header):
                raise DataError(f"{path}: line {lineno}: expected "
                                f"{len(header)} cells, got {len(cells)}")
            try:
                tval = float(cells[0])
                svals = tuple(float(c) for c in cells[1:-1])
                ycell = cells[-1].strip()
                yval = float("nan") if ycell == "" else float(ycell)
            except ValueError as e:
                raise DataError(f"{path}: line {lineno}: {e}") from None
            if not np.isfinite(tval) or not all(np.isfinite(s) for s in svals):
                raise DataError(f"{path}: line {lineno}: non-finite coordinate")
            rows.append((lineno, tval, svals, yval))

    if not rows:
        raise DataError(f"{path}: empty dataset (no data rows)")

    t = np.array(sorted({r[1] for r in rows}))
    sites = sorted({r[2] for r in rows})
    site_index = {s: k for k, s in enumerate(sites)}
    t_index = {tv: n for n, tv in enumerate(t)}

    Y = np.full((t.size, len(sites)), np.nan)
    mask = np.zeros(Y.shape, bool)
    seen = {}
    for lineno, tval, svals, yval in rows:
        n, k = t_index[tval], site_index[svals]
        if (n, k) in seen:
            raise DataError(f"{path}: line {lineno}: duplicate site "
                            f"{svals} at t={tval} (first at line {seen[n, k]})")
        seen[n, k] = lineno
        if not np.isnan(yval):
            Y[n, k] = yval
            mask[n, k] = True
    return GridDataset(t, np.array(sites), Y, mask)


def save_csv(path, dataset: GridDataset):
    """Write a GridDataset back to the `t,s...,y` layout (observed rows and
    explicitly missing grid cells; missing y cells are left empty)."""
    ds_dim = dataset.S.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"s{i + 1}" for i in range(ds_dim)] + ["y"])
        for n in range(dataset.num_steps):
            for k in range(dataset.num_sites):
                y = dataset.Y[n, k]
                writer.writerow([repr(float(dataset.t[n]))]
                                + [repr(float(v)) for v in dataset.S[k]]
                                + ["" if np.isnan(y) else repr(float(y))])


PSEUDO_PERIODIC = "pseudo_periodic"
LGCP_COUNTS = "lgcp_counts"


def pseudo_periodic_field(t, r, seed):
    """f(t,r) = 50·φ(t,3)·sin(4πr) with φ the random pseudo-periodic sum."""
    rng = np.random.default_rng(seed)
    i = np.arange(3, 8)
    shifts = rng.uniform(0.0, 2.0 ** i)                      # s_i ~ U(0, 2^i)
    t = np.asarray(t, float)[:, None]
    phi = np.sum(2.0 ** -i * np.sin(2.0 * np.pi * (2.0 ** (2 + i) + shifts)
                                    * t * 3.0), axis=-1)
    return 50.0 * phi[:, None] * np.sin(4.0 * np.pi * np.asarray(r, float))


def synthesize(kind, nt, ns, seed=0) -> GridDataset:
    """Generate a synthetic dataset on an nt × ns grid over [0,1]²."""
    if nt <= 0 or ns <= 0:
        raise UsageError(f"grid sizes must be positive, got nt={nt}, ns={ns}")
    t = np.linspace(0.0, 1.0, nt)
    r = np.linspace(0.0, 1.0, ns)
    S = r[:, None]
    rng = np.random.default_rng(seed)

    if kind == PSEUDO_PERIODIC:
        f = pseudo_periodic_field(t, r, seed)
        y = f + rng.normal(0.0, 0.1, size=f.shape)   # ε ~ N(0, 0.01)
    elif kind == LGCP_COUNTS:
        from .gaussians import cholesky_factor
        from .kernels import (MATERN32, SpatialKernel, build_temporal_ss,
                              spatial_gram, temporal_gram)
        kt = build_temporal_ss(MATERN32, 1.0, 0.2)
        ks = SpatialKernel(MATERN32, np.array([0.3]))
        Ct = cholesky_factor(temporal_gram(kt, t) + 1e-10 * np.eye(nt), "K_t")
        Cs = cholesky_factor(spatial_gram(ks, S) + 1e-10 * np.eye(ns), "K_s")
        f = Ct @ rng.standard_normal((nt, ns)) @ Cs.T
        y = rng.poisson(np.exp(f)).astype(float)
    else:
        raise UsageError(f"unknown synthetic kind: {kind!r}")
    return GridDataset(t, S, y, np.ones(y.shape, bool), truth=f)


def kfold_masks(dataset: GridDataset, folds=5, seed=0):
    """K-fold split of the observed entries; yields (train, test) masks."""
    if folds < 2:
        raise UsageError(f"need at least 2 folds, got {folds}")
    obs = np.flatnonzero(dataset.mask.reshape(-1))
    perm = np.random.default_rng(seed).permutation(obs)
    out = []
    for chunk in np.array_split(perm, folds):
        test = np.zeros(dataset.Y.size, bool)
        test[chunk] = True
        test = test.reshape(dataset.mask.shape)
        out.append((dataset.mask & ~test, dataset.mask & test))
    return out


def metrics(mean, var, y, lik, order=NLPD_QUAD_ORDER):
    """RMSE and mean NLPD of predictions against held-out observations."""
    mean = np.asarray(mean, float).reshape(-1)
    var = np.asarray(var, float).reshape(-1)
    y = np.asarray(y, float).reshape(-1)
    if not (mean.size == var.size == y.size):
        raise UsageError(f"length mismatch: mean {mean.size}, var {var.size}, "
                         f"y {y.size}")
    rmse = float(np.sqrt(np.mean((y - mean) ** 2)))
    return {"rmse": rmse,
            "nlpd": float(np.mean(nlpd(lik, y, mean, var, order=order)))}
