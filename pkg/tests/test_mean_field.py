"""Whitened reformulation and the block-diagonal covariance restriction."""

import numpy as np
import pytest

from stgp import (FitOptions, Gaussian, GridDataset, Poisson, SpatialKernel,
                  assemble_full, build_temporal_ss, fit, kfold_masks, metrics,
                  mf_fit, mf_predict, predict, reformulate, synthesize,
                  UsageError)
from stgp.mean_field import mf_filter_smoother
from stgp.state_space import rts_smoother, sequential_filter

from conftest import (random_gaussian_dataset, random_pseudo, random_sites,
                      random_spatial, random_temporal, random_times)


def separated_sites(ns):
    # far enough apart that the Matern gram underflows to the identity
    return 900.0 * np.arange(ns, dtype=float)[:, None]


def test_emission_reproduces_prior_function_covariance():
    rng = np.random.default_rng(0)
    for family in ("matern12", "matern32", "matern52"):
        kt = build_temporal_ss(family, 1.6, 0.8)
        ks = random_spatial(rng)
        model = assemble_full(kt, ks, random_sites(rng, 3),
                              random_times(rng, 4))
        mf = reformulate(model)
        np.testing.assert_allclose(mf.H @ mf.P0 @ mf.H.T,
                                   model.K_ss * kt.variance, atol=1e-10)


def test_reformulation_alone_is_exact():
    """Filtering the whitened model without the projection reproduces the
    coupled model's function marginals and log-likelihood."""
    rng = np.random.default_rng(1)
    for _ in range(5):
        nt, ns = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        kt, ks = random_temporal(rng), random_spatial(rng)
        model = assemble_full(kt, ks, random_sites(rng, ns),
                              random_times(rng, nt))
        mf = reformulate(model)
        obs = random_pseudo(rng, nt, ns)
        fr_std = sequential_filter(model, obs)
        fr_mf = sequential_filter(mf, obs)          # no projection
        assert abs(fr_std.loglik - fr_mf.loglik) < 1e-8
        sm_std = rts_smoother(model, fr_std)
        sm_mf = rts_smoother(mf, fr_mf)
        np.testing.assert_allclose(sm_mf.fmeans, sm_std.fmeans, atol=1e-8)
        np.testing.assert_allclose(sm_mf.fcovs, sm_std.fcovs, atol=1e-8)


def test_projection_is_idempotent_and_zeroes_cross_blocks():
    rng = np.random.default_rng(2)
    kt, ks = random_temporal(rng), random_spatial(rng)
    model = assemble_full(kt, ks, random_sites(rng, 3), random_times(rng, 2))
    mf = reformulate(model)
    d = mf.state_dim
    A = rng.normal(size=(d, d))
    P = A @ A.T
    once = mf.project(P)
    np.testing.assert_array_equal(mf.project(once), once)
    dt = kt.dim
    for i in range(3):
        for j in range(3):
            blk = once[i * dt:(i + 1) * dt, j * dt:(j + 1) * dt]
            if i == j:
                np.testing.assert_array_equal(
                    blk, P[i * dt:(i + 1) * dt, j * dt:(j + 1) * dt])
            else:
                assert not blk.any()


def test_single_site_mean_field_is_exact():
    rng = np.random.default_rng(3)
    ds = random_gaussian_dataset(rng, nt=6, ns=1)
    kt, ks = random_temporal(rng), random_spatial(rng)
    opts = FitOptions(beta=1.0, rho=0.0, iters=3)
    full = fit(ds, kt, ks, Gaussian(0.4), opts)
    mf = mf_fit(ds, kt, ks, Gaussian(0.4), opts)
    np.testing.assert_allclose(mf.state.elbo_trace, full.state.elbo_trace,
                               atol=1e-10)
    fm, fv = predict(full, ds.t)
    mm, mv = mf_predict(mf, ds.t)
    np.testing.assert_allclose(mm, fm, atol=1e-10)
    np.testing.assert_allclose(mv, fv, atol=1e-10)


def test_independent_prior_makes_projection_lossless():
    rng = np.random.default_rng(4)
    nt, ns = 7, 3
    t = random_times(rng, nt)
    S = separated_sites(ns)
    Y = rng.normal(size=(nt, ns))
    ds = GridDataset(t, S, Y, np.ones_like(Y, bool))
    kt = build_temporal_ss("matern32", 1.3, 0.6)
    ks = SpatialKernel("matern32", np.array([1.0]))
    model = assemble_full(kt, ks, S, t)
    np.testing.assert_array_equal(model.K_ss, np.eye(ns))

    opts = FitOptions(beta=1.0, rho=0.0, iters=3)
    full = fit(ds, kt, ks, Gaussian(0.3), opts)
    mf = mf_fit(ds, kt, ks, Gaussian(0.3), opts)
    np.testing.assert_allclose(mf.state.elbo_trace, full.state.elbo_trace,
                               atol=1e-8)
    fm, fv = predict(full, ds.t)
    mm, mv = mf_predict(mf, ds.t)
    np.testing.assert_allclose(mm, fm, atol=1e-8)
    np.testing.assert_allclose(mv, fv, atol=1e-8)


def test_parallel_equals_sequential_when_prior_is_independent():
    rng = np.random.default_rng(5)
    nt, ns = 6, 3
    kt = build_temporal_ss("matern52", 1.0, 0.5)
    ks = SpatialKernel("matern12", np.array([1.0]))
    model = assemble_full(kt, ks, separated_sites(ns), random_times(rng, nt))
    mf = reformulate(model)
    obs = random_pseudo(rng, nt, ns)
    fs = sequential_filter(mf, obs, project=mf.project)
    _, sm_seq = mf_filter_smoother(mf, obs, mode="sequential")
    _, sm_par = mf_filter_smoother(mf, obs, mode="parallel")
    np.testing.assert_allclose(sm_par.fmeans, sm_seq.fmeans, atol=1e-8)
    np.testing.assert_allclose(sm_par.fcovs, sm_seq.fcovs, atol=1e-8)
    np.testing.assert_allclose(fs.means[-1], sm_seq.means[-1], atol=1e-10)


def test_mean_field_predictions_track_the_full_model():
    """Correlated prior, Poisson counts: the restricted posterior stays
    within 10% of the full model's held-out NLPD."""
    ds_all = synthesize("lgcp_counts", 30, 8, seed=2)
    train_mask, test_mask = kfold_masks(ds_all, folds=5, seed=0)[0]
    ds = ds_all.with_mask(train_mask)
    kt = build_temporal_ss("matern32", 1.0, 0.2)
    ks = SpatialKernel("matern32", np.array([0.3]))
    opts = FitOptions(beta=0.2, rho=0.0, iters=60)
    full = fit(ds, kt, ks, Poisson(), opts)
    mf = mf_fit(ds, kt, ks, Poisson(), opts)

    yte = ds_all.Y[test_mask]
    fm, fv = predict(full, ds.t)
    mm, mv = mf_predict(mf, ds.t)
    full_nlpd = metrics(fm[test_mask], fv[test_mask], yte, Poisson())["nlpd"]
    mf_nlpd = metrics(mm[test_mask], mv[test_mask], yte, Poisson())["nlpd"]
    assert abs(mf_nlpd - full_nlpd) <= 0.10 * abs(full_nlpd)


def test_sparse_mean_field_with_full_inducing_set_matches_full_mf():
    rng = np.random.default_rng(6)
    ds = random_gaussian_dataset(rng, nt=5, ns=3)
    kt, ks = random_temporal(rng), random_spatial(rng)
    opts = FitOptions(beta=1.0, rho=0.0, iters=3)
    a = mf_fit(ds, kt, ks, Gaussian(0.3), opts)
    b = mf_fit(ds, kt, ks, Gaussian(0.3), opts, Z=ds.S)
    np.testing.assert_allclose(b.state.elbo_trace, a.state.elbo_trace,
                               atol=1e-8)
    am, av = mf_predict(a, ds.t)
    bm, bv = mf_predict(b, ds.t, ds.S)
    np.testing.assert_allclose(bm, am, atol=1e-8)
    np.testing.assert_allclose(bv, av, atol=1e-8)


def test_full_variant_rejects_off_grid_spatial_queries():
    rng = np.random.default_rng(7)
    ds = random_gaussian_dataset(rng, nt=4, ns=2)
    kt, ks = random_temporal(rng), random_spatial(rng)
    res = mf_fit(ds, kt, ks, Gaussian(0.3),
                 FitOptions(beta=1.0, rho=0.0, iters=1))
    with pytest.raises(UsageError):
        mf_predict(res, ds.t, np.array([[55.5]]))
    # on-grid subsets come back in query order
    mm, _ = mf_predict(res, ds.t)
    sm, _ = mf_predict(res, ds.t, ds.S[[1, 0]])
    np.testing.assert_allclose(sm, mm[:, [1, 0]], atol=1e-12)
