"""CSV ingestion, synthetic generators, metrics and splits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgp import (DataError, Gaussian, GridDataset, Poisson, UsageError,
                  kfold_masks, load_csv, metrics, save_csv, synthesize)
from stgp.data import pseudo_periodic_field


def test_two_rows_same_timestamp(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,s1,y\n0.0,0.0,1.5\n0.0,1.0,2.5\n")
    ds = load_csv(p)
    assert ds.num_steps == 1 and ds.num_sites == 2
    np.testing.assert_allclose(ds.Y, [[1.5, 2.5]])


def test_empty_file_rejected(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_csv(p)
    p.write_text("t,s1,y\n")
    with pytest.raises(DataError, match="empty"):
        load_csv(p)


def test_malformed_row_reports_line_number(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,s1,y\n0.0,0.0,1.0\n0.5,zero,2.0\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p)


def test_duplicate_site_reports_both_lines(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("t,s1,y\n0.0,1.0,1.0\n0.0,1.0,2.0\n")
    with pytest.raises(DataError, match="duplicate"):
        load_csv(p)


def test_missing_cells_and_header_validation(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("t,s1,y\n0.0,0.0,\n0.0,1.0,nan\n1.0,0.0,3.0\n1.0,1.0,4.0\n")
    ds = load_csv(p)
    assert ds.num_missing == 2 and ds.num_observed == 2
    q = tmp_path / "h.csv"
    q.write_text("time,x,y\n0,0,1\n")
    with pytest.raises(DataError, match="header"):
        load_csv(q)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = np.array([0.0, 0.3, 1.7])
    S = np.array([[0.0, 0.5], [1.0, 0.25]])
    Y = rng.normal(size=(3, 2))
    mask = np.array([[True, False], [True, True], [False, True]])
    ds = GridDataset(t, S, np.where(mask, Y, np.nan), mask)
    p = tmp_path / "rt.csv"
    save_csv(p, ds)
    back = load_csv(p)
    np.testing.assert_array_equal(back.t, ds.t)
    np.testing.assert_array_equal(back.S, ds.S)
    np.testing.assert_array_equal(back.mask, ds.mask)
    np.testing.assert_allclose(back.Y[back.mask], ds.Y[ds.mask])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 1000))
def test_vec_round_trip(nt, ns, seed):
    rng = np.random.default_rng(seed)
    ds = GridDataset(np.arange(nt, dtype=float),
                     np.linspace(0, 1, ns)[:, None],
                     rng.normal(size=(nt, ns)),
                     np.ones((nt, ns), bool))
    flat = ds.vec()
    assert flat.shape == (nt * ns,)
    # time-major ordering: consecutive entries sweep space first
    np.testing.assert_array_equal(flat[:ns], ds.Y[0])
    np.testing.assert_array_equal(ds.unvec(flat), ds.Y)


def test_synthesis_is_deterministic():
    a = synthesize("pseudo_periodic", 20, 4, seed=5)
    b = synthesize("pseudo_periodic", 20, 4, seed=5)
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_array_equal(a.truth, b.truth)
    c = synthesize("pseudo_periodic", 20, 4, seed=6)
    assert not np.array_equal(a.Y, c.Y)


def test_field_amplitude_bound():
    # |f| <= 50 * sum_{i=3..7} 2^-i  ~  12.109
    bound = 50.0 * sum(2.0 ** -i for i in range(3, 8))
    assert abs(bound - 12.109375) < 1e-12
    for seed in range(5):
        f = pseudo_periodic_field(np.linspace(0, 1, 300),
                                  np.linspace(0, 1, 7), seed)
        assert np.abs(f).max() <= bound


def test_field_vanishes_at_origin_radius():
    f = pseudo_periodic_field(np.linspace(0, 1, 50), np.array([0.0]), 3)
    np.testing.assert_array_equal(f, np.zeros((50, 1)))


def test_lgcp_counts_are_nonnegative_integers():
    ds = synthesize("lgcp_counts", 12, 4, seed=1)
    assert (ds.Y >= 0).all()
    np.testing.assert_array_equal(ds.Y, np.round(ds.Y))
    with pytest.raises(UsageError):
        synthesize("white_noise", 5, 5)
    with pytest.raises(UsageError):
        synthesize("pseudo_periodic", 0, 5)


def test_rmse_basics():
    truth = np.array([1.0, 2.0, 3.0])
    v = np.full(3, 1e-12)
    assert metrics(truth, v, truth, Gaussian(1e-12))["rmse"] == 0.0
    off = metrics(truth + 1.0, np.ones(3), truth, Gaussian(1.0))
    assert abs(off["rmse"] - 1.0) < 1e-14


def test_nlpd_point_prediction_limit():
    # m=y, v=1, noise -> 0: density is the unit Gaussian at its mode
    got = metrics(np.array([2.0]), np.array([1.0]), np.array([2.0]),
                  Gaussian(1e-300))
    assert abs(got["nlpd"] - 0.5 * np.log(2 * np.pi)) < 1e-12


def test_metrics_length_mismatch():
    with pytest.raises(UsageError):
        metrics(np.zeros(3), np.ones(3), np.zeros(2), Gaussian(1.0))


def test_gaussian_fixture_values():
    y = np.array([1.0, 2.0, 3.0])
    m = np.array([1.5, 2.0, 2.5])
    v = np.array([0.1, 0.2, 0.3])
    got = metrics(m, v, y, Gaussian(0.5))
    assert abs(got["rmse"] - np.sqrt(1.0 / 6.0)) < 1e-10
    assert abs(got["nlpd"] - 0.8586922911459617) < 1e-10


def test_poisson_fixture_values():
    y = np.array([0.0, 1.0, 4.0])
    m = np.array([0.0, 0.5, 1.2])
    v = np.array([0.3, 0.2, 0.1])
    got = metrics(m, v, y, Poisson())
    assert abs(got["rmse"] - 1.6421530582338135) < 1e-10
    assert abs(got["nlpd"] - 1.3583232038349493) < 1e-10


def test_kfold_masks_partition_observed_cells():
    rng = np.random.default_rng(2)
    Y = rng.normal(size=(6, 4))
    mask = rng.uniform(size=Y.shape) < 0.8
    mask[0, 0] = True
    ds = GridDataset(np.arange(6, dtype=float),
                     np.linspace(0, 1, 4)[:, None],
                     np.where(mask, Y, np.nan), mask)
    folds = kfold_masks(ds, folds=5, seed=1)
    assert len(folds) == 5
    covered = np.zeros_like(mask)
    for train, test in folds:
        assert not (train & test).any()
        np.testing.assert_array_equal(train | test, ds.mask)
        assert not covered[test].any()     # folds are disjoint
        covered |= test
    np.testing.assert_array_equal(covered, ds.mask)
    with pytest.raises(UsageError):
        kfold_masks(ds, folds=1)
