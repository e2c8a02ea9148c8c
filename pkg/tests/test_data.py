import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from robreg.data import (
    ActiveSet, Dataset, Standardizer, Theta, mad, read_csv, robust_standardize, unstandardize_model,
)
from robreg.errors import DegenerateColumn, DimensionMismatch, ParseError
from robreg.penalty import PenaltySpec
from robreg.solver import FitConfig, fit_mdpde


def test_dataset_validation():
    with pytest.raises(DimensionMismatch):
        Dataset(np.zeros(3), np.ones((4, 2)))
    with pytest.raises(ValueError):
        Dataset(np.zeros(3), np.column_stack([np.full(3, 2.0), np.arange(3.0)]))
    with pytest.raises(ValueError):
        Dataset.from_predictors([1.0, np.nan], [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        Dataset.from_predictors([1.0], [1.0])
    d = Dataset.from_predictors([1.0, 2.0, 3.0], [[1, 2], [3, 4], [5, 7]])
    assert (d.n, d.p) == (3, 2)
    assert not d.X.flags.writeable


def test_theta_and_active_set():
    with pytest.raises(ValueError):
        Theta(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        ActiveSet((2, 1))
    a = ActiveSet.from_beta([1.0, 0.0, -2.0, 1e-12], threshold=1e-10)
    assert a.indices == (0, 2) and 2 in a and len(a) == 2


def test_standardize_column_example():
    d = Dataset.from_predictors([0.0, 1.0, 0.5, 2.0, 3.0], [1, 2, 3, 4, 5])
    ds, s = robust_standardize(d)
    assert s.centers[0] == 3 and s.scales[0] == pytest.approx(1.4826)
    expected = np.array([-2, -1, 0, 1, 2]) / 1.4826
    np.testing.assert_allclose(ds.X[:, 1], expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(ds.X[:, 1], [-1.349, -0.674, 0, 0.674, 1.349], atol=5e-4)
    np.testing.assert_array_equal(ds.X[:, 0], 1.0)


def test_degenerate_column_rejected():
    d = Dataset.from_predictors([1.0, 2.0, 3.0, 4.0], [[5, 1], [5, 2], [5, 3], [5, 4]])
    with pytest.raises(DegenerateColumn) as exc:
        robust_standardize(d)
    assert exc.value.column == 1
    d = Dataset.from_predictors([1.0, 1.0, 1.0, 4.0], [1, 2, 3, 4])
    with pytest.raises(DegenerateColumn):
        robust_standardize(d)


def test_standardize_fixed_point():
    rng = np.random.default_rng(3)
    z = rng.standard_normal(31)
    z = (z - np.median(z)) / mad(z)  # median 0, MAD 1/1.4826 before the constant
    y = rng.standard_normal(31)
    y = (y - np.median(y)) / mad(y)
    d = Dataset.from_predictors(y, z)
    ds, _ = robust_standardize(d)
    np.testing.assert_allclose(ds.X, d.X, atol=1e-12)
    np.testing.assert_allclose(ds.y, d.y, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (25, 4), elements=st.floats(-1e3, 1e3)), st.floats(0.1, 100.0))
def test_round_trip_and_scale_equivariance(a, c):
    rng = np.random.default_rng(0)
    a = a + 1e-3 * rng.standard_normal(a.shape)  # avoid degenerate MADs
    d = Dataset.from_predictors(a[:, 0], a[:, 1:])
    ds, s = robust_standardize(d)
    back = s.unstandardize(ds)
    assert np.max(np.abs(back.X - d.X)) < 1e-10 * (1 + np.max(np.abs(d.X)))
    assert np.max(np.abs(back.y - d.y)) < 1e-10 * (1 + np.max(np.abs(d.y)))
    Z = a[:, 1:].copy()
    Z[:, 1] *= c
    ds2, _ = robust_standardize(Dataset.from_predictors(a[:, 0], Z))
    np.testing.assert_allclose(ds2.X, ds.X, rtol=1e-9, atol=1e-9)


def test_unstandardize_identity_and_rule():
    d = Dataset.from_predictors(np.arange(6.0) ** 1.5, np.column_stack([np.arange(6.0), np.arange(6.0) ** 2]))
    m = fit_mdpde(d, FitConfig(alpha=0.0))
    same = unstandardize_model(m, Standardizer.identity(2))
    np.testing.assert_array_equal(same.theta.beta, m.theta.beta)
    assert same.theta.sigma == m.theta.sigma

    s = Standardizer(np.zeros(1), np.array([4.0]), 0.0, 2.0)
    beta, sigma = s.to_original(np.array([0.0, 2.0]), 1.0)
    assert beta[1] == 1.0 and sigma == 2.0


def test_unstandardized_fit_matches_raw_ols(rng):
    Z = rng.standard_normal((80, 3)) * [1, 10, 0.1] + [5, -3, 0]
    y = 2 + Z @ [1.0, -0.2, 30.0] + rng.standard_normal(80)
    d = Dataset.from_predictors(y, Z)
    ds, s = robust_standardize(d)
    m = unstandardize_model(fit_mdpde(ds, FitConfig(alpha=0.0)), s)
    beta_ols = np.linalg.solve(d.X.T @ d.X, d.X.T @ d.y)
    sigma_mle = np.sqrt(np.mean((d.y - d.X @ beta_ols) ** 2))
    np.testing.assert_allclose(m.theta.beta, beta_ols, rtol=0, atol=1e-8)
    assert abs(m.theta.sigma - sigma_mle) < 1e-8


def test_active_set_survives_unstandardization(rng):
    Z = rng.standard_normal((60, 5)) * 3 + 1
    y = Z[:, 0] + rng.standard_normal(60)
    d = Dataset.from_predictors(y, Z)
    ds, s = robust_standardize(d)
    m = fit_mdpde(ds, FitConfig(alpha=0.2, penalty=PenaltySpec("l1", 0.15)))
    u = unstandardize_model(m, s)
    assert 0 < len(m.active) < 6
    np.testing.assert_array_equal(np.flatnonzero(u.theta.beta[1:]), np.flatnonzero(m.theta.beta[1:]))


def test_read_csv(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("x1,y,x2\n1,2,3\n4,5,6.5\n7,8,9\n")
    d = read_csv(f, "y")
    np.testing.assert_array_equal(d.y, [2, 5, 8])
    np.testing.assert_array_equal(d.X[:, 2], [3, 6.5, 9])
    assert d.names == ("x1", "x2")
    f.write_text("x1,y\n1,2\n4,abc\n")
    with pytest.raises(ParseError) as exc:
        read_csv(f, "y")
    assert exc.value.row == 3 and exc.value.column == "y"
    with pytest.raises(ParseError):
        read_csv(f, "nope")
