import numpy as np
import pytest
from scipy import linalg

from robreg.data import Dataset, Theta, robust_standardize
from robreg.dpd import dpd_loss, grad_beta, hessian_beta
from robreg.errors import BracketFailure, IndefiniteSurrogate, NoConvergence, SingularDesign
from robreg.penalty import PenaltySpec
from robreg.selection import mdpde_lambda_max
from robreg.solver import (
    FitConfig, fit_huber_pilot, fit_lasso, fit_mdpde, fit_ols, fit_tukey, inner_pls_solve,
    kkt_violation, quadratic_surrogate, update_sigma,
)

from conftest import make_linear


def _ols(d):
    beta = np.linalg.solve(d.X.T @ d.X, d.X.T @ d.y)
    return beta, np.sqrt(np.mean((d.y - d.X @ beta) ** 2))


def _check_model(m, d):
    assert m.active.indices == tuple(np.flatnonzero(np.abs(m.theta.beta) > 1e-10))
    rep = dpd_loss(m.theta, d, m.alpha, m.penalty)
    assert abs(rep.value - m.loss.value) < 1e-10
    trace = np.array(m.objective_trace)
    assert np.all(np.diff(trace) <= 1e-12)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(tol=0)
    with pytest.raises(ValueError):
        FitConfig(max_outer_iters=0)
    with pytest.raises(ValueError):
        FitConfig(alpha=2.0)
    with pytest.raises(ValueError):
        FitConfig(init="magic")


def test_surrogate_identities(rng):
    d, _ = make_linear(50, 4, rng)
    th = Theta(np.linalg.lstsq(d.X, d.y, rcond=None)[0] + rng.normal(0, 0.1, 5), 1.2)
    for alpha in (0.0, 0.3):
        Z, ys = quadratic_surrogate(th, d, alpha)
        H, g = hessian_beta(th, d, alpha), grad_beta(th, d, alpha)
        assert np.allclose(Z, np.triu(Z))
        assert np.linalg.norm(Z.T @ Z - H) < 1e-10
        # gradient of (1/2)||Y* - Z b||^2 at b = beta
        assert np.max(np.abs(Z.T @ (Z @ th.beta - ys) - g)) < 1e-10
    Z, ys = quadratic_surrogate(th, d, 0.0)
    np.testing.assert_allclose(Z.T @ Z, d.X.T @ d.X / (50 * 1.44), rtol=1e-12)
    step = inner_pls_solve(Z, ys, PenaltySpec())
    np.testing.assert_allclose(step, _ols(d)[0], atol=1e-8)


def test_inner_solver_oracles(rng):
    n, k = 40, 5
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    Z = np.sqrt(n) * Q  # Z'Z / n = I
    ys = rng.standard_normal(n) * 3
    lam = 0.4
    b = inner_pls_solve(Z, ys, PenaltySpec("l1", lam))
    c = Z.T @ ys / n
    expect = np.sign(c) * np.maximum(np.abs(c) - lam, 0)
    expect[0] = c[0]
    np.testing.assert_allclose(b, expect, atol=1e-9)

    Zs = rng.standard_normal((30, 4))
    ys = rng.standard_normal(30)
    np.testing.assert_allclose(inner_pls_solve(Zs, ys, PenaltySpec("l1", 0.0)),
                               np.linalg.lstsq(Zs, ys, rcond=None)[0], atol=1e-8)
    U = np.triu(rng.standard_normal((4, 4))) + 3 * np.eye(4)
    np.testing.assert_allclose(inner_pls_solve(U, ys[:4], PenaltySpec()),
                               linalg.solve_triangular(U, ys[:4]), atol=1e-12)
    b0 = Zs[:, 0] @ ys / (Zs[:, 0] @ Zs[:, 0])
    lam_max = np.max(np.abs(Zs[:, 1:].T @ (ys - Zs[:, 0] * b0))) / 30
    for fam in ("l1", "scad"):
        b = inner_pls_solve(Zs, ys, PenaltySpec(fam, lam_max * 1.0001))
        np.testing.assert_array_equal(b[1:], 0.0)
        assert b[0] == pytest.approx(b0, abs=1e-9)
        b = inner_pls_solve(Zs, ys, PenaltySpec(fam, lam_max * 0.9))
        assert np.any(b[1:] != 0)


def test_scad_inner_matches_brute_force(rng):
    # orthonormal design: each coordinate is a 1-d SCAD problem
    n, k = 50, 6
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    Z = np.sqrt(n) * Q
    ys = rng.standard_normal(n) * 4
    pen = PenaltySpec("scad", 0.8, 3.7)
    b = inner_pls_solve(Z, ys, pen)
    c = Z.T @ ys / n
    grid = np.linspace(-15, 15, 300001)
    from robreg.penalty import penalty_value
    pv = penalty_value(pen, np.abs(grid))
    for j in range(1, k):
        obj = 0.5 * (grid - c[j]) ** 2 + pv
        assert b[j] == pytest.approx(grid[np.argmin(obj)], abs=2e-4)


def test_update_sigma():
    rng = np.random.default_rng(7)
    n = 50
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    beta = np.array([1.0, 2.0])
    e = rng.standard_normal(n)
    clean = Dataset(X @ beta + e, X)
    s0 = update_sigma(beta, clean, 0.0)
    assert s0 == pytest.approx(np.sqrt(np.mean(e**2)), abs=1e-12)
    e_out = e.copy()
    e_out[3] = 10.0
    dirty = Dataset(X @ beta + e_out, X)
    s_a = update_sigma(beta, dirty, 0.3)
    # independent oracle: fine grid over sigma of the loss written out directly
    grid = np.linspace(0.3, 3.0, 270001)
    a = 0.3
    fa = np.exp(-a * e_out[None, :] ** 2 / (2 * grid[:, None] ** 2)).mean(axis=1)
    loss = (2 * np.pi) ** (-a / 2) * grid ** (-a) * (1 / np.sqrt(1 + a) - (1 + a) / a * fa)
    assert s_a == pytest.approx(grid[np.argmin(loss)], abs=2e-5)
    assert abs(s_a / s0 - 1) < 0.10
    assert update_sigma(beta, dirty, 0.0) / s0 > 1.25

    sym = Dataset(X @ beta + np.where(np.arange(n) % 2, 0.7, -0.7), X)
    flip = Dataset(X @ beta + np.where(np.arange(n) % 3, 0.7, -0.7), X)
    assert update_sigma(beta, sym, 0.4) == pytest.approx(update_sigma(beta, flip, 0.4), rel=1e-9)
    with pytest.raises(BracketFailure):
        update_sigma(beta, clean, 0.3, bracket=(1e-15, 1e-14))


def test_alpha_zero_fit_is_ols(rng):
    for _ in range(5):
        n, p = rng.integers(30, 120), rng.integers(2, 8)
        d, _ = make_linear(n, p, rng, sigma=rng.uniform(0.1, 5))
        m = fit_mdpde(d, FitConfig(alpha=0.0))
        b, s = _ols(d)
        assert np.max(np.abs(m.theta.beta - b)) < 1e-8 and abs(m.theta.sigma - s) < 1e-8
        assert m.converged
        _check_model(m, d)


def test_lambda_above_max_gives_null_model(rng):
    d, _ = make_linear(60, 5, rng)
    # the joint (beta, sigma) problem is not convex even at alpha = 0, so start at the null fit
    lam_max, theta0 = mdpde_lambda_max(d, 0.0)
    m = fit_mdpde(d, FitConfig(alpha=0.0, penalty=PenaltySpec("l1", lam_max * 1.001), init=theta0))
    assert m.active.indices == (0,)
    _check_model(m, d)
    # for alpha > 0 the loss is not convex; lambda_max is the subgradient bound at the
    # intercept-only MDPDE, which is stationary there
    lam_max, theta0 = mdpde_lambda_max(d, 0.3)
    g = grad_beta(theta0, d, 0.3)
    assert abs(g[0]) < 1e-6 and np.max(np.abs(g[1:])) == pytest.approx(lam_max, rel=1e-12)
    r = d.y - d.y.mean()
    lam0 = np.max(np.abs(d.X[:, 1:].T @ r)) / (d.n * np.mean(r**2))
    assert mdpde_lambda_max(d, 0.0)[0] == pytest.approx(lam0, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.6, 1.0])
@pytest.mark.parametrize("family", ["l1", "scad"])
def test_kkt_and_descent(rng, alpha, family):
    d, _ = make_linear(80, 6, rng, beta=np.array([1, 2, -1.5, 0, 0, 0.5, 0]))
    y = d.y.copy()
    y[:4] += 12
    d = Dataset(y, d.X)
    for lam in (0.02, 0.1):
        m = fit_mdpde(d, FitConfig(alpha=alpha, penalty=PenaltySpec(family, lam)))
        assert m.converged
        assert kkt_violation(m, d) < 1e-5 * (1 + lam)
        _check_model(m, d)


def test_robust_fit_resists_outliers(rng):
    beta = np.array([1.0, 2.0, -1.0])
    d, _ = make_linear(100, 2, rng, sigma=0.5, beta=beta)
    y = d.y.copy()
    y[:10] += 20
    bad = Dataset(y, d.X)
    m = fit_mdpde(bad, FitConfig(alpha=0.3))
    assert np.max(np.abs(m.theta.beta - beta)) < 0.25
    assert np.max(np.abs(fit_ols(bad).theta.beta - beta)) > 1.0


def test_permutation_equivariance(rng):
    d, _ = make_linear(70, 5, rng)
    perm = np.array([0, 3, 1, 5, 2, 4])
    dp = Dataset(d.y, d.X[:, perm])
    for pen in (PenaltySpec("l1", 0.05), PenaltySpec("scad", 0.1)):
        cfg = FitConfig(alpha=0.25, penalty=pen, tol=1e-10)
        a = fit_mdpde(d, cfg).theta.beta
        b = fit_mdpde(dp, cfg).theta.beta
        np.testing.assert_allclose(b, a[perm], atol=1e-6)


def test_warm_start_matches_cold_start(rng):
    d, _ = make_linear(90, 6, rng)
    ds, _ = robust_standardize(d)
    lam_max, theta = mdpde_lambda_max(ds, 0.2)
    # at lambda_max itself the null solution is degenerate and the cold start crawls
    for lam in np.geomspace(0.9 * lam_max, 1e-3 * lam_max, 12):
        cfg = FitConfig(alpha=0.2, penalty=PenaltySpec("l1", lam), tol=1e-10)
        warm = fit_mdpde(ds, FitConfig(**{**cfg.__dict__, "init": theta}))
        cold = fit_mdpde(ds, cfg)
        np.testing.assert_allclose(warm.theta.beta, cold.theta.beta, atol=1e-6)
        theta = warm.theta


def test_no_convergence_warning(rng):
    d, _ = make_linear(50, 3, rng)
    with pytest.warns(NoConvergence):
        m = fit_mdpde(d, FitConfig(alpha=0.5, max_outer_iters=1, init="null"))
    assert not m.converged and m.outer_iters == 1


def test_indefinite_surrogate_policy(rng):
    d, _ = make_linear(60, 3, rng, beta=np.array([0.0, 5.0, -5.0, 5.0]), sigma=0.3)
    far = Theta(np.zeros(4), 0.3)
    with pytest.raises(IndefiniteSurrogate):
        quadratic_surrogate(far, d, 1.0)
    with pytest.raises(IndefiniteSurrogate):
        fit_mdpde(d, FitConfig(alpha=1.0, init=far, curvature_fallback="raise"))
    m = fit_mdpde(d, FitConfig(alpha=1.0, init=far))
    assert m.converged and kkt_violation(m, d) < 1e-5


def test_ols_and_huber_exact_fit():
    X = np.column_stack([np.ones(12), np.arange(12.0), np.arange(12.0) ** 2])
    d = Dataset(X @ [1.0, -2.0, 0.5], X)
    for fit in (fit_ols, fit_huber_pilot, fit_tukey):
        m = fit(d)
        np.testing.assert_allclose(m.theta.beta, [1.0, -2.0, 0.5], atol=1e-9)
        assert m.theta.sigma >= 1e-12 and len(m.active) == 3
    with pytest.raises(SingularDesign):
        fit_ols(Dataset(np.arange(3.0), np.column_stack([np.ones(3), np.eye(3)])))
    with pytest.raises(SingularDesign):
        fit_ols(Dataset(np.arange(4.0), np.column_stack([np.ones(4), np.arange(4.0), np.arange(4.0)])))


def test_huber_symmetric_pair_fixture():
    x1 = np.array([1, 1, -1, -1, 1, 1, -1, -1.0])
    x2 = np.array([1, -1, 1, -1, 1, -1, 1, -1.0])
    e = 0.1 * np.array([1, -1, -1, 1, -1, 1, 1, -1.0])
    beta = np.array([2.0, 1.0, -0.5])
    Xb = np.column_stack([np.ones(8), x1, x2])
    base = Dataset(Xb @ beta + e, Xb)
    X = np.vstack([Xb, [[1, 0, 0], [1, 0, 0]]])
    y = np.concatenate([base.y, [beta[0] + 5.0, beta[0] - 5.0]])
    h = fit_huber_pilot(Dataset(y, X))
    np.testing.assert_allclose(h.theta.beta, fit_ols(base).theta.beta, atol=1e-6)


def test_huber_beats_ols_with_gross_outlier():
    rng = np.random.default_rng(5)
    beta = np.array([1.0, 2.0, -1.0])
    X = np.column_stack([np.ones(30), rng.standard_normal((30, 2))])
    y = X @ beta + 0.3 * rng.standard_normal(30)
    y[7] += 40
    d = Dataset(y, X)
    assert np.all(np.abs(fit_huber_pilot(d).theta.beta - beta) < np.abs(fit_ols(d).theta.beta - beta))


def test_lasso_comparator(rng):
    d, _ = make_linear(60, 4, rng)
    m = fit_lasso(d, 0.0)
    np.testing.assert_allclose(m.theta.beta, _ols(d)[0], atol=1e-8)
    m = fit_lasso(d, 0.2)
    r = d.y - d.X @ m.theta.beta
    g = -d.X.T @ r / d.n
    nz = m.theta.beta != 0
    assert abs(g[0]) < 1e-7
    assert np.all(np.abs(g[1:][nz[1:]] + 0.2 * np.sign(m.theta.beta[1:][nz[1:]])) < 1e-7)
    assert np.all(np.abs(g[1:][~nz[1:]]) <= 0.2 + 1e-9)
