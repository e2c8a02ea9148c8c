"""Robust Cp / robust AIC, lambda-path search and adaptive choice of alpha.

All functions expect a standardized dataset, the same one the models were
fitted on.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Theta
from .dpd import LOG_2PI, _f_alpha, eta_alpha, grad_beta, xi_alpha
from .errors import RobRegError, SelectionFailure, SingularS
from .inference import COND_LIMIT, _gram, bias_vector, efficiency_ratio, sigma_alpha_sq
from .penalty import PenaltySpec, penalty_second_deriv_matrix
from .solver import FitConfig, FittedModel, fit_lasso, fit_mdpde, lasso_lambda_max

log = logging.getLogger(__name__)

CRITERIA = ("rcp", "raic", "cp", "aic")


@dataclass(frozen=True)
class CriterionValue:
    kind: str
    value: float
    df: float
    lam: float
    sigma: float = float("nan")
    active_count: int = 0


@dataclass(frozen=True)
class LambdaPath:
    grid: np.ndarray
    models: tuple  # FittedModel or None where the fit failed
    failures: tuple = ()  # (index, message)
    alpha: float = 0.0


@dataclass(frozen=True)
class SelectionResult:
    grid: np.ndarray
    values: tuple
    chosen_lambda: float
    model: FittedModel
    alpha: float
    criterion: str
    failures: tuple = field(default=(), repr=False)

    @property
    def chosen_index(self):
        return int(np.flatnonzero(self.grid == self.chosen_lambda)[0])


# --- criteria ---------------------------------------------------------------

def s_matrix(model: FittedModel, d: Dataset, alpha):
    idx = model.active.as_array()
    if idx.size == 0:
        raise SingularS("empty active set")
    XA = d.X[:, idx]
    xa = xi_alpha(alpha, model.theta.sigma)
    P2 = penalty_second_deriv_matrix(model.penalty, model.theta.beta)[np.ix_(idx, idx)]
    S = xa / d.n * (XA.T @ XA) + P2 / (1 + alpha)
    if np.linalg.cond(S) > COND_LIMIT:
        raise SingularS(f"S matrix is numerically singular (|A| = {idx.size})")
    return S


def degrees_of_freedom(model: FittedModel, d: Dataset, alpha) -> float:
    """Effective number of parameters (xi_a/n) tr(S^{-1} X_A' X_A)."""
    S = s_matrix(model, d, alpha)
    XA = d.X[:, model.active.as_array()]
    M = xi_alpha(alpha, model.theta.sigma) / d.n * (XA.T @ XA)
    return float(np.trace(np.linalg.solve(S, M)))


def robust_cp(model, d, alpha, sigma_u, variant="squared") -> CriterionValue:
    """n s^2 / s_u^2 - n + 2 df ("squared") or n s / s_u^2 - n + 2 df ("literal")."""
    df = degrees_of_freedom(model, d, alpha)
    s = model.theta.sigma
    if variant == "squared":
        fit_term = d.n * s**2 / sigma_u**2
    elif variant == "literal":
        fit_term = d.n * s / sigma_u**2
    else:
        raise ValueError(f"unknown RCp variant {variant!r}")
    return CriterionValue("rcp", fit_term - d.n + 2 * df, df, model.penalty.lam, s, len(model.active))


def estimate_sigma_unbiased(d: Dataset, alpha, model: FittedModel | None = None) -> float:
    """Full-model (lambda = 0) MDPDE scale inflated by sqrt(n / (n - |A|))."""
    if d.n <= d.p + 1:
        raise ValueError(f"need n > p + 1 for the full-model scale (n={d.n}, p={d.p})")
    if model is None:
        model = fit_mdpde(d, FitConfig(alpha=alpha))
    return model.theta.sigma * math.sqrt(d.n / (d.n - len(model.active)))


def _fit_term(model, d, alpha):
    r = d.y - d.X @ model.theta.beta
    s = model.theta.sigma
    if alpha == 0:
        return float(np.sum(0.5 * (LOG_2PI + 2 * math.log(s)) + r**2 / (2 * s**2)))
    return -(1 + alpha) / alpha * float(np.sum(_f_alpha(r, s, alpha)))


def robust_aic(model, d, alpha, variant="derived") -> CriterionValue:
    """Robust AIC: data-fit term plus tr[(Sigma* + b* b*')(Psi_A + c P'')].

    ``variant="derived"`` uses c = 1/(1+alpha); ``"displayed"`` uses c = 1.
    """
    if variant not in ("derived", "displayed"):
        raise ValueError(f"unknown RAIC variant {variant!r}")
    idx = model.active.as_array()
    if idx.size == 0:
        raise SingularS("empty active set")
    s = model.theta.sigma
    try:
        G = _gram(d, idx)
    except RobRegError as exc:
        raise SingularS(str(exc)) from None
    k = idx.size
    xa, ea = xi_alpha(alpha, s), eta_alpha(alpha, s)
    cov = np.zeros((k + 1, k + 1))
    cov[:k, :k] = efficiency_ratio(alpha, s) * np.linalg.inv(G)
    cov[k, k] = sigma_alpha_sq(alpha, s)
    bstar = np.append(bias_vector(model, d, alpha, G), 0.0)
    psi = np.zeros((k + 1, k + 1))
    psi[:k, :k] = xa * G
    psi[k, k] = ea
    c = 1 / (1 + alpha) if variant == "derived" else 1.0
    psi[:k, :k] += c * penalty_second_deriv_matrix(model.penalty, model.theta.beta)[np.ix_(idx, idx)]
    trace = float(np.sum((cov + np.outer(bstar, bstar)) * psi.T))
    return CriterionValue("raic", _fit_term(model, d, alpha) + trace, trace, model.penalty.lam, s, k)


def _lasso_sigma_u2(d):
    if d.n <= d.p + 1:
        raise ValueError("classical Cp needs n > p + 1")
    beta = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    return float(np.sum((d.y - d.X @ beta) ** 2)) / (d.n - d.p - 1)


def classical_cp(model, d, sigma_u2) -> CriterionValue:
    rss = float(np.sum((d.y - d.X @ model.theta.beta) ** 2))
    k = len(model.active)
    return CriterionValue("cp", rss / sigma_u2 - d.n + 2 * k, float(k), model.penalty.lam,
                          model.theta.sigma, k)


def classical_aic(model, d) -> CriterionValue:
    """Negative log-likelihood at the MLE scale plus the parameter count (|A| + 1)."""
    k = len(model.active)
    return CriterionValue("aic", _fit_term(model, d, 0.0) + k + 1, float(k + 1),
                          model.penalty.lam, model.theta.sigma, k)


# --- lambda paths -----------------------------------------------------------

def mdpde_lambda_max(d: Dataset, alpha):
    """Largest |dV/dbeta_j| (j >= 1) at the intercept-only MDPDE; returns (lambda_max, theta0)."""
    null = Dataset(d.y, d.X[:, :1])
    m = fit_mdpde(null, FitConfig(alpha=alpha, init="null"))
    beta = np.zeros(d.X.shape[1])
    beta[0] = m.theta.beta[0]
    theta0 = Theta(beta, m.theta.sigma)
    g = grad_beta(theta0, d, alpha)
    return float(np.max(np.abs(g[1:]))) if d.p else 0.0, theta0


def make_grid(lam_max, n_grid=50, ratio=1e-4):
    if n_grid < 1:
        raise ValueError("grid size must be positive")
    if n_grid == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, ratio * lam_max, n_grid)


def lambda_path(d: Dataset, alpha, family="l1", n_grid=50, grid=None, scad_a=3.7,
                fit_kwargs=None) -> LambdaPath:
    """Warm-started MDPDE fits along a descending lambda grid."""
    lam_max, theta = mdpde_lambda_max(d, alpha)
    if grid is None:
        grid = make_grid(lam_max, n_grid)
    grid = np.asarray(grid, dtype=float)
    base = PenaltySpec(family, 0.0, scad_a)
    models, failures = [], []
    for i, lam in enumerate(grid):
        cfg = FitConfig(alpha=alpha, penalty=base.with_lambda(lam), init=theta, **(fit_kwargs or {}))
        try:
            m = fit_mdpde(d, cfg)
        except RobRegError as exc:
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            models.append(None)
            continue
        models.append(m)
        theta = m.theta
    return LambdaPath(grid, tuple(models), tuple(failures), alpha)


def lasso_path(d: Dataset, n_grid=50, grid=None) -> LambdaPath:
    if grid is None:
        grid = make_grid(lasso_lambda_max(d), n_grid)
    grid = np.asarray(grid, dtype=float)
    models, warm = [], None
    for lam in grid:
        m = fit_lasso(d, lam, warm_start=warm)
        warm = m.theta.beta
        models.append(m)
    return LambdaPath(grid, tuple(models), (), 0.0)


def evaluate_path(path: LambdaPath, d: Dataset, criterion, sigma_u=None,
                  rcp_variant="squared", raic_variant="derived") -> SelectionResult:
    """Score every model on ``path`` and pick the minimizer (ties go to the larger lambda)."""
    criterion = criterion.lower()
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    alpha = path.alpha
    if criterion == "rcp" and sigma_u is None:
        sigma_u = estimate_sigma_unbiased(d, alpha)
    if criterion == "cp":
        sigma_u2 = _lasso_sigma_u2(d)
    values, failures = [], list(path.failures)
    for i, m in enumerate(path.models):
        if m is None:
            values.append(None)
            continue
        try:
            if criterion == "rcp":
                v = robust_cp(m, d, alpha, sigma_u, rcp_variant)
            elif criterion == "raic":
                v = robust_aic(m, d, alpha, raic_variant)
            elif criterion == "cp":
                v = classical_cp(m, d, sigma_u2)
            else:
                v = classical_aic(m, d)
        except RobRegError as exc:
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            values.append(None)
            continue
        values.append(v)
    scores = np.array([v.value if v is not None and math.isfinite(v.value) else np.inf for v in values])
    if not np.isfinite(scores).any():
        raise SelectionFailure(f"every lambda failed: {failures}")
    best = int(np.argmin(scores))
    for i, msg in failures:
        log.info("lambda %d failed: %s", i, msg)
    return SelectionResult(path.grid, tuple(values), float(path.grid[best]), path.models[best],
                           alpha, criterion, tuple(failures))


def select_lambda(d: Dataset, alpha, criterion="rcp", n_grid=50, penalty="l1", grid=None,
                  scad_a=3.7, rcp_variant="squared", raic_variant="derived",
                  sigma_u=None) -> SelectionResult:
    """Grid search over lambda with RCp/RAIC (MDPDE at ``alpha``) or classical Cp/AIC (LASSO)."""
    criterion = criterion.lower()
    if criterion in ("cp", "aic"):
        path = lasso_path(d, n_grid, grid)
    else:
        path = lambda_path(d, alpha, penalty, n_grid, grid, scad_a)
    return evaluate_path(path, d, criterion, sigma_u, rcp_variant, raic_variant)


# --- adaptive alpha ---------------------------------------------------------

def default_alpha_grid(step=0.0125):
    return np.round(np.arange(0.0, 1.0 + step / 2, step), 10)


def mse_estimate(model: FittedModel, d: Dataset, pilot: FittedModel, alpha, sigma=None):
    """(bias term, variance term) of the empirical MSE against the pilot on the active set.

    The variance factor xi_{2a}/xi_a^2 is evaluated at the model's own scale
    unless ``sigma`` is given (pass ``pilot.theta.sigma`` for the pilot scale).
    """
    idx = model.active.as_array()
    diff = model.theta.beta[idx] - pilot.theta.beta[idx]
    XA = d.X[:, idx]
    s = model.theta.sigma if sigma is None else sigma
    var = efficiency_ratio(alpha, s) * float(np.trace(np.linalg.inv(XA.T @ XA)))
    return float(diff @ diff), var


def adaptive_alpha(d: Dataset, pilot: FittedModel, alpha_grid=None, criterion="rcp",
                   n_grid=50, variance_scale="model", **select_kwargs):
    """Pick alpha on ``alpha_grid`` minimizing the pilot-anchored MSE estimate.

    ``variance_scale`` chooses where xi_{2a}/xi_a^2 is evaluated: at each
    selected model's scale ("model") or at the pilot scale ("pilot").

    Returns ``(alpha_star, records)``; each record is a dict with the selected
    lambda, bias and variance terms, or an ``error`` entry when that alpha failed.
    """
    if variance_scale not in ("model", "pilot"):
        raise ValueError(f"unknown variance scale {variance_scale!r}")
    if alpha_grid is None:
        alpha_grid = default_alpha_grid()
    records = []
    for a in np.asarray(alpha_grid, dtype=float):
        a = float(a)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                sel = select_lambda(d, a, criterion, n_grid, **select_kwargs)
            sig = pilot.theta.sigma if variance_scale == "pilot" else None
            bias, var = mse_estimate(sel.model, d, pilot, a, sig)
        except (RobRegError, np.linalg.LinAlgError) as exc:
            records.append({"alpha": a, "error": f"{type(exc).__name__}: {exc}"})
            continue
        records.append({"alpha": a, "lambda": sel.chosen_lambda, "bias": bias, "variance": var,
                        "mse": bias + var, "active_count": len(sel.model.active)})
    ok = [r for r in records if "mse" in r]
    if not ok:
        raise SelectionFailure("adaptive alpha: every grid value failed")
    best = min(ok, key=lambda r: r["mse"])
    return best["alpha"], records
