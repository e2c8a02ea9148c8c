"""Minimum-DPD fitting by iterated quadratic surrogates, plus OLS/Huber/LASSO comparators."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import brentq, minimize_scalar

from . import _cd
from .data import ActiveSet, Dataset, Theta, mad
from .dpd import (
    DpdConfig,
    LossReport,
    dpd_loss,
    grad_beta,
    hessian_beta,
    loss_from_residuals,
    psd_factor,
    sigma_equation,
    xi_alpha,
)
from .errors import BracketFailure, IndefiniteSurrogate, InnerNoConvergence, NoConvergence, SingularDesign
from .penalty import NO_PENALTY, PenaltySpec, penalty_deriv

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12
_FAMILY_CODE = {"none": _cd.NONE, "l1": _cd.L1, "scad": _cd.SCAD}


@dataclass(frozen=True)
class FitConfig:
    alpha: float = 0.0
    penalty: PenaltySpec = NO_PENALTY
    max_outer_iters: int = 100
    tol: float = 1e-7
    # "auto" (OLS at alpha=0, Huber otherwise), "ols", "huber", "null" or a Theta
    init: object = "auto"
    inner_max_sweeps: int = 1000
    inner_tol: float = 1e-9
    zero_threshold: float = 1e-10
    # on an indefinite Hessian: "expected" swaps in (1+a) xi_a X'X/n, "raise" propagates
    curvature_fallback: str = "expected"

    def __post_init__(self):
        DpdConfig(self.alpha)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.curvature_fallback not in ("expected", "raise"):
            raise ValueError("curvature_fallback must be 'expected' or 'raise'")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if not (isinstance(self.init, Theta) or self.init in ("auto", "ols", "huber", "null")):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class FittedModel:
    theta: Theta
    active: ActiveSet
    converged: bool
    outer_iters: int
    loss: LossReport
    alpha: float
    penalty: PenaltySpec
    method: str = "mdpde"
    objective_trace: tuple = field(default=(), repr=False)
    sigma_equation: float = float("nan")

    @property
    def beta(self):
        return self.theta.beta

    @property
    def sigma(self):
        return self.theta.sigma

    def to_dict(self):
        return {
            "method": self.method,
            "alpha": self.alpha,
            "penalty": self.penalty.family,
            "lambda": self.penalty.lam,
            "beta": [float(b) for b in self.theta.beta],
            "sigma": self.theta.sigma,
            "active": list(self.active.indices),
            "converged": self.converged,
            "iters": self.outer_iters,
            "loss": self.loss.value,
        }


def quadratic_surrogate(theta: Theta, d: Dataset, cfg):
    """Factor the beta-Hessian as Z^T Z and form Y* with Z^T Y* = H beta - grad.

    (1/2)||Y* - Z b||^2 then has gradient grad + H (b - beta), i.e. it is the
    second-order expansion of the loss around ``theta`` up to a constant.
    """
    Z, ystar, _ = _surrogate(theta, d, cfg)
    return Z, ystar


def _surrogate(theta, d, cfg, fallback=False):
    H = hessian_beta(theta, d, cfg)
    g = grad_beta(theta, d, cfg)
    try:
        Z, jitter = psd_factor(H)
    except IndefiniteSurrogate:
        if not fallback:
            raise
        # far from the optimum: use the model-expected curvature instead
        alpha = cfg.alpha if isinstance(cfg, DpdConfig) else float(cfg)
        H = (1 + alpha) * xi_alpha(alpha, theta.sigma) / d.n * (d.X.T @ d.X)
        Z, jitter = psd_factor(H)
    rhs = H @ theta.beta + jitter * theta.beta - g
    ystar = linalg.solve_triangular(Z, rhs, trans="T", check_finite=False)
    return Z, ystar, jitter


def inner_pls_solve(Z, ystar, penalty: PenaltySpec, warm_start=None, n=None,
                    max_sweeps=1000, tol=1e-9):
    """Minimize (1/(2n))||Y* - Z b||^2 + sum_{j>=1} P(|b_j|).

    ``n`` defaults to the number of rows of ``Z``.  Without an active penalty
    the least-squares system is solved directly; otherwise cyclic coordinate
    descent runs from ``warm_start`` (zeros if omitted).  Hitting
    ``max_sweeps`` emits :class:`InnerNoConvergence` and returns the last iterate.
    """
    Z = np.asarray(Z, dtype=float)
    ystar = np.asarray(ystar, dtype=float)
    m, k = Z.shape
    if n is None:
        n = m
    if not penalty.active:
        if m == k and np.allclose(Z, np.triu(Z), rtol=0, atol=0):
            return linalg.solve_triangular(Z, ystar, check_finite=False)
        return np.linalg.lstsq(Z, ystar, rcond=None)[0]
    G = Z.T @ Z / n
    c = Z.T @ ystar / n
    return _cd_gram(G, c, penalty, warm_start, max_sweeps, tol)


def _cd_gram(G, c, penalty, warm_start, max_sweeps, tol):
    k = G.shape[0]
    beta = np.zeros(k) if warm_start is None else np.array(warm_start, dtype=float)
    mask = np.ones(k, dtype=np.bool_)
    mask[0] = False
    sweeps, ok = _cd.cd_solve(
        np.ascontiguousarray(G), np.ascontiguousarray(c), beta, penalty.lam,
        _FAMILY_CODE[penalty.family], penalty.scad_a, mask, tol, max_sweeps,
    )
    if not ok:
        warnings.warn(f"coordinate descent stopped after {sweeps} sweeps", InnerNoConvergence)
    return beta


def update_sigma(beta, d: Dataset, cfg, bracket=None):
    """Scale minimizing the unpenalized loss at fixed ``beta``.

    Bounded Brent search over log(sigma), polished by root-finding on the
    scale equation.  The default bracket is [1e-3 s, 1e3 s] with s the MAD of the residuals about
    zero (their root mean square if that MAD is degenerate); a
    minimizer on the bracket edge triggers up to three thousandfold expansions
    before :class:`BracketFailure`.
    """
    alpha = cfg.alpha if isinstance(cfg, DpdConfig) else float(cfg)
    r = d.y - d.X @ np.asarray(beta)
    if alpha == 0:
        return max(math.sqrt(float(np.mean(r**2))), SIGMA_FLOOR)
    rms = math.sqrt(float(np.mean(r**2)))
    if not rms > 0:
        return SIGMA_FLOOR
    s = mad(r, 0.0)
    if not s > 1e-8 * rms:
        s = rms
    lo, hi = bracket if bracket is not None else (1e-3 * s, 1e3 * s)
    lo, hi = math.log(lo), math.log(hi)
    r2 = r**2
    c0 = (2 * math.pi) ** (-alpha / 2)
    a1 = c0 / math.sqrt(1 + alpha)
    a2 = c0 * (1 + alpha) / alpha

    def objective(ls):
        # loss_from_residuals written out in log-sigma for speed
        sig = math.exp(ls)
        return sig ** (-alpha) * (a1 - a2 * float(np.mean(np.exp(-alpha * r2 / (2 * sig * sig)))))

    for _ in range(4):
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        x = float(res.x)
        if lo + 1e-6 <= x <= hi - 1e-6:
            return max(math.exp(_polish(x, r2, alpha, objective)), SIGMA_FLOOR)
        if x - lo < 1e-6:
            lo -= math.log(1e3)
        else:
            hi += math.log(1e3)
    raise BracketFailure("scale objective has no interior minimizer in the expanded bracket")


def _polish(x, r2, alpha, objective):
    """Refine a Brent minimizer in log(sigma) by root-finding on the scale equation.

    Function values are too flat near the minimum to locate it beyond about
    1e-8 relative; the derivative has a clean sign change.
    """
    c0 = (2 * math.pi) ** (-alpha / 2)

    def eq(ls):
        s2 = math.exp(2 * ls)
        fa = np.exp(-alpha * r2 / (2 * s2))
        return s2 ** (-alpha / 2) * c0 * (
            -alpha / math.sqrt(1 + alpha) + (1 + alpha) * float(np.mean((1 - r2 / s2) * fa)))

    a, b = x - 1e-4, x + 1e-4
    if not eq(a) < 0 < eq(b):
        return x
    root = brentq(eq, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return root if objective(root) <= objective(x) + 1e-15 else x


def _objective(beta, sigma, d, alpha, pen):
    return loss_from_residuals(d.y - d.X @ beta, sigma, alpha) + pen.total(beta)


def _null_theta(d):
    beta = np.zeros(d.X.shape[1])
    beta[0] = float(np.median(d.y))
    return Theta(beta, max(mad(d.y), SIGMA_FLOOR))


def _initial_theta(d, cfg):
    init = cfg.init
    if isinstance(init, Theta):
        return init
    if init == "auto":
        if d.n <= d.p + 1:
            init = "null"
        else:
            init = "ols" if cfg.alpha == 0 else "huber"
    if init == "null":
        return _null_theta(d)
    if init == "ols":
        return fit_ols(d).theta
    return fit_huber_pilot(d).theta


def fit_mdpde(d: Dataset, cfg: FitConfig) -> FittedModel:
    """Penalized minimum-DPD estimate of (beta, sigma) on ``d``.

    Each outer iteration takes a surrogate beta step (halved toward the
    previous iterate until the true objective does not increase) followed by
    a one-dimensional sigma update.  Stops when the sup-norm change of
    (beta, sigma) falls below ``tol * (1 + |theta|_inf)``.  The caller is
    responsible for standardizing ``d``.
    """
    alpha, pen = cfg.alpha, cfg.penalty
    theta0 = _initial_theta(d, cfg)
    beta = np.array(theta0.beta, dtype=float)
    sigma = float(theta0.sigma)
    F = _objective(beta, sigma, d, alpha, pen)
    trace = [F]
    converged = False
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        Z, ystar, _ = _surrogate(Theta(beta, sigma), d, alpha,
                                 fallback=cfg.curvature_fallback == "expected")
        proposal = inner_pls_solve(Z, ystar, pen, warm_start=beta, n=1,
                                   max_sweeps=cfg.inner_max_sweeps, tol=cfg.inner_tol)
        step = proposal - beta
        new_beta, F_beta = beta, F
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            Fc = _objective(cand, sigma, d, alpha, pen)
            if Fc <= F:
                new_beta, F_beta = cand, Fc
                break
            t *= 0.5
        new_sigma = update_sigma(new_beta, d, alpha)
        F_new = _objective(new_beta, new_sigma, d, alpha, pen)
        if not F_new <= F_beta:
            new_sigma, F_new = sigma, F_beta
        change = max(float(np.max(np.abs(new_beta - beta))), abs(new_sigma - sigma))
        scale = 1.0 + max(float(np.max(np.abs(beta))), sigma)
        beta, sigma, F = new_beta, new_sigma, F_new
        trace.append(F)
        if change <= cfg.tol * scale:
            converged = True
            break
    if not converged:
        warnings.warn(f"no convergence after {cfg.max_outer_iters} outer iterations", NoConvergence)
    beta = np.where(np.abs(beta) > cfg.zero_threshold, beta, 0.0)
    theta = Theta(beta, sigma)
    return FittedModel(
        theta=theta,
        active=ActiveSet.from_beta(beta),
        converged=converged,
        outer_iters=it,
        loss=dpd_loss(theta, d, alpha, pen),
        alpha=alpha,
        penalty=pen,
        objective_trace=tuple(trace),
        sigma_equation=sigma_equation(theta, d, alpha),
    )


def kkt_violation(model: FittedModel, d: Dataset) -> float:
    """Largest violation of the stationarity / subgradient conditions at ``model``."""
    g = grad_beta(model.theta, d, model.alpha)
    beta = model.theta.beta
    pen = model.penalty
    worst = 0.0
    for j, b in enumerate(beta):
        if j == 0 or not pen.active:
            worst = max(worst, abs(g[j]))
        elif b != 0:
            worst = max(worst, abs(g[j] + math.copysign(penalty_deriv(pen, abs(b)), b)))
        else:
            worst = max(worst, abs(g[j]) - pen.lam)
    return worst


def _plain_model(d, beta, sigma, method, penalty=NO_PENALTY, active=None):
    sigma = max(float(sigma), SIGMA_FLOOR)
    theta = Theta(beta, sigma)
    if active is None:
        active = ActiveSet(tuple(range(len(beta))))
    return FittedModel(theta, active, True, 1, dpd_loss(theta, d, 0.0, penalty), 0.0,
                       penalty, method=method)


def _lstsq(X, y, w=None):
    if w is not None:
        sw = np.sqrt(w)
        X, y = X * sw[:, None], y * sw
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise SingularDesign("design matrix is rank deficient")
    return linalg.solve_triangular(R, Q.T @ y, check_finite=False)


def fit_ols(d: Dataset) -> FittedModel:
    if d.n <= d.p:
        raise SingularDesign(f"OLS needs n > p (n={d.n}, p={d.p})")
    beta = _lstsq(d.X, d.y)
    r = d.y - d.X @ beta
    return _plain_model(d, beta, math.sqrt(float(np.mean(r**2))), "ols")


def _irls(d, weight_fn, c, beta, max_iter, tol):
    s = SIGMA_FLOOR
    for _ in range(max_iter):
        r = d.y - d.X @ beta
        s = 1.4826 * float(np.median(np.abs(r)))
        if s <= SIGMA_FLOOR:
            break
        w = weight_fn(r / s, c)
        new = _lstsq(d.X, d.y, w)
        done = np.max(np.abs(new - beta)) <= tol * (1 + np.max(np.abs(beta)))
        beta = new
        if done:
            break
    return beta, s


def _huber_w(u, c):
    au = np.abs(u)
    return np.where(au <= c, 1.0, c / np.maximum(au, 1e-300))


def _bisquare_w(u, c):
    return np.where(np.abs(u) < c, (1 - (u / c) ** 2) ** 2, 0.0)


def fit_huber_pilot(d: Dataset, c=1.345, max_iter=50, tol=1e-8) -> FittedModel:
    """Huber M-estimate by IRLS with MAD scale re-estimated each iteration."""
    beta, s = _irls(d, _huber_w, c, fit_ols(d).theta.beta, max_iter, tol)
    return _plain_model(d, beta, s, "huber")


def fit_tukey(d: Dataset, c=4.685, max_iter=50, tol=1e-8) -> FittedModel:
    """Tukey bisquare M-estimate by IRLS started from the Huber fit."""
    beta, s = _irls(d, _bisquare_w, c, fit_huber_pilot(d).theta.beta, max_iter, tol)
    return _plain_model(d, beta, s, "tukey")


def lasso_lambda_max(d: Dataset) -> float:
    r = d.y - d.y.mean()
    return float(np.max(np.abs(d.X[:, 1:].T @ r))) / d.n if d.p else 0.0


def fit_lasso(d: Dataset, lam: float, warm_start=None, max_sweeps=1000, tol=1e-9) -> FittedModel:
    """Classical LASSO: (1/(2n))||y - X b||^2 + lam sum_{j>=1} |b_j|."""
    pen = PenaltySpec("l1", lam)
    G = d.X.T @ d.X / d.n
    c = d.X.T @ d.y / d.n
    if warm_start is None:
        warm_start = np.zeros(d.X.shape[1])
        warm_start[0] = d.y.mean()
    beta = _cd_gram(G, c, pen, warm_start, max_sweeps, tol) if pen.active else _lstsq(d.X, d.y)
    r = d.y - d.X @ beta
    return _plain_model(d, beta, math.sqrt(float(np.mean(r**2))), "lasso", pen,
                        ActiveSet.from_beta(beta))
