"""Asymptotic covariance / bias of the MDPDE and its influence function."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Theta
from .dpd import xi_alpha, eta_alpha
from .errors import AlphaZero, SingularGram, SingularPsi
from .penalty import NO_PENALTY, PenaltySpec, penalty_second_deriv_matrix

COND_LIMIT = 1e12


def sigma_alpha_sq(alpha, sigma):
    """Asymptotic variance of sqrt(n) (sigma_hat^2 - sigma^2)."""
    xa, ea, e2a = xi_alpha(alpha, sigma), eta_alpha(alpha, sigma), eta_alpha(2 * alpha, sigma)
    return (e2a - alpha**2 / 4 * xa**2) / ea**2


def efficiency_ratio(alpha, sigma=1.0):
    """xi_{2a} / xi_a^2, the inflation of the beta covariance relative to Sigma^{-1}."""
    return xi_alpha(2 * alpha, sigma) / xi_alpha(alpha, sigma) ** 2


def _gram(d, idx):
    XA = d.X[:, idx]
    G = XA.T @ XA / d.n
    if G.size == 0 or np.linalg.cond(G) > COND_LIMIT:
        raise SingularGram(f"active-set Gram matrix is singular (|A| = {len(idx)})")
    return G


def _inv_sqrt(G):
    w, V = np.linalg.eigh(G)
    return (V / np.sqrt(w)) @ V.T


def bias_vector(model, d: Dataset, alpha, G=None):
    """Plug-in bias (sqrt(xi_2a)/xi_a) Sigma_A^{-1/2} P'(beta_A) (sign included, intercept 0)."""
    idx = model.active.as_array()
    if G is None:
        G = _gram(d, idx)
    s = model.theta.sigma
    grad = model.penalty.gradient(model.theta.beta)[idx]
    if not np.any(grad):
        return np.zeros(len(idx))
    return math.sqrt(xi_alpha(2 * alpha, s)) / xi_alpha(alpha, s) * (_inv_sqrt(G) @ grad)


@dataclass(frozen=True)
class AsymptoticSummary:
    active: tuple
    cov_beta: np.ndarray
    bias: np.ndarray
    sigma2_var: float
    xi_a: float
    xi_2a: float
    eta_a: float
    eta_2a: float
    debiased_beta: np.ndarray

    def standard_errors(self, n):
        return np.sqrt(np.diag(self.cov_beta) / n)


def asymptotic_summary(model, d: Dataset, alpha) -> AsymptoticSummary:
    idx = model.active.as_array()
    G = _gram(d, idx)
    s = model.theta.sigma
    cov = efficiency_ratio(alpha, s) * np.linalg.inv(G)
    b = bias_vector(model, d, alpha, G)
    return AsymptoticSummary(
        active=tuple(int(i) for i in idx),
        cov_beta=0.5 * (cov + cov.T),
        bias=b,
        sigma2_var=sigma_alpha_sq(alpha, s),
        xi_a=xi_alpha(alpha, s),
        xi_2a=xi_alpha(2 * alpha, s),
        eta_a=eta_alpha(alpha, s),
        eta_2a=eta_alpha(2 * alpha, s),
        debiased_beta=model.theta.beta[idx] - b / math.sqrt(d.n),
    )


def influence_function(theta_g: Theta, d: Dataset, t, alpha, pen: PenaltySpec = NO_PENALTY):
    """Influence of point contamination at responses ``t`` (one per design row).

    Returns a vector of length p+2: the beta block followed by the entry for
    sigma^2.  The scale row is centred by +(alpha/2) xi_a, which makes the
    estimating function unbiased under the model.
    """
    if alpha <= 0:
        raise AlphaZero("the influence function is unbounded at alpha = 0")
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        t = np.full(d.n, float(t))
    X, n = d.X, d.n
    s = theta_g.sigma
    k = (2 * math.pi) ** (alpha / 2)
    rt = t - X @ theta_g.beta
    damp = np.exp(-alpha * rt**2 / (2 * s**2))
    xa = xi_alpha(alpha, s)
    num = np.empty(X.shape[1] + 1)
    num[:-1] = X.T @ (rt * damp) / (n * k * s ** (alpha + 2))
    num[-1] = float(np.mean((rt**2 - s**2) * damp)) / (2 * k * s ** (alpha + 4)) + alpha / 2 * xa
    psi = np.zeros((num.size, num.size))
    psi[:-1, :-1] = xa / n * (X.T @ X)
    psi[-1, -1] = eta_alpha(alpha, s)
    psi[:-1, :-1] += penalty_second_deriv_matrix(pen, theta_g.beta) / (1 + alpha)
    if np.linalg.cond(psi) > COND_LIMIT:
        raise SingularPsi("Psi_n plus penalty curvature is singular")
    return np.linalg.solve(psi, num)


@dataclass(frozen=True)
class InfluenceAssessment:
    points: np.ndarray
    if_values: np.ndarray  # (p+2) x len(points)
    norms: np.ndarray
    sup_norm: float
    relative: bool = True


def influence_curve(model, d: Dataset, alpha, probe_grid, relative=True) -> InfluenceAssessment:
    """Evaluate the influence function with every t_i moved to each probe.

    With ``relative`` (default) a probe v means t_i = x_i' beta_hat + v, i.e.
    an offset from the fitted surface; otherwise t_i = v for every row.  The
    fitted theta stands in for theta_g.
    """
    probes = np.asarray(probe_grid, dtype=float).ravel()
    fit = d.X @ model.theta.beta
    vals = np.column_stack([
        influence_function(model.theta, d, fit + v if relative else np.full(d.n, v), alpha,
                           model.penalty)
        for v in probes
    ])
    norms = np.max(np.abs(vals), axis=0)
    return InfluenceAssessment(probes, vals, norms, float(norms.max()), relative)
