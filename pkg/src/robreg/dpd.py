"""Density power divergence loss for the normal linear model.

All functions take ``alpha >= 0``; ``alpha == 0`` is the Kullback-Leibler
(negative log-likelihood) branch and is evaluated directly rather than as a
limit.  The theta-free constant of the divergence is dropped everywhere, so
loss values are comparable across theta at a fixed alpha only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import Dataset, Theta
from .errors import AlphaZero, DimensionMismatch, IndefiniteSurrogate
from .penalty import NO_PENALTY, PenaltySpec

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class DpdConfig:
    alpha: float = 0.0

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class LossReport:
    value: float
    unpenalized: float
    penalty_part: float


def _alpha(cfg):
    return cfg.alpha if isinstance(cfg, DpdConfig) else float(cfg)


def density_f(theta: Theta, x, y):
    r = y - np.dot(x, theta.beta)
    s = theta.sigma
    return np.exp(-0.5 * (r / s) ** 2) / (math.sqrt(2 * math.pi) * s)


def _const_term(alpha, sigma):
    # first term of V_i: integral of f^(1+alpha)
    return (2 * math.pi) ** (-alpha / 2) * sigma ** (-alpha) / math.sqrt(1 + alpha)


def v_term(theta: Theta, x, y, alpha: float):
    if alpha == 0:
        raise AlphaZero("V_i is defined for alpha > 0; use -log f_i at alpha = 0")
    f = density_f(theta, x, y)
    return _const_term(alpha, theta.sigma) - (1 + alpha) / alpha * f**alpha


def _f_alpha(r, sigma, alpha):
    """f_i^alpha computed from residuals without forming f_i first."""
    return (2 * math.pi * sigma**2) ** (-alpha / 2) * np.exp(-alpha * r**2 / (2 * sigma**2))


def residuals(theta: Theta, d: Dataset):
    if theta.beta.shape[0] != d.X.shape[1]:
        raise DimensionMismatch(
            f"beta has length {theta.beta.shape[0]}, design has {d.X.shape[1]} columns"
        )
    return d.y - d.X @ theta.beta


def loss_from_residuals(r, sigma, alpha):
    """Unpenalized DPD loss (1/n) sum V_i given residuals."""
    if alpha == 0:
        return 0.5 * (LOG_2PI + 2 * math.log(sigma)) + float(np.mean(r**2)) / (2 * sigma**2)
    fa = _f_alpha(r, sigma, alpha)
    return _const_term(alpha, sigma) - (1 + alpha) / alpha * float(np.mean(fa))


def dpd_loss(theta: Theta, d: Dataset, cfg, pen: PenaltySpec = NO_PENALTY) -> LossReport:
    alpha = _alpha(cfg)
    unpen = loss_from_residuals(residuals(theta, d), theta.sigma, alpha)
    pp = pen.total(theta.beta)
    return LossReport(unpen + pp, unpen, pp)


def grad_beta(theta: Theta, d: Dataset, cfg):
    """Gradient of the unpenalized loss in beta: -(1+a)/n sum u_i f_i^a."""
    alpha = _alpha(cfg)
    r = residuals(theta, d)
    s2 = theta.sigma**2
    w = _f_alpha(r, theta.sigma, alpha) if alpha else 1.0
    return -(1 + alpha) / d.n * (d.X.T @ (w * r / s2))


def hessian_beta(theta: Theta, d: Dataset, cfg):
    """Hessian of the unpenalized loss in beta.

    Equals (1+a)/n sum f_i^a (1 - a r_i^2/sigma^2)/sigma^2 x_i x_i^T, which can
    be indefinite when many residuals exceed sigma/sqrt(a).
    """
    alpha = _alpha(cfg)
    r = residuals(theta, d)
    s2 = theta.sigma**2
    if alpha:
        w = _f_alpha(r, theta.sigma, alpha) * (1 - alpha * r**2 / s2) / s2
    else:
        w = np.full(d.n, 1.0 / s2)
    H = (1 + alpha) / d.n * (d.X.T @ (w[:, None] * d.X))
    return 0.5 * (H + H.T)


def sigma_equation(theta: Theta, d: Dataset, cfg):
    """Left side of the scale estimating equation (sigma times dL/dsigma)."""
    alpha = _alpha(cfg)
    r = residuals(theta, d)
    s = theta.sigma
    fa = _f_alpha(r, s, alpha) if alpha else 1.0
    return -alpha * _const_term(alpha, s) + (1 + alpha) * float(np.mean((1 - r**2 / s**2) * fa))


def xi_alpha(alpha, sigma):
    return (2 * math.pi) ** (-alpha / 2) * sigma ** (-(alpha + 2)) * (1 + alpha) ** (-1.5)


def eta_alpha(alpha, sigma):
    return 0.25 * (2 * math.pi) ** (-alpha / 2) * sigma ** (-(alpha + 4)) * (2 + alpha**2) / (1 + alpha) ** 2.5


def psd_factor(H):
    """Upper Cholesky factor Z with Z^T Z = H + jitter*I.

    Jitter starts at 1e-8 (1 + max diag) and grows tenfold up to 1e-2 (1 + max diag);
    returns ``(Z, jitter)``.  Raises :class:`IndefiniteSurrogate` if even the
    largest jitter fails.
    """
    try:
        return linalg.cholesky(H, lower=False, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    scale = 1.0 + float(np.max(np.diag(H)))
    eye = np.eye(H.shape[0])
    for k in range(8, 1, -1):
        jitter = 10.0 ** (-k) * scale
        try:
            return linalg.cholesky(H + jitter * eye, lower=False, check_finite=False), jitter
        except linalg.LinAlgError:
            continue
    raise IndefiniteSurrogate(
        f"Hessian stays indefinite after jitter {1e-2 * scale:.3g} "
        f"(min eigenvalue {np.linalg.eigvalsh(H)[0]:.3g})"
    )
