"""Penalty families (none, L1, SCAD) and their derivatives.

The intercept (index 0) is never penalized; every helper that takes a full
coefficient vector encodes that.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveArgument

FAMILIES = ("none", "l1", "scad")


@dataclass(frozen=True)
class PenaltySpec:
    family: str = "none"
    lam: float = 0.0
    scad_a: float = 3.7

    def __post_init__(self):
        family = str(self.family).lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown penalty family {self.family!r}; expected one of {FAMILIES}")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.scad_a > 2:
            raise ValueError("SCAD shape parameter a must exceed 2")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "scad_a", float(self.scad_a))

    @property
    def active(self) -> bool:
        return self.family != "none" and self.lam > 0

    def with_lambda(self, lam):
        return PenaltySpec(self.family, lam, self.scad_a)

    def total(self, beta) -> float:
        """Sum of P(|beta_j|) over the non-intercept coefficients."""
        if not self.active:
            return 0.0
        return float(np.sum(penalty_value(self, np.abs(np.asarray(beta)[1:]))))

    def gradient(self, beta):
        """P'(|beta_j|) sign(beta_j) for nonzero penalized entries, 0 elsewhere."""
        beta = np.asarray(beta, dtype=float)
        g = np.zeros_like(beta)
        nz = np.flatnonzero(beta[1:] != 0) + 1
        if self.active and nz.size:
            g[nz] = penalty_deriv(self, np.abs(beta[nz])) * np.sign(beta[nz])
        return g


NO_PENALTY = PenaltySpec()


def penalty_value(p: PenaltySpec, t):
    """P_lambda(t) for t >= 0 (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("penalty argument must be nonnegative")
    lam = p.lam
    if p.family == "none" or lam == 0:
        out = np.zeros_like(t)
    elif p.family == "l1":
        out = lam * t
    else:
        a = p.scad_a
        out = np.where(
            t <= lam,
            lam * t,
            np.where(
                t <= a * lam,
                (2 * a * lam * t - t**2 - lam**2) / (2 * (a - 1)),
                (a + 1) * lam**2 / 2,
            ),
        )
    return out if out.ndim else float(out)


def _check_positive(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise NonpositiveArgument("penalty derivatives need t > 0")
    return t


def penalty_deriv(p: PenaltySpec, t):
    t = _check_positive(t)
    lam = p.lam
    if p.family == "none" or lam == 0:
        out = np.zeros_like(t)
    elif p.family == "l1":
        out = np.full_like(t, lam)
    else:
        a = p.scad_a
        out = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1))
    return out if out.ndim else float(out)


def penalty_second_deriv(p: PenaltySpec, t):
    # L1 curvature is zero wherever it exists
    t = _check_positive(t)
    if p.family == "scad" and p.lam > 0:
        a = p.scad_a
        out = np.where((t > p.lam) & (t < a * p.lam), -1.0 / (a - 1), 0.0)
    else:
        out = np.zeros_like(t)
    return out if out.ndim else float(out)


def penalty_second_deriv_matrix(p: PenaltySpec, beta):
    """Diagonal matrix of P''(|beta_j|); zero for the intercept and zero coefficients."""
    beta = np.asarray(beta, dtype=float)
    diag = np.zeros_like(beta)
    nz = np.flatnonzero(beta[1:] != 0) + 1
    if nz.size:
        diag[nz] = penalty_second_deriv(p, np.abs(beta[nz]))
    return np.diag(diag)
