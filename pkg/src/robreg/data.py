"""Data containers, robust standardization and CSV ingestion."""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateColumn, DimensionMismatch, ParseError

# 1 / Phi^{-1}(3/4): makes the MAD a consistent scale estimate under normality
MAD_CONSTANT = 1.4826


def _frozen(a, ndim):
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def mad(x, center=None):
    """Normal-consistent median absolute deviation."""
    x = np.asarray(x, dtype=float)
    if center is None:
        center = np.median(x)
    return MAD_CONSTANT * float(np.median(np.abs(x - center)))


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (length n) and design ``X`` (n x (p+1), column 0 the intercept)."""

    y: np.ndarray
    X: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        y = _frozen(self.y, 1)
        X = _frozen(self.X, 2)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
        if y.shape[0] < 2:
            raise DimensionMismatch("need at least two observations")
        if X.shape[1] < 1:
            raise DimensionMismatch("X needs at least the intercept column")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("non-finite entries in y or X")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("column 0 of X must be identically 1 (intercept)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        names = tuple(self.names)
        if names and len(names) != X.shape[1] - 1:
            raise DimensionMismatch("names must label the p non-intercept columns")
        object.__setattr__(self, "names", names)

    @classmethod
    def from_predictors(cls, y, Z, names=()):
        """Build a dataset from raw predictors ``Z`` (n x p), prepending the intercept."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        X = np.column_stack([np.ones(Z.shape[0]), Z])
        return cls(y, X, names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1] - 1

    def subset(self, rows):
        return Dataset(self.y[rows], self.X[rows], self.names)


@dataclass(frozen=True)
class Theta:
    """Regression coefficients (intercept first) and error scale."""

    beta: np.ndarray
    sigma: float

    def __post_init__(self):
        beta = _frozen(self.beta, 1)
        sigma = float(self.sigma)
        if not (sigma > 0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be positive and finite, got {sigma}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta has non-finite entries")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class ActiveSet:
    """Sorted indices j in [0, p] with nonzero coefficient."""

    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError("active indices must be unique and sorted")
        if idx and idx[0] < 0:
            raise ValueError("active indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_beta(cls, beta, threshold=0.0):
        return cls(tuple(np.flatnonzero(np.abs(np.asarray(beta)) > threshold)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j):
        return j in self.indices

    def as_array(self):
        return np.array(self.indices, dtype=int)


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine maps used to put a dataset on a unit robust scale."""

    centers: np.ndarray
    scales: np.ndarray
    y_center: float
    y_scale: float

    def __post_init__(self):
        centers = _frozen(self.centers, 1)
        scales = _frozen(self.scales, 1)
        if centers.shape != scales.shape:
            raise DimensionMismatch("centers and scales differ in length")
        if np.any(scales <= 0) or not self.y_scale > 0:
            raise ValueError("standardizer scales must be strictly positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "y_center", float(self.y_center))
        object.__setattr__(self, "y_scale", float(self.y_scale))

    @classmethod
    def identity(cls, p):
        return cls(np.zeros(p), np.ones(p), 0.0, 1.0)

    def standardize(self, d: Dataset) -> Dataset:
        if d.p != self.centers.shape[0]:
            raise DimensionMismatch("standardizer was built for a different p")
        X = d.X.copy()
        X[:, 1:] = (X[:, 1:] - self.centers) / self.scales
        return Dataset((d.y - self.y_center) / self.y_scale, X, d.names)

    def unstandardize(self, d: Dataset) -> Dataset:
        X = d.X.copy()
        X[:, 1:] = X[:, 1:] * self.scales + self.centers
        return Dataset(d.y * self.y_scale + self.y_center, X, d.names)

    def to_original(self, beta, sigma):
        """Map (beta, sigma) fitted on standardized data back to raw units."""
        beta = np.asarray(beta, dtype=float)
        out = np.empty_like(beta)
        out[1:] = beta[1:] * self.y_scale / self.scales
        out[0] = self.y_center + self.y_scale * beta[0] - out[1:] @ self.centers
        return out, sigma * self.y_scale


def robust_standardize(d: Dataset):
    """Center every predictor and the response at its median and divide by its MAD.

    The intercept column is left alone.  Returns ``(standardized, standardizer)``.
    Raises :class:`DegenerateColumn` for a column (or the response, index -1)
    whose MAD is zero.
    """
    Z = d.X[:, 1:]
    centers = np.median(Z, axis=0) if d.p else np.zeros(0)
    scales = MAD_CONSTANT * np.median(np.abs(Z - centers), axis=0) if d.p else np.zeros(0)
    for j, s in enumerate(scales):
        if not s > 0:
            name = d.names[j] if d.names else None
            raise DegenerateColumn(j + 1, name)
    y_center = float(np.median(d.y))
    y_scale = mad(d.y, y_center)
    if not y_scale > 0:
        raise DegenerateColumn(-1, "response")
    s = Standardizer(centers, scales, y_center, y_scale)
    return s.standardize(d), s


def classical_standardize(d: Dataset):
    """Mean / standard-deviation version of :func:`robust_standardize`."""
    Z = d.X[:, 1:]
    centers = Z.mean(axis=0)
    scales = Z.std(axis=0)
    for j, s in enumerate(scales):
        if not s > 0:
            raise DegenerateColumn(j + 1, d.names[j] if d.names else None)
    y_scale = float(d.y.std())
    if not y_scale > 0:
        raise DegenerateColumn(-1, "response")
    s = Standardizer(centers, scales, float(d.y.mean()), y_scale)
    return s.standardize(d), s


def unstandardize_model(m, s: Standardizer):
    """Express a model fitted on ``s``-standardized data in original units.

    Zero coefficients stay exactly zero, so the active set is unchanged.  The
    stored loss still refers to the standardized problem that was minimized.
    """
    beta, sigma = s.to_original(m.theta.beta, m.theta.sigma)
    slope_zero = np.asarray(m.theta.beta)[1:] == 0
    beta[1:][slope_zero] = 0.0
    return dataclasses.replace(m, theta=Theta(beta, sigma))


def read_csv(path, response: str, predictors: Sequence[str] | None = None) -> Dataset:
    """Read a headed CSV; ``response`` names y, every other column is a predictor."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file")
    header = [h.strip() for h in rows[0]]
    if response not in header:
        raise ParseError(f"response column {response!r} not in header {header}")
    if predictors is None:
        predictors = [h for h in header if h != response]
    cols = [header.index(response)] + [header.index(h) for h in predictors]
    values = np.empty((len(rows) - 1, len(cols)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=i)
        for k, c in enumerate(cols):
            cell = row[c].strip()
            try:
                values[i - 2, k] = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r}", row=i, column=header[c]) from None
            if not math.isfinite(values[i - 2, k]):
                raise ParseError(f"non-finite value {cell!r}", row=i, column=header[c])
    return Dataset.from_predictors(values[:, 0], values[:, 1:], tuple(predictors))
