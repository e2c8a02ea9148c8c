"""Monte-Carlo harness: sparse AR(1) designs, point contamination, RPE and support metrics."""
from __future__ import annotations

import dataclasses
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, classical_standardize, robust_standardize, unstandardize_model
from .errors import AllResponsesZero, RobRegError, StudyError
from .selection import evaluate_path, lambda_path, lasso_path
from .solver import fit_huber_pilot, fit_ols, fit_tukey

log = logging.getLogger(__name__)

ESTIMATORS = ("ols", "huber", "tukey", "lasso_cp", "lasso_aic", "rcp", "raic")
DEFAULT_ESTIMATORS = ("ols", "huber", "lasso_cp", "lasso_aic", "rcp", "raic")
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 200
    p: int = 25
    rho: float = 0.5
    sparsity: float = 0.6
    snr: float = 10.0
    tau: float = 0.0
    mu_c: float = 0.0  # contamination mean, in units of sigma
    replicates: int = 100
    test_size: int = 1000
    seed: int = 0
    estimators: tuple = DEFAULT_ESTIMATORS
    alpha: float = 0.2
    n_grid: int = 50
    rcp_variant: str = "squared"
    raic_variant: str = "derived"

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(e.lower() for e in self.estimators))
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        if "ols" not in self.estimators:
            raise ValueError("OLS is required as the reference for relative RPE")
        if not 0 <= self.tau < 0.5:
            raise ValueError("tau must lie in [0, 0.5)")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if not 0 <= self.sparsity < 1:
            raise ValueError("sparsity must lie in [0, 1)")
        if self.n < 2 or self.p < 1 or self.replicates < 1 or self.test_size < 1:
            raise ValueError("n, p, replicates and test_size must be positive (n >= 2)")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown simulation config keys {sorted(extra)}")
        d = dict(d)
        if "estimators" in d:
            d["estimators"] = tuple(d["estimators"])
        return cls(**d)


# --- data generation --------------------------------------------------------

def generate_beta(p, sparsity, rng):
    """Intercept 1; the first k = ceil((1 - sparsity) p) slopes nonzero.

    The first ceil(k/2) of them are drawn from U(1, 2), the rest from U(-2, -1).
    """
    k = math.ceil((1 - sparsity) * p - 1e-9)
    beta = np.zeros(p + 1)
    beta[0] = 1.0
    pos = (k + 1) // 2
    beta[1:1 + pos] = rng.uniform(1, 2, pos)
    beta[1 + pos:1 + k] = rng.uniform(-2, -1, k - pos)
    return beta


def generate_design(n, p, rho, rng):
    """Rows with AR(1) correlation rho^|j-k| and unit marginals; intercept column first."""
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    c = math.sqrt(1 - rho**2)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + c * z[:, j]
    return np.column_stack([np.ones(n), x])


def ar1_cov(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def sigma_from_snr(beta, rho, snr):
    """Noise sd making Var(x'beta) / sigma^2 equal ``snr`` under the AR(1) design."""
    b = np.asarray(beta, dtype=float)[1:]
    return math.sqrt(float(b @ ar1_cov(b.size, rho) @ b) / snr)


def contaminate(residuals, tau, mu_c, rng):
    """Replace a random ceil(tau n) subset by N(mu_c, 0.1^2) draws."""
    e = np.array(residuals, dtype=float)
    m = math.ceil(tau * e.size - 1e-9)
    if m > 0:
        idx = rng.choice(e.size, size=m, replace=False)
        e[idx] = rng.normal(mu_c, 0.1, m)
    return e


# --- metrics ----------------------------------------------------------------

def rpe(model, test: Dataset, beta_true):
    """Mean squared distance between fitted and true regression surfaces on ``test``."""
    diff = test.X @ (np.asarray(model.theta.beta) - np.asarray(beta_true))
    return float(np.mean(diff**2))


def support_metrics(model, beta_true):
    """(sensitivity, specificity) of the fitted support over the slopes."""
    est = np.asarray(model.theta.beta)[1:] != 0
    true = np.asarray(beta_true)[1:] != 0
    sens = float(np.mean(est[true])) if true.any() else 1.0
    spec = float(np.mean(~est[~true])) if (~true).any() else 1.0
    return sens, spec


def mape(model, test: Dataset):
    """Mean absolute relative prediction error; rows with |y| < 1e-12 are skipped."""
    keep = np.abs(test.y) >= 1e-12
    skipped = int(np.sum(~keep))
    if not keep.any():
        raise AllResponsesZero("every test response is zero")
    if skipped:
        log.info("mape: skipped %d rows with zero response", skipped)
    pred = test.X[keep] @ model.theta.beta
    return float(np.mean(np.abs((test.y[keep] - pred) / test.y[keep])))


def relative_rpe_table(records, estimators):
    """Per-estimator summary rows from per-replicate records."""
    rows = {}
    for est in estimators:
        ok = [r for r in records if r["estimator"] == est and r["ok"]]
        raw = np.array([r["rpe"] for r in ok])
        rel = np.array([r["rel_rpe"] for r in ok if r["rel_rpe"] is not None])
        q = np.quantile(raw, [0.25, 0.5, 0.75]) if raw.size else [math.nan] * 3
        rows[est] = {
            "median_rel_rpe": float(np.median(rel)) if rel.size else math.nan,
            "rpe_q1": float(q[0]),
            "rpe_median": float(q[1]),
            "rpe_q3": float(q[2]),
            "sensitivity": float(np.mean([r["sensitivity"] for r in ok])) if ok else math.nan,
            "specificity": float(np.mean([r["specificity"] for r in ok])) if ok else math.nan,
            "replicates_ok": len(ok),
            "failures": sum(1 for r in records if r["estimator"] == est and not r["ok"]),
        }
    return rows


# --- study ------------------------------------------------------------------

def _replicate_rng(seed, r):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, r)))


def _fit_all(cfg, train):
    """Fit every requested estimator; returns {name: model or exception text}."""
    out = {}
    todo = set(cfg.estimators)

    def attempt(name, fn):
        try:
            out[name] = fn()
        except (RobRegError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out[name] = f"{type(exc).__name__}: {exc}"

    attempt("ols", lambda: fit_ols(train))
    if "huber" in todo:
        attempt("huber", lambda: fit_huber_pilot(train))
    if "tukey" in todo:
        attempt("tukey", lambda: fit_tukey(train))
    if todo & {"lasso_cp", "lasso_aic"}:
        try:
            ds, st = classical_standardize(train)
            path = lasso_path(ds, cfg.n_grid)
            for name, crit in (("lasso_cp", "cp"), ("lasso_aic", "aic")):
                if name in todo:
                    attempt(name, lambda: unstandardize_model(evaluate_path(path, ds, crit).model, st))
        except RobRegError as exc:
            for name in todo & {"lasso_cp", "lasso_aic"}:
                out[name] = f"{type(exc).__name__}: {exc}"
    if todo & {"rcp", "raic"}:
        try:
            ds, st = robust_standardize(train)
            path = lambda_path(ds, cfg.alpha, "l1", cfg.n_grid)
            if "rcp" in todo:
                attempt("rcp", lambda: unstandardize_model(
                    evaluate_path(path, ds, "rcp", rcp_variant=cfg.rcp_variant).model, st))
            if "raic" in todo:
                attempt("raic", lambda: unstandardize_model(
                    evaluate_path(path, ds, "raic", raic_variant=cfg.raic_variant).model, st))
        except RobRegError as exc:
            for name in todo & {"rcp", "raic"}:
                out[name] = f"{type(exc).__name__}: {exc}"
    return out


def run_replicate(cfg: SimulationConfig, beta, sigma, r):
    """One replicate: fresh design, noise and clean test set; returns record dicts."""
    rng = _replicate_rng(cfg.seed, r)
    X = generate_design(cfg.n, cfg.p, cfg.rho, rng)
    e = contaminate(rng.normal(0, sigma, cfg.n), cfg.tau, cfg.mu_c * sigma, rng)
    train = Dataset(X @ beta + e, X)
    Xt = generate_design(cfg.test_size, cfg.p, cfg.rho, rng)
    test = Dataset(Xt @ beta + rng.normal(0, sigma, cfg.test_size), Xt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fits = _fit_all(cfg, train)
    ols = fits["ols"]
    ols_rpe = rpe(ols, test, beta) if not isinstance(ols, str) else None
    records = []
    for name in cfg.estimators:
        m = fits[name]
        if isinstance(m, str):
            records.append({"estimator": name, "n": cfg.n, "replicate": r, "ok": False,
                            "rpe": None, "rel_rpe": None, "sensitivity": None,
                            "specificity": None, "error": m})
            continue
        val = rpe(m, test, beta)
        sens, spec = support_metrics(m, beta)
        records.append({
            "estimator": name, "n": cfg.n, "replicate": r, "ok": True, "rpe": val,
            "rel_rpe": val / ols_rpe if ols_rpe else None,
            "sensitivity": sens, "specificity": spec, "active_count": len(m.active),
        })
    return records


def _replicate_job(args):
    return run_replicate(*args)


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    beta_true: np.ndarray
    sigma: float
    summary: dict
    records: tuple = field(repr=False, default=())

    def to_dict(self, verbose=False):
        out = {
            "config": self.config.to_dict(),
            "snr_definition": "Var(x'beta) / sigma^2 under the AR(1) design",
            "beta_true": [float(b) for b in self.beta_true],
            "sigma": self.sigma,
            "summary": self.summary,
        }
        if verbose:
            out["records"] = list(self.records)
        return out


def run_study(cfg: SimulationConfig, threads=1) -> SimulationReport:
    """Run all replicates; identical output for any ``threads``.

    Estimator failures are excluded from the summaries when they affect fewer
    than 5% of replicates; otherwise :class:`StudyError` is raised.
    """
    beta = generate_beta(cfg.p, cfg.sparsity,
                         np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,))))
    sigma = sigma_from_snr(beta, cfg.rho, cfg.snr)
    jobs = [(cfg, beta, sigma, r) for r in range(cfg.replicates)]
    threads = threads or os.cpu_count() or 1
    if threads > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_replicate_job, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        chunks = [run_replicate(*j) for j in jobs]
    records = tuple(rec for chunk in chunks for rec in chunk)
    summary = relative_rpe_table(records, cfg.estimators)
    for est, row in summary.items():
        if row["failures"] >= MAX_FAILURE_RATE * cfg.replicates:
            errs = [r["error"] for r in records if r["estimator"] == est and not r["ok"]]
            raise StudyError(f"{est} failed in {row['failures']} of {cfg.replicates} replicates: {errs[:3]}")
    return SimulationReport(cfg, beta, sigma, summary, records)


FIGURE1_PANELS = {
    "a": {"snr": 1.0, "tau": 0.0, "mu_c": 0.0},
    "b": {"snr": 10.0, "tau": 0.0, "mu_c": 0.0},
    "c": {"snr": 1.0, "tau": 0.01, "mu_c": 10.0},
    "d": {"snr": 10.0, "tau": 0.05, "mu_c": 5.0},
}


def figure1_configs(base: SimulationConfig, sizes=(50, 100, 200)):
    """Configs for the four panels (clean SNR 1 / 10, 1% at 10 sigma, 5% at 5 sigma) per n."""
    return [(panel, dataclasses.replace(base, n=n, **kw))
            for panel, kw in FIGURE1_PANELS.items() for n in sizes]
