"""Robust penalized linear regression by minimum density power divergence."""
__version__ = "0.1.0"

from .data import (  # noqa: E402
    ActiveSet,
    Dataset,
    Standardizer,
    Theta,
    classical_standardize,
    read_csv,
    robust_standardize,
    unstandardize_model,
)
from .dpd import DpdConfig, LossReport, dpd_loss, eta_alpha, grad_beta, hessian_beta, xi_alpha  # noqa: E402
from .inference import asymptotic_summary, influence_curve, influence_function  # noqa: E402
from .penalty import PenaltySpec  # noqa: E402
from .selection import adaptive_alpha, select_lambda  # noqa: E402
from .simulation import SimulationConfig, run_study  # noqa: E402
from .solver import FitConfig, FittedModel, fit_huber_pilot, fit_mdpde, fit_ols  # noqa: E402
