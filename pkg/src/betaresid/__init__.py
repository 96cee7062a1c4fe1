"""Residual diagnostics for beta regression.

Fitting, residuals (standardized weighted residuals 1 and 2 and the
quantile residual), normality screening, half-normal envelopes and a Monte
Carlo study driver.
"""

from .betadist import CLOGLOG, LOGIT, BetaParams, get_link
from .envelope import EnvelopeData, half_normal_envelope, residual_vs_predictor
from .errors import (
    BetaResidError,
    ConvergenceError,
    DomainError,
    InputError,
    NumericalError,
    StudyError,
    UndefinedStatisticError,
)
from .fit import Dataset, FitOptions, FittedModel, coef_report, fit_mle, hat_diagnostics, pseudo_r2
from .gof import anderson_darling, moment_summary
from .residuals import compute_residuals, quantile_residual, swr1, swr2
from .rng import DEFAULT_SEED, rng_stream
from .simstudy import builtin_scenario, generate_design, run_study

__version__ = "0.1.0"
