"""Normality screening of residual samples.

The Anderson-Darling statistic here tests against the fully specified
standard normal (no estimated parameters), for which the 5% critical value
is :data:`AD_CRITICAL_5PCT`.  Moment summaries report the non-excess
kurtosis, so a normal sample targets 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, UndefinedStatisticError

__all__ = [
    "AD_CRITICAL_5PCT",
    "MomentSummary",
    "anderson_darling",
    "anderson_darling_columns",
    "distribution_summary",
    "moment_summary",
    "moment_summary_columns",
]

AD_CRITICAL_5PCT = 2.492
_U_FLOOR = 1e-300


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    variance: float
    skewness: float
    kurtosis: float


def anderson_darling_columns(samples) -> np.ndarray:
    """Anderson-Darling statistic of each column of a 2-D sample matrix."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise DomainError("Anderson-Darling needs at least two observations")
    if not np.all(np.isfinite(x)):
        raise DomainError("Anderson-Darling sample contains non-finite values")
    xs = np.sort(x, axis=0)
    log_u = np.log(np.maximum(ndtr(xs), _U_FLOOR))
    # log(1 - u) from the upper tail directly, reversed to pair i with n+1-i.
    log_1mu = np.log(np.maximum(ndtr(-xs), _U_FLOOR))[::-1]
    weights = (2.0 * np.arange(1, n + 1) - 1.0)[:, None]
    return -n - (weights * (log_u + log_1mu)).sum(axis=0) / n


def anderson_darling(sample) -> float:
    """Anderson-Darling statistic of ``sample`` against N(0, 1).

    Examples
    --------
    >>> round(anderson_darling([-1.0, 0.0, 1.0]), 4)
    0.1895
    """
    sample = np.asarray(sample, dtype=float).ravel()
    return float(anderson_darling_columns(sample[:, None])[0])


def moment_summary_columns(samples):
    """Column-wise mean, unbiased variance, skewness and kurtosis.

    Returns four arrays.  Kurtosis is NaN for columns shorter than four.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise UndefinedStatisticError("moment summary needs at least two values")
    mean = x.mean(axis=0)
    dev = x - mean
    m2 = (dev ** 2).mean(axis=0)
    if np.any(m2 == 0.0):
        raise UndefinedStatisticError("zero variance: skewness and kurtosis undefined")
    m3 = (dev ** 3).mean(axis=0)
    m4 = (dev ** 4).mean(axis=0)
    variance = m2 * n / (n - 1)
    skewness = m3 / m2 ** 1.5
    kurtosis = m4 / (m2 * m2) if n >= 4 else np.full_like(mean, np.nan)
    return mean, variance, skewness, kurtosis


def moment_summary(sample) -> MomentSummary:
    """Mean, variance (n - 1 divisor), skewness and kurtosis of ``sample``."""
    mean, var, skew, kurt = moment_summary_columns(np.asarray(sample, dtype=float).ravel())
    return MomentSummary(float(mean[0]), float(var[0]), float(skew[0]), float(kurt[0]))


def distribution_summary(values) -> dict:
    """Mean, SD, minimum, quartiles and maximum of a set of statistics.

    Quartiles use linear interpolation between order statistics.
    """
    v = np.asarray(values, dtype=float).ravel()
    q1, q2, q3 = np.percentile(v, [25, 50, 75])
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else float("nan"),
        "min": float(v.min()),
        "q1": float(q1),
        "q2": float(q2),
        "q3": float(q3),
        "max": float(v.max()),
    }
