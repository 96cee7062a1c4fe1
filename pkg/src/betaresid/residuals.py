"""Residuals for fitted beta regressions.

Three kinds are available:

``swr1``
    standardized weighted residual 1, ``(y* - mu*) / sqrt(v*)`` on the
    logit scale of the response, where ``mu*`` and ``v*`` are the mean and
    variance of ``logit(y)`` under the fitted distribution;
``swr2``
    ``swr1 / sqrt(1 - h_ii)``, corrected for leverage;
``quantile``
    ``Phi^-1(F(y; mu, phi))``, exactly standard normal when the
    parameters are the true ones.

The ``*_values`` functions are array kernels that broadcast over a batch
of fits; the model-level functions wrap them for a single
:class:`~betaresid.fit.FittedModel`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun
from .errors import DomainError, InputError, NumericalError
from .fit import Dataset, FittedModel, HatDiagnostics, hat_diagnostics, leverages

__all__ = [
    "KINDS",
    "ResidualSet",
    "compute_residuals",
    "quantile_residual",
    "quantile_values",
    "swr1",
    "swr1_values",
    "swr2",
    "swr2_values",
]

KINDS = ("swr1", "swr2", "quantile")


@dataclass(frozen=True)
class ResidualSet:
    kind: str
    values: np.ndarray

    def __len__(self):
        return self.values.size


def _shapes(mu, phi):
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1 and mu.ndim == 2:
        phi = phi[:, None]
    return mu * phi, (1.0 - mu) * phi


def swr1_values(y, mu, phi):
    """Standardized weighted residual 1 for arrays of responses and means.

    ``phi`` may be a scalar or, for a batch ``(R, n)``, a vector of length R.
    """
    y = np.asarray(y, dtype=float)
    if not (np.all(y > 0.0) and np.all(y < 1.0)):
        raise DomainError("responses must lie strictly inside (0, 1)")
    a, b = _shapes(mu, phi)
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    ystar = np.log(y) - np.log1p(-y)
    mustar = (specfun._digamma(a.ravel()) - specfun._digamma(b.ravel())).reshape(shape)
    vstar = (specfun._trigamma(a.ravel()) + specfun._trigamma(b.ravel())).reshape(shape)
    return (ystar - mustar) / np.sqrt(vstar)


def swr2_values(r1, h):
    """Leverage-corrected residual ``r1 / sqrt(1 - h)``."""
    h = np.asarray(h, dtype=float)
    if np.any(h >= 1.0) or np.any(h < 0.0):
        raise NumericalError("leverages must lie in [0, 1)")
    return np.asarray(r1, dtype=float) / np.sqrt(1.0 - h)


def quantile_values(y, mu, phi):
    """Quantile residual ``Phi^-1(F(y))`` for arrays of responses and means.

    Both tails of ``F`` are computed directly and floored at
    :data:`~betaresid.specfun.TAIL_FLOOR`, so values stay finite (within
    about +/-37.5) however far ``y`` sits in a tail.
    """
    a, b = _shapes(mu, phi)
    lower, upper = specfun.inc_beta_tails(y, a, b)
    return specfun.tail_quantile(lower, upper)


def _check_model(m: FittedModel, d: Dataset):
    if m.mu_hat.size != d.n:
        raise InputError(f"model has {m.mu_hat.size} fitted means but data has {d.n} rows")


def swr1(m: FittedModel, d: Dataset) -> ResidualSet:
    """Standardized weighted residual 1 of a fitted model."""
    _check_model(m, d)
    return ResidualSet("swr1", swr1_values(d.y, m.mu_hat, m.phi_hat))


def swr2(m: FittedModel, d: Dataset, h: HatDiagnostics | None = None) -> ResidualSet:
    """Standardized weighted residual 2; leverages are computed if not given."""
    _check_model(m, d)
    if h is None:
        h = hat_diagnostics(m, d)
    r1 = swr1_values(d.y, m.mu_hat, m.phi_hat)
    return ResidualSet("swr2", swr2_values(r1, h.h))


def quantile_residual(m: FittedModel, d: Dataset) -> ResidualSet:
    """Quantile residual of a fitted model."""
    _check_model(m, d)
    return ResidualSet("quantile", quantile_values(d.y, m.mu_hat, m.phi_hat))


def compute_residuals(m: FittedModel, d: Dataset, kind: str) -> ResidualSet:
    if kind == "swr1":
        return swr1(m, d)
    if kind == "swr2":
        return swr2(m, d)
    if kind == "quantile":
        return quantile_residual(m, d)
    raise InputError(f"unknown residual kind {kind!r}; choose from {KINDS}")


def batch_residuals(Y, X, mu, phi, link, kinds) -> dict:
    """Residuals of every requested kind for a batch of fits on one design.

    ``Y`` and ``mu`` have shape ``(R, n)`` and ``phi`` shape ``(R,)``.
    """
    out = {}
    r1 = None
    if "swr1" in kinds or "swr2" in kinds:
        r1 = swr1_values(Y, mu, phi)
    if "swr1" in kinds:
        out["swr1"] = r1
    if "swr2" in kinds:
        a, b = _shapes(mu, phi)
        shape = a.shape
        v = (specfun._trigamma(a.ravel()) + specfun._trigamma(b.ravel())).reshape(shape)
        t = link._mu_eta(mu)
        W = np.asarray(phi, dtype=float)[:, None] * v * t * t
        out["swr2"] = swr2_values(r1, leverages(X, W))
    if "quantile" in kinds:
        out["quantile"] = quantile_values(Y, mu, phi)
    unknown = set(kinds) - set(KINDS)
    if unknown:
        raise InputError(f"unknown residual kinds {sorted(unknown)}")
    return out
