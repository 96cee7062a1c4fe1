"""Beta distribution in the mean/precision parameterization, and link functions.

A response ``y`` on (0, 1) with mean ``mu`` and precision ``phi`` is
Beta(mu * phi, (1 - mu) * phi) in the usual shape parameterization, so
``E(y) = mu`` and ``Var(y) = mu (1 - mu) / (1 + phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import specfun
from .errors import DomainError, InputError

__all__ = [
    "BetaParams",
    "CLOGLOG",
    "LINKS",
    "LOGIT",
    "LinkFunction",
    "cdf",
    "cdf_tails",
    "get_link",
    "link_eval",
    "log_density",
    "moments",
    "sample",
]

#: Samples that round to an endpoint are moved this far inside.
SAMPLE_NUDGE = 1e-12


@dataclass(frozen=True)
class BetaParams:
    mu: float
    phi: float

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise DomainError(f"mu must lie in (0, 1), got {self.mu!r}")
        if not self.phi > 0.0:
            raise DomainError(f"phi must be positive, got {self.phi!r}")

    @property
    def shapes(self) -> tuple[float, float]:
        return self.mu * self.phi, (1.0 - self.mu) * self.phi


def _check_params(mu, phi):
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not (np.all(mu > 0.0) and np.all(mu < 1.0)):
        raise DomainError("mu must lie in (0, 1)")
    if not np.all(phi > 0.0):
        raise DomainError("phi must be positive")
    return mu, phi


def _unpack(params, phi):
    if isinstance(params, BetaParams):
        return params.mu, params.phi
    if phi is None:
        raise TypeError("pass either a BetaParams or both mu and phi")
    return params, phi


def log_density(y, mu, phi=None):
    """Log density of the beta distribution at ``y``.

    ``mu`` may be a :class:`BetaParams`, in which case ``phi`` is omitted.
    All arguments broadcast.
    """
    mu, phi = _check_params(*_unpack(mu, phi))
    y_arr = np.asarray(y, dtype=float)
    if not (np.all(y_arr > 0.0) and np.all(y_arr < 1.0)):
        raise DomainError("log_density requires 0 < y < 1")
    out = _log_density(y_arr, mu, phi)
    return float(out) if np.ndim(out) == 0 else out


def _log_density(y, mu, phi):
    """Unchecked kernel; arrays must already be valid."""
    a = mu * phi
    b = phi - a
    shape = np.broadcast_shapes(np.shape(y), np.shape(a), np.shape(b))
    lg = specfun._log_gamma
    a_b = np.broadcast_to(a, shape).ravel()
    b_b = np.broadcast_to(b, shape).ravel()
    phi_b = np.broadcast_to(phi, shape).ravel()
    norm = lg(phi_b) - lg(a_b) - lg(b_b)
    y_b = np.broadcast_to(y, shape).ravel()
    out = norm + (a_b - 1.0) * np.log(y_b) + (b_b - 1.0) * np.log1p(-y_b)
    return out.reshape(shape)


def moments(mu, phi=None) -> tuple:
    """Mean and variance ``(mu, mu (1 - mu) / (1 + phi))``."""
    mu, phi = _check_params(*_unpack(mu, phi))
    var = mu * (1.0 - mu) / (1.0 + phi)
    if mu.ndim == 0 and var.ndim == 0:
        return float(mu), float(var)
    return mu, var


def cdf_tails(y, mu, phi=None):
    """``(F(y), 1 - F(y))`` with each tail computed at full relative precision."""
    mu, phi = _check_params(*_unpack(mu, phi))
    return specfun.inc_beta_tails(y, mu * phi, (1.0 - mu) * phi)


def cdf(y, mu, phi=None):
    """Distribution function ``F(y; mu, phi) = I_y(mu phi, (1 - mu) phi)``."""
    return cdf_tails(y, mu, phi)[0]


def sample(mu, phi=None, rng: np.random.Generator | None = None, size=None):
    """Draw beta variates as a ratio of independent gamma variates.

    ``G1 / (G1 + G2)`` with ``G1 ~ Gamma(mu phi)``, ``G2 ~ Gamma((1 - mu) phi)``.
    Values that land exactly on 0 or 1 are nudged inside by
    :data:`SAMPLE_NUDGE`.  Only ``rng`` is mutated.
    """
    if rng is None:
        raise TypeError("sample() needs an explicit random generator")
    mu, phi = _check_params(*_unpack(mu, phi))
    if size is None:
        size = np.broadcast_shapes(mu.shape, phi.shape)
    a = np.broadcast_to(mu * phi, size)
    b = np.broadcast_to((1.0 - mu) * phi, size)
    g1 = rng.standard_gamma(a)
    g2 = rng.standard_gamma(b)
    y = g1 / (g1 + g2)
    y = np.where(y <= 0.0, SAMPLE_NUDGE, np.where(y >= 1.0, 1.0 - SAMPLE_NUDGE, y))
    return float(y) if np.ndim(y) == 0 else y


# ------------------------------------------------------------------- links

@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing map from (0, 1) to the real line.

    ``derivative`` is ``g'(mu)`` and ``mu_eta`` is ``d mu / d eta`` expressed
    in terms of ``mu`` (the reciprocal of ``g'``).
    """

    name: str
    _forward: Callable
    _inverse: Callable
    _derivative: Callable
    _mu_eta: Callable

    def forward(self, mu):
        mu = np.asarray(mu, dtype=float)
        if not (np.all(mu > 0.0) and np.all(mu < 1.0)):
            raise DomainError(f"{self.name} link: mu must lie in (0, 1)")
        return _scalarize(self._forward(mu))

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=float)
        if np.isnan(eta).any():
            raise DomainError(f"{self.name} link: eta is NaN")
        return _scalarize(self._inverse(eta))

    def derivative(self, mu):
        mu = np.asarray(mu, dtype=float)
        if not (np.all(mu > 0.0) and np.all(mu < 1.0)):
            raise DomainError(f"{self.name} link: mu must lie in (0, 1)")
        return _scalarize(self._derivative(mu))

    def __repr__(self):
        return f"LinkFunction({self.name!r})"


def _scalarize(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _logit(mu):
    return np.log(mu) - np.log1p(-mu)


def _expit(eta):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-eta))


def _logit_deriv(mu):
    return 1.0 / (mu * (1.0 - mu))


def _logit_mu_eta(mu):
    return mu * (1.0 - mu)


def _cloglog(mu):
    return np.log(-np.log1p(-mu))


def _cloglog_inv(eta):
    with np.errstate(over="ignore"):
        return -np.expm1(-np.exp(eta))


def _cloglog_mu_eta(mu):
    return -(1.0 - mu) * np.log1p(-mu)


def _cloglog_deriv(mu):
    return 1.0 / _cloglog_mu_eta(mu)


LOGIT = LinkFunction("logit", _logit, _expit, _logit_deriv, _logit_mu_eta)
CLOGLOG = LinkFunction("cloglog", _cloglog, _cloglog_inv, _cloglog_deriv,
                       _cloglog_mu_eta)
LINKS = {"logit": LOGIT, "cloglog": CLOGLOG}


def get_link(link) -> LinkFunction:
    """Resolve a link name (or pass a :class:`LinkFunction` through)."""
    if isinstance(link, LinkFunction):
        return link
    try:
        return LINKS[str(link).lower()]
    except KeyError:
        raise InputError(
            f"unknown link {link!r}; choose from {sorted(LINKS)}") from None


def link_eval(link, direction: str, v):
    """Evaluate a link in the given ``direction``.

    ``direction`` is one of ``"forward"`` (``g(mu)``), ``"inverse"``
    (``g^-1(eta)``) or ``"derivative"`` (``g'(mu)``).
    """
    link = get_link(link)
    if direction == "forward":
        return link.forward(v)
    if direction == "inverse":
        return link.inverse(v)
    if direction == "derivative":
        return link.derivative(v)
    raise InputError(f"unknown link direction {direction!r}")
