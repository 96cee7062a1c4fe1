"""Plot data for graphical residual diagnostics.

:func:`half_normal_envelope` builds the half-normal plot of absolute
residuals with a simulated envelope: responses are re-simulated from the
fitted model, the model is refitted to each simulated response vector and
the sorted absolute residuals of the refits give pointwise bands.
Observed residuals are only compared against the bands at the end, so the
bands depend on the fitted model, the design and the seed alone.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import specfun
from .betadist import sample
from .errors import ConvergenceError, InputError
from .fit import Dataset, FitOptions, FittedModel, fit_batch
from .residuals import KINDS, batch_residuals, compute_residuals
from .rng import DEFAULT_SEED, rng_stream

__all__ = [
    "EnvelopeData",
    "half_normal_envelope",
    "halfnormal_positions",
    "residual_vs_predictor",
]

CHUNK_SIZE = 25
MAX_ATTEMPTS_FACTOR = 10


@dataclass(frozen=True)
class EnvelopeData:
    kind: str
    abs_residuals_sorted: np.ndarray
    expected_halfnormal: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    points_outside: int
    n_sim: int
    attempts: int

    def rows(self):
        return [(i + 1, float(self.expected_halfnormal[i]), float(self.abs_residuals_sorted[i]),
                 float(self.lower[i]), float(self.upper[i]))
                for i in range(self.abs_residuals_sorted.size)]


def halfnormal_positions(n: int) -> np.ndarray:
    """Expected half-normal order statistics ``Phi^-1((i + n - 1/8) / (2n + 1/2))``.

    Examples
    --------
    >>> halfnormal_positions(3).round(4)
    array([0.2434, 0.6745, 1.3038])
    """
    if n < 1:
        raise InputError("n must be positive")
    i = np.arange(1, n + 1, dtype=float)
    return specfun.std_normal_quantile((i + n - 0.125) / (2.0 * n + 0.5))


def _simulate_chunk(indices, X, mu, phi, link, seed, kind, options, max_attempts):
    """Sorted absolute residuals for a block of envelope replicates."""
    streams = [rng_stream(seed, int(j), purpose="envelope") for j in indices]
    Y = np.stack([sample(mu, phi, rng=s) for s in streams])
    fits = fit_batch(Y, X, link, options)
    attempts = np.ones(len(indices), dtype=int)
    failed = np.flatnonzero(~fits.converged)
    while failed.size:
        if np.any(attempts[failed] >= max_attempts):
            return None, int(max_attempts * len(indices))
        attempts[failed] += 1
        Y[failed] = np.stack([sample(mu, phi, rng=streams[r]) for r in failed])
        refit = fit_batch(Y[failed], X, link, options)
        fits.mu[failed] = refit.mu
        fits.phi[failed] = refit.phi
        fits.converged[failed] = refit.converged
        failed = failed[~refit.converged]
    r = batch_residuals(Y, X, fits.mu, fits.phi, link, (kind,))[kind]
    return np.sort(np.abs(r), axis=1), int(attempts.sum())


def half_normal_envelope(m: FittedModel, d: Dataset, kind: str = "quantile",
                         n_sim: int = 100, seed: int = DEFAULT_SEED,
                         threads: int = 1) -> EnvelopeData:
    """Half-normal plot data with a simulated min/max envelope.

    Parameters
    ----------
    m, d
        Converged fit and the data it was fitted to.
    kind
        Residual kind, one of ``swr1``, ``swr2``, ``quantile``.
    n_sim
        Number of simulated response vectors.
    seed
        Master seed; replicate ``j`` always uses the same substream.
    threads
        Worker threads; does not affect the result.

    Raises
    ------
    InputError
        For ``n_sim < 1``, an unknown kind or a model/data mismatch.
    ConvergenceError
        If the model is not converged, or if more than ``10 * n_sim`` fits in
        total were needed because simulated fits failed.
    """
    if kind not in KINDS:
        raise InputError(f"unknown residual kind {kind!r}; choose from {KINDS}")
    if int(n_sim) != n_sim or n_sim < 1:
        raise InputError("n_sim must be a positive integer")
    if not m.converged:
        raise ConvergenceError("envelope requires a converged model")
    n_sim = int(n_sim)
    observed = np.sort(np.abs(compute_residuals(m, d, kind).values))
    X = np.asarray(d.X)
    options = FitOptions(compute_se=False)
    max_attempts = MAX_ATTEMPTS_FACTOR * n_sim
    chunks = [range(s, min(s + CHUNK_SIZE, n_sim)) for s in range(0, n_sim, CHUNK_SIZE)]

    def work(idx):
        return _simulate_chunk(idx, X, m.mu_hat, m.phi_hat, m.link, seed, kind,
                               options, max_attempts)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    attempts = sum(p[1] for p in parts)
    if any(p[0] is None for p in parts) or attempts > max_attempts:
        raise ConvergenceError(
            f"envelope simulation needed more than {max_attempts} fits for {n_sim} replicates")
    sims = np.concatenate([p[0] for p in parts])
    lower = sims.min(axis=0)
    upper = sims.max(axis=0)
    outside = int(np.sum((observed < lower) | (observed > upper)))
    return EnvelopeData(kind=kind, abs_residuals_sorted=observed,
                        expected_halfnormal=halfnormal_positions(d.n),
                        lower=lower, upper=upper, points_outside=outside,
                        n_sim=n_sim, attempts=attempts)


def residual_vs_predictor(m: FittedModel, d: Dataset, kind: str = "quantile"):
    """Pairs ``(eta_hat_i, r_i)`` in observation order.

    Returns
    -------
    ndarray of shape (n, 2)
    """
    r = compute_residuals(m, d, kind).values
    return np.column_stack([np.asarray(m.eta_hat, dtype=float), r])
