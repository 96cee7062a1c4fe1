"""Batched BFGS minimizer.

Minimizes many independent problems of the same dimension at once: each
row of ``x`` is a separate problem with its own inverse-Hessian estimate,
step length and stopping state.  Row results never depend on which other
rows share the batch, which is what lets the Monte Carlo drivers split
work into chunks without changing any number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ARMIJO_C1 = 1e-4
MAX_BACKTRACK = 60
# Relative size of objective changes treated as rounding noise.
NOISE_RTOL = 1e-11


@dataclass
class BatchResult:
    x: np.ndarray
    fun: np.ndarray
    grad: np.ndarray
    stop_value: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    reason: np.ndarray
    history: list = field(default_factory=list)


def _matvec(h, v):
    return np.einsum("rij,rj->ri", h, v)


def bfgs_minimize(
    fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    h0: np.ndarray | Callable | None = None,
    *,
    max_iter: int = 200,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
    stop_measure: Callable | None = None,
    ftol_guard: float = np.inf,
    record_history: bool = False,
) -> BatchResult:
    """Minimize ``fun`` row by row with BFGS and Armijo backtracking.

    A trial step whose objective change is within ``NOISE_RTOL`` relative
    rounding noise is accepted when it reduces the gradient max-norm, so
    rows can reach ``gtol`` even when ``f`` cannot resolve the remaining
    decrease.

    Parameters
    ----------
    fun, grad
        ``fun(x, rows)`` returns the objective for the batch rows ``rows``
        evaluated at ``x`` (shape ``(len(rows), p)``); ``grad`` likewise
        returns the gradient.  Non-finite objective values reject a step.
    x0
        Starting points, shape ``(R, p)``.
    h0
        Initial inverse-Hessian estimates ``(R, p, p)``, or a callable
        ``h0(x, rows)`` used both initially and whenever a row's curvature
        model is reset.  Defaults to the identity.
    gtol
        A row converges once ``stop_measure(x, g, rows) < gtol``; the
        default measure is the max-norm of ``g``.
    ftol
        A row also stops when a backtracked (shortened) step changes the
        objective by less than ``ftol * max(|f|, 1)``.  Such a stop counts as
        converged only if the stop measure is below ``ftol_guard``.

    Returns
    -------
    BatchResult
        ``reason`` holds one of ``"gtol"``, ``"ftol"``, ``"maxiter"``,
        ``"linesearch"`` or ``"nonfinite"`` per row.
    """
    x = np.array(x0, dtype=float, copy=True)
    n_rows, p = x.shape
    all_rows = np.arange(n_rows)
    if stop_measure is None:
        def stop_measure(xv, gv, rows):
            return np.max(np.abs(gv), axis=1)

    def reset_h(rows):
        if h0 is None:
            return np.broadcast_to(np.eye(p), (rows.size, p, p)).copy()
        if callable(h0):
            return np.asarray(h0(x[rows], rows), dtype=float)
        return np.array(h0[rows], dtype=float)

    f = np.asarray(fun(x, all_rows), dtype=float)
    g = np.asarray(grad(x, all_rows), dtype=float)
    h = reset_h(all_rows)
    iterations = np.zeros(n_rows, dtype=int)
    converged = np.zeros(n_rows, dtype=bool)
    reason = np.full(n_rows, "maxiter", dtype=object)
    just_reset = np.ones(n_rows, dtype=bool)
    history = [f.copy()] if record_history else []

    measure = stop_measure(x, g, all_rows)
    bad = ~np.isfinite(f) | ~np.all(np.isfinite(g), axis=1)
    reason[bad] = "nonfinite"
    done = bad | (measure < gtol)
    converged[~bad & (measure < gtol)] = True
    reason[~bad & (measure < gtol)] = "gtol"

    for _ in range(max_iter):
        rows = all_rows[~done]
        if rows.size == 0:
            break
        iterations[rows] += 1
        hr, gr = h[rows], g[rows]
        d = -_matvec(hr, gr)
        slope = np.sum(d * gr, axis=1)
        uphill = ~(slope < 0.0) | ~np.all(np.isfinite(d), axis=1)
        if uphill.any():
            hr[uphill] = reset_h(rows[uphill])
            d[uphill] = -_matvec(hr[uphill], gr[uphill])
            slope[uphill] = np.sum(d[uphill] * gr[uphill], axis=1)
            just_reset[rows[uphill]] = True
            still = ~(slope < 0.0)
            d[still] = -gr[still]
            slope[still] = -np.sum(gr[still] ** 2, axis=1)
        h[rows] = hr

        alpha = np.ones(rows.size)
        accepted = np.zeros(rows.size, dtype=bool)
        x_new = x[rows].copy()
        f_new = f[rows].copy()
        pending = np.arange(rows.size)
        for _ls in range(MAX_BACKTRACK):
            trial = x[rows[pending]] + alpha[pending, None] * d[pending]
            with np.errstate(all="ignore"):
                ft = np.asarray(fun(trial, rows[pending]), dtype=float)
            f0 = f[rows[pending]]
            finite = np.isfinite(ft)
            ok = finite & (ft <= f0 + ARMIJO_C1 * alpha[pending] * slope[pending])
            # Within rounding noise of f, decide on the gradient instead.
            near = finite & ~ok & (ft - f0 <= NOISE_RTOL * np.maximum(np.abs(f0), 1.0))
            if near.any():
                with np.errstate(all="ignore"):
                    g_near = np.asarray(grad(trial[near], rows[pending[near]]), dtype=float)
                shrinks = (np.max(np.abs(g_near), axis=1)
                           < np.max(np.abs(g[rows[pending[near]]]), axis=1))
                ok[np.flatnonzero(near)[shrinks]] = True
            hit = pending[ok]
            accepted[hit] = True
            x_new[hit] = trial[ok]
            f_new[hit] = ft[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5

        failed = rows[~accepted]
        if failed.size:
            # Retry once from a fresh curvature model, then give up.
            retry = failed[~just_reset[failed]]
            give_up = failed[just_reset[failed]]
            if retry.size:
                h[retry] = reset_h(retry)
                just_reset[retry] = True
            reason[give_up] = "linesearch"
            done[give_up] = True
            meas = stop_measure(x[give_up], g[give_up], give_up)
            converged[give_up] = meas < ftol_guard

        acc_rows = rows[accepted]
        if acc_rows.size == 0:
            if record_history:
                history.append(f.copy())
            continue
        xa = x_new[accepted]
        fa = f_new[accepted]
        with np.errstate(all="ignore"):
            ga = np.asarray(grad(xa, acc_rows), dtype=float)
        s = xa - x[acc_rows]
        with np.errstate(all="ignore"):
            yv = ga - g[acc_rows]
            sy = np.sum(s * yv, axis=1)
            good = np.isfinite(sy) & (sy > 1e-12 * np.linalg.norm(s, axis=1)
                                      * np.linalg.norm(yv, axis=1))
        if good.any():
            hg = h[acc_rows[good]]
            sg, yg = s[good], yv[good]
            rho = 1.0 / sy[good]
            hy = _matvec(hg, yg)
            yhy = np.sum(yg * hy, axis=1)
            hg = (hg
                  - rho[:, None, None] * (sg[:, :, None] * hy[:, None, :]
                                          + hy[:, :, None] * sg[:, None, :])
                  + (rho * rho * yhy + rho)[:, None, None]
                  * (sg[:, :, None] * sg[:, None, :]))
            h[acc_rows[good]] = hg
        just_reset[acc_rows] = False

        f_old = f[acc_rows]
        x[acc_rows] = xa
        f[acc_rows] = fa
        g[acc_rows] = ga
        if record_history:
            history.append(f.copy())

        nonfinite = ~np.all(np.isfinite(ga), axis=1)
        meas = stop_measure(xa, ga, acc_rows)
        small_g = (meas < gtol) & ~nonfinite
        # The relative-change test only fires on backtracked steps: with full
        # steps the quasi-Newton iteration is still making real progress.
        stalled = alpha[accepted] < 1.0
        small_f = (np.abs(fa - f_old) <= ftol * np.maximum(np.abs(fa), 1.0)) \
            & stalled & ~small_g & ~nonfinite
        converged[acc_rows[small_g]] = True
        reason[acc_rows[small_g]] = "gtol"
        reason[acc_rows[small_f]] = "ftol"
        converged[acc_rows[small_f]] = meas[small_f] < ftol_guard
        reason[acc_rows[nonfinite]] = "nonfinite"
        done[acc_rows[small_g | small_f | nonfinite]] = True

    stop_value = stop_measure(x, g, all_rows)
    return BatchResult(x=x, fun=f, grad=g, stop_value=stop_value,
                       iterations=iterations, converged=converged,
                       reason=reason, history=history)
