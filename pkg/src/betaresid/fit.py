"""Maximum-likelihood fitting of the beta regression model.

The mean of each response is tied to the covariates through a link,
``g(mu_i) = x_i' beta``, and a single precision ``phi`` is shared by all
observations.  Estimation maximizes the log-likelihood by BFGS over
``(beta, log phi)`` using the analytic score; the batched entry point
:func:`fit_batch` fits many response vectors that share one design matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .betadist import LinkFunction, get_link
from .errors import InputError, NumericalError, UndefinedStatisticError
from .optim import bfgs_minimize

__all__ = [
    "CoefRow",
    "Dataset",
    "FitOptions",
    "FittedModel",
    "HatDiagnostics",
    "BatchFit",
    "coef_report",
    "expected_information",
    "fit_batch",
    "fit_mle",
    "hat_diagnostics",
    "hat_matrix",
    "log_likelihood",
    "observed_information",
    "pseudo_r2",
    "score",
    "starting_values",
]

PHI_START_FLOOR = 1.0
PHI_START_CAP = 1e6
# An ftol stop only counts as converged when the score is at least this small.
FTOL_SCORE_GUARD = 1e-3


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Response vector ``y`` on (0, 1) and an ``n x k`` design matrix ``X``.

    The first column of ``X`` is conventionally the intercept.  Construction
    validates ``n > k >= 1``, that every response is strictly inside the unit
    interval and that ``X`` has full column rank.
    """

    y: np.ndarray
    X: np.ndarray
    names: tuple = ()
    response_name: str = "y"

    def __post_init__(self):
        y = _frozen(self.y).ravel()
        X = _frozen(self.X)
        if X.ndim == 1:
            X = _frozen(X[:, None])
        if X.ndim != 2 or X.shape[0] != y.size:
            raise InputError(
                f"design matrix shape {X.shape} does not match {y.size} responses")
        n, k = X.shape
        if k < 1:
            raise InputError("design matrix needs at least one column")
        if n <= k:
            raise InputError(f"need more observations than coefficients (n={n}, k={k})")
        if not np.all(np.isfinite(X)):
            raise InputError("design matrix contains non-finite values")
        bad = np.flatnonzero(~((y > 0.0) & (y < 1.0)))
        if bad.size:
            raise InputError(
                f"response at observation {bad[0] + 1} is {float(y[bad[0]])!r}; "
                "values must lie strictly inside (0, 1)")
        if np.linalg.matrix_rank(X) < k:
            raise InputError("design matrix is rank deficient")
        names = tuple(self.names) or ("(Intercept)",) + tuple(
            f"x{j}" for j in range(1, k))
        if len(names) != k:
            raise InputError(f"{len(names)} column names for {k} columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    gtol: float = 1e-6
    ftol: float = 1e-10
    # "log" optimizes over log(phi); "identity" over phi itself.
    phi_scale: str = "log"
    start: tuple | None = None
    compute_se: bool = True

    def __post_init__(self):
        if self.phi_scale not in ("log", "identity"):
            raise InputError(f"phi_scale must be 'log' or 'identity', got {self.phi_scale!r}")
        if self.max_iter < 1:
            raise InputError("max_iter must be positive")


@dataclass(frozen=True)
class FittedModel:
    link: LinkFunction
    beta_hat: np.ndarray
    phi_hat: float
    mu_hat: np.ndarray
    eta_hat: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    gradient_norm: float
    stop_reason: str
    names: tuple
    covariance: np.ndarray | None = None
    se_message: str = ""
    history: tuple = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.beta_hat.size

    @property
    def std_errors(self) -> np.ndarray | None:
        """Standard errors of ``(beta, phi)``, or None if unavailable."""
        if self.covariance is None:
            return None
        return np.sqrt(np.diag(self.covariance))


@dataclass(frozen=True)
class HatDiagnostics:
    W: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class CoefRow:
    name: str
    estimate: float
    std_error: float
    exp_estimate: float


@dataclass
class BatchFit:
    """Fits of ``R`` response vectors sharing one design matrix."""

    beta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    loglik: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    gradient_norm: np.ndarray
    reason: np.ndarray
    history: list


# ------------------------------------------------------------------ kernels

def linear_predictor(X, beta):
    """``eta = X beta`` for a batch of coefficient rows, shape ``(R, n)``.

    Accumulates column by column so every row is computed the same way
    whatever the batch size.
    """
    beta = np.atleast_2d(beta)
    eta = beta[:, 0:1] * X[:, 0]
    for j in range(1, X.shape[1]):
        eta = eta + beta[:, j:j + 1] * X[:, j]
    return eta


class _Problem:
    """Precomputed per-observation quantities for a batch of responses."""

    def __init__(self, Y, X, link: LinkFunction):
        self.Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.X = np.asarray(X, dtype=float)
        self.link = link
        self.log_y = np.log(self.Y)
        self.log_1my = np.log1p(-self.Y)
        self.ystar = self.log_y - self.log_1my
        self.k = self.X.shape[1]

    def means(self, beta, rows):
        eta = linear_predictor(self.X, beta)
        with np.errstate(all="ignore"):
            mu = self.link._inverse(eta)
        return eta, mu

    def loglik(self, beta, phi, rows):
        """Log-likelihood per row; ``-inf`` where parameters are infeasible."""
        _, mu = self.means(beta, rows)
        phi_c = phi[:, None]
        with np.errstate(all="ignore"):
            a = mu * phi_c
            b = (1.0 - mu) * phi_c
            lg = specfun._log_gamma
            shape = a.shape
            terms = (-lg(a.ravel()).reshape(shape) - lg(b.ravel()).reshape(shape)
                     + (a - 1.0) * self.log_y[rows] + (b - 1.0) * self.log_1my[rows])
            ll = lg(phi) * self.Y.shape[1] + terms.sum(axis=1)
        ll[~np.isfinite(ll) | ~(phi > 0.0)] = -np.inf
        return ll

    def score(self, beta, phi, rows):
        """Gradient of the log-likelihood in ``(beta, phi)``, shape ``(R, k+1)``."""
        _, mu = self.means(beta, rows)
        phi_c = phi[:, None]
        with np.errstate(all="ignore"):
            a = mu * phi_c
            b = (1.0 - mu) * phi_c
            shape = a.shape
            psi_a = specfun._digamma(a.ravel()).reshape(shape)
            psi_b = specfun._digamma(b.ravel()).reshape(shape)
            resid = self.ystar[rows] - (psi_a - psi_b)
            t = self.link._mu_eta(mu)
            weighted = phi_c * t * resid
            out = np.empty((beta.shape[0], self.k + 1))
            for j in range(self.k):
                out[:, j] = (weighted * self.X[:, j]).sum(axis=1)
            out[:, self.k] = (mu * resid + self.log_1my[rows] - psi_b).sum(axis=1) \
                + self.Y.shape[1] * specfun._digamma(phi)
        return out

    def expected_info(self, beta, phi, rows):
        """Fisher information for ``(beta, phi)``, shape ``(R, k+1, k+1)``."""
        _, mu = self.means(beta, rows)
        phi_c = phi[:, None]
        a = mu * phi_c
        b = (1.0 - mu) * phi_c
        shape = a.shape
        tri_a = specfun._trigamma(a.ravel()).reshape(shape)
        tri_b = specfun._trigamma(b.ravel()).reshape(shape)
        t = self.link._mu_eta(mu)
        w = phi_c * (tri_a + tri_b) * t * t
        c = phi_c * (tri_a * mu - tri_b * (1.0 - mu))
        dd = tri_a * mu * mu + tri_b * (1.0 - mu) ** 2 - specfun._trigamma(phi)[:, None]
        k = self.k
        info = np.empty((beta.shape[0], k + 1, k + 1))
        for i in range(k):
            for j in range(i, k):
                v = phi * (w * self.X[:, i] * self.X[:, j]).sum(axis=1)
                info[:, i, j] = v
                info[:, j, i] = v
            v = (t * c * self.X[:, i]).sum(axis=1)
            info[:, i, k] = v
            info[:, k, i] = v
        info[:, k, k] = dd.sum(axis=1)
        return info


def _split(theta, k, phi_scale):
    beta = theta[:, :k]
    if phi_scale == "log":
        with np.errstate(over="ignore"):
            phi = np.exp(theta[:, k])
    else:
        phi = theta[:, k].copy()
    return beta, phi


def starting_values(Y, X, link):
    """Least-squares start for ``beta`` and a moment-based start for ``phi``.

    ``beta`` regresses ``g(y)`` on ``X``; ``phi`` inverts the variance
    identity using the least-squares residual variance, floored at 1.
    Responses are first shrunk towards 1/2 by ``(y (n - 1) + 1/2) / n`` so
    that values within rounding of 0 or 1 cannot dominate the start.
    """
    link = get_link(link)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    gy = link._forward((Y * (n - 1) + 0.5) / n)
    pinv = np.linalg.pinv(X)
    beta0 = np.einsum("rn,kn->rk", gy, pinv)
    eta0 = linear_predictor(X, beta0)
    with np.errstate(all="ignore"):
        mu0 = np.clip(link._inverse(eta0), 1e-10, 1.0 - 1e-10)
        resid = gy - eta0
        sigma2 = (resid * resid).sum(axis=1) / (n - k)
        dg = link._derivative(mu0)
        sigma2_i = sigma2[:, None] / (dg * dg)
        phi0 = (mu0 * (1.0 - mu0) / sigma2_i).mean(axis=1) - 1.0
    phi0 = np.where(np.isfinite(phi0), phi0, PHI_START_CAP)
    phi0 = np.clip(phi0, PHI_START_FLOOR, PHI_START_CAP)
    return beta0, phi0


def fit_batch(Y, X, link="logit", options: FitOptions | None = None,
              record_history: bool = False) -> BatchFit:
    """Fit one beta regression per row of ``Y`` (shape ``(R, n)``) on ``X``.

    No validation is performed here beyond shapes; :class:`Dataset` is the
    validating entry point for user data.
    """
    options = options or FitOptions()
    link = get_link(link)
    problem = _Problem(Y, X, link)
    R = problem.Y.shape[0]
    k = problem.k
    log_scale = options.phi_scale == "log"

    if options.start is not None:
        b0 = np.broadcast_to(np.asarray(options.start[0], dtype=float), (R, k)).copy()
        p0 = np.broadcast_to(np.asarray(options.start[1], dtype=float), (R,)).copy()
    else:
        b0, p0 = starting_values(problem.Y, problem.X, link)
    theta0 = np.column_stack([b0, np.log(p0) if log_scale else p0])

    def fun(theta, rows):
        beta, phi = _split(theta, k, options.phi_scale)
        return -problem.loglik(beta, phi, rows)

    def grad(theta, rows):
        beta, phi = _split(theta, k, options.phi_scale)
        s = problem.score(beta, phi, rows)
        if log_scale:
            s[:, k] *= phi
        return -s

    def score_norm(theta, g, rows):
        # Convergence is judged on the score in (beta, phi) coordinates.
        if log_scale:
            _, phi = _split(theta, k, options.phi_scale)
            g = g.copy()
            g[:, k] /= phi
        return np.max(np.abs(g), axis=1)

    def h0(theta, rows):
        beta, phi = _split(theta, k, options.phi_scale)
        with np.errstate(all="ignore"):
            info = problem.expected_info(beta, phi, rows)
        if log_scale:
            info[:, :, k] *= phi[:, None]
            info[:, k, :] *= phi[:, None]
        out = np.empty_like(info)
        for r in range(info.shape[0]):
            try:
                inv = np.linalg.inv(info[r])
                ok = np.all(np.isfinite(inv)) and np.all(np.linalg.eigvalsh(inv) > 0)
            except np.linalg.LinAlgError:
                ok = False
            out[r] = inv if ok else np.eye(k + 1) * 1e-2
        return out

    res = bfgs_minimize(fun, grad, theta0, h0, max_iter=options.max_iter,
                        gtol=options.gtol, ftol=options.ftol,
                        stop_measure=score_norm, ftol_guard=FTOL_SCORE_GUARD,
                        record_history=record_history)
    beta, phi = _split(res.x, k, options.phi_scale)
    eta, mu = problem.means(beta, None)
    history = [-h for h in res.history]
    return BatchFit(beta=beta, phi=phi, mu=mu, eta=eta, loglik=-res.fun,
                    converged=res.converged, iterations=res.iterations,
                    gradient_norm=res.stop_value, reason=res.reason,
                    history=history)


# ---------------------------------------------------------- public surface

def _params(beta, phi, k):
    beta = np.asarray(beta, dtype=float).reshape(1, k)
    phi = np.asarray([float(phi)])
    return beta, phi


def log_likelihood(d: Dataset, link, beta, phi) -> float:
    """Sum of log densities of ``d.y`` under ``mu = g^-1(X beta)`` and ``phi``.

    Raises
    ------
    NumericalError
        If the value is not finite (for instance when a fitted mean reaches
        0 or 1 in floating point).
    """
    link = get_link(link)
    beta, phi_a = _params(beta, phi, d.k)
    ll = _Problem(d.y, d.X, link).loglik(beta, phi_a, slice(None))[0]
    if not np.isfinite(ll):
        raise NumericalError("log-likelihood is not finite at these parameters")
    return float(ll)


def score(d: Dataset, link, beta, phi) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood` in ``(beta, phi)``."""
    link = get_link(link)
    beta, phi_a = _params(beta, phi, d.k)
    s = _Problem(d.y, d.X, link).score(beta, phi_a, slice(None))[0]
    if not np.all(np.isfinite(s)):
        raise NumericalError("score is not finite at these parameters")
    return s


def expected_information(d: Dataset, link, beta, phi) -> np.ndarray:
    """Fisher information matrix for ``(beta, phi)``."""
    link = get_link(link)
    beta, phi_a = _params(beta, phi, d.k)
    return _Problem(d.y, d.X, link).expected_info(beta, phi_a, slice(None))[0]


def observed_information(d: Dataset, link, beta, phi, rel_step: float = 1e-5):
    """Negative Hessian of the log-likelihood by central differences of the score."""
    theta = np.append(np.asarray(beta, dtype=float), float(phi))
    p = theta.size
    hess = np.empty((p, p))
    for j in range(p):
        step = rel_step * max(abs(theta[j]), 1.0)
        up, down = theta.copy(), theta.copy()
        up[j] += step
        down[j] -= step
        hess[:, j] = (score(d, link, up[:-1], up[-1])
                      - score(d, link, down[:-1], down[-1])) / (2.0 * step)
    return -hess


def _covariance(d, link, beta, phi):
    info = observed_information(d, link, beta, phi)
    scale = np.max(np.abs(info))
    asym = np.max(np.abs(info - info.T))
    if not np.all(np.isfinite(info)) or asym > 1e-4 * scale:
        return None, "observed information is not symmetric"
    info = 0.5 * (info + info.T)
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return None, "observed information is not positive definite"
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol, ""


def fit_mle(d: Dataset, link="logit", options: FitOptions | None = None) -> FittedModel:
    """Maximum-likelihood fit of a beta regression to ``d``.

    Non-convergence is reported through ``converged=False`` and
    ``stop_reason``; it is never raised.

    Examples
    --------
    >>> import numpy as np
    >>> d = Dataset(np.array([0.2, 0.4, 0.5, 0.7]), np.ones((4, 1)))
    >>> m = fit_mle(d)
    >>> m.converged
    True
    """
    options = options or FitOptions()
    link = get_link(link)
    res = fit_batch(d.y[None, :], d.X, link, options, record_history=True)
    beta = _frozen(res.beta[0])
    phi = float(res.phi[0])
    cov, msg = (None, "not requested")
    if options.compute_se and np.isfinite(phi) and phi > 0:
        try:
            cov, msg = _covariance(d, link, beta, phi)
        except NumericalError as exc:
            cov, msg = None, str(exc)
    return FittedModel(
        link=link,
        beta_hat=beta,
        phi_hat=phi,
        mu_hat=_frozen(res.mu[0]),
        eta_hat=_frozen(res.eta[0]),
        loglik=float(res.loglik[0]),
        iterations=int(res.iterations[0]),
        converged=bool(res.converged[0]),
        gradient_norm=float(res.gradient_norm[0]),
        stop_reason=str(res.reason[0]),
        names=d.names,
        covariance=None if cov is None else _frozen(cov),
        se_message=msg,
        history=tuple(float(h[0]) for h in res.history),
    )


def _weights(mu, phi, link):
    a = mu * phi
    b = (1.0 - mu) * phi
    v = specfun.trigamma(a) + specfun.trigamma(b)
    t = link._mu_eta(mu)
    return phi * v * t * t


def leverages(X, W) -> np.ndarray:
    """Diagonal of ``W^1/2 X (X' W X)^-1 X' W^1/2`` via a thin QR factorization.

    ``W`` may be ``(n,)`` or a batch ``(R, n)``.
    """
    W = np.asarray(W, dtype=float)
    batch = W.ndim == 2
    W2 = np.atleast_2d(W)
    out = np.empty_like(W2)
    for r in range(W2.shape[0]):
        A = np.sqrt(W2[r])[:, None] * X
        q, rr = np.linalg.qr(A)
        diag = np.abs(np.diag(rr))
        if diag.min() <= 1e-13 * diag.max():
            raise NumericalError("X' W X is numerically singular")
        out[r] = np.einsum("ij,ij->i", q, q)
    return out if batch else out[0]


def hat_diagnostics(m: FittedModel, d: Dataset) -> HatDiagnostics:
    """Weights and leverages of the fitted model."""
    W = _weights(m.mu_hat, m.phi_hat, m.link)
    h = leverages(d.X, W)
    return HatDiagnostics(W=_frozen(W), h=_frozen(h))


def hat_matrix(m: FittedModel, d: Dataset) -> np.ndarray:
    """Dense hat matrix, formed directly from its definition."""
    W = _weights(m.mu_hat, m.phi_hat, m.link)
    sw = np.sqrt(W)
    A = sw[:, None] * d.X
    return A @ np.linalg.inv(d.X.T @ (W[:, None] * d.X)) @ A.T


def pseudo_r2(m: FittedModel, d: Dataset) -> float:
    """Squared sample correlation between ``eta_hat`` and ``g(y)``."""
    gy = m.link.forward(d.y)
    eta = np.asarray(m.eta_hat)
    if np.ptp(eta) == 0.0 or np.ptp(gy) == 0.0:
        raise UndefinedStatisticError("pseudo R2 needs non-constant eta_hat and g(y)")
    r = np.corrcoef(eta, gy)[0, 1]
    return float(min(max(r * r, 0.0), 1.0))


def coef_report(m: FittedModel) -> list[CoefRow]:
    """Coefficient table: estimate, standard error and ``exp(estimate)``.

    With the logit link ``exp(estimate)`` is an odds ratio.  Standard errors
    are NaN when the observed information could not be inverted.
    """
    se = m.std_errors
    rows = []
    for j, name in enumerate(m.names):
        rows.append(CoefRow(
            name=name,
            estimate=float(m.beta_hat[j]),
            std_error=float(se[j]) if se is not None else float("nan"),
            exp_estimate=float(np.exp(m.beta_hat[j])),
        ))
    return rows
