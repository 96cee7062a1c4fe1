"""Monte Carlo comparison of residuals under correctly specified models.

A scenario fixes the regression coefficients, the precision, the sample
size and the rule generating the two covariates.  The design matrix is
drawn once from the master seed and reused for every replication; each
replication draws fresh responses, refits the model and records the
residuals.  Per observation, the replication values of each residual are
then summarized by their moments and their Anderson-Darling distance from
the standard normal.

Replications are processed in fixed-size chunks, each replication with
its own random substream, so results are bit-identical for any number of
worker threads.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gof
from .betadist import CLOGLOG, LOGIT, LinkFunction, get_link, sample
from .errors import ConvergenceError, InputError, StudyError
from .fit import FitOptions, fit_batch, linear_predictor
from .optim import bfgs_minimize
from .residuals import KINDS, batch_residuals
from .rng import DEFAULT_SEED, rng_stream

__all__ = [
    "SCENARIOS",
    "ScenarioSpec",
    "StudySummary",
    "builtin_scenario",
    "calibrate_link",
    "design_hash",
    "generate_design",
    "mean_summary",
    "rng_stream",
    "run_study",
    "simulate_replicates",
]

#: Logit-scale coefficients and covariate rule of the built-in scenarios.
SCENARIOS = {
    "I": ((-2.3, -1.1, -0.7), "uniform_all"),
    "II": ((-0.3, 0.3, 0.7), "uniform_all"),
    "III": ((4.0, -0.3, -0.5), "uniform_all"),
    "IV": ((1.0, 0.5, -0.5), "exp_normal"),
    "V": ((-2.5, 2.0, -0.5), "exp_normal"),
}
COVARIATE_RULES = ("uniform_all", "exp_normal")
#: Default mean of the exponential covariate (rate 2).
EXP_MEAN = 0.5

CHUNK_SIZE = 250
#: Fraction of n_rep that may be redrawn after failed fits.
REDRAW_FRACTION = 0.02
MAX_ATTEMPTS_PER_REPLICATE = 50


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    link: LinkFunction
    beta: tuple
    phi: float
    n: int
    covariate_rule: str
    master_seed: int = DEFAULT_SEED
    # Logit coefficients the link was calibrated against, if any.
    reference_beta: tuple | None = None
    # Mean of the exponential covariate under the exp_normal rule.
    exp_mean: float = EXP_MEAN

    def __post_init__(self):
        if self.covariate_rule not in COVARIATE_RULES:
            raise InputError(f"unknown covariate rule {self.covariate_rule!r}")
        if not self.phi > 0:
            raise InputError("phi must be positive")
        if not self.exp_mean > 0:
            raise InputError("exp_mean must be positive")
        if self.n <= len(self.beta):
            raise InputError(f"n={self.n} must exceed the number of coefficients")


def generate_design(spec: ScenarioSpec) -> np.ndarray:
    """Intercept plus two covariates drawn once from the master seed."""
    rng = rng_stream(spec.master_seed, 0, purpose="design")
    n = spec.n
    if spec.covariate_rule == "uniform_all":
        cov = rng.uniform(size=(n, 2))
    else:
        cov = np.column_stack([rng.exponential(spec.exp_mean, size=n), rng.standard_normal(n)])
    return np.column_stack([np.ones(n), cov])


def design_hash(X) -> str:
    return hashlib.sha256(np.ascontiguousarray(X, dtype=float).tobytes()).hexdigest()


def mean_summary(mu) -> np.ndarray:
    """Mean, SD, minimum and maximum of a vector of means."""
    mu = np.asarray(mu, dtype=float)
    return np.array([mu.mean(), mu.std(ddof=1), mu.min(), mu.max()])


def calibrate_link(X, reference_beta, link, reference_link=LOGIT):
    """Coefficients for ``link`` that reproduce the summary of a reference mean vector.

    Minimizes the squared relative mismatch of the mean, SD, minimum and
    maximum of ``g^-1(X beta)`` against those of the reference model on
    the same covariates, starting from least squares of ``g(mu_ref)`` on
    ``X`` and polishing with BFGS.

    Returns
    -------
    beta : ndarray
    mismatch : ndarray
        Relative errors of the four summaries at the solution.
    """
    link = get_link(link)
    X = np.asarray(X, dtype=float)
    target = mean_summary(reference_link.inverse(X @ np.asarray(reference_beta)))
    beta0 = np.linalg.lstsq(X, link.forward(reference_link.inverse(
        X @ np.asarray(reference_beta))), rcond=None)[0]

    def objective(b):
        with np.errstate(all="ignore"):
            mu = link._inverse(linear_predictor(X, b))
        out = np.empty(b.shape[0])
        for r in range(b.shape[0]):
            rel = (mean_summary(mu[r]) - target) / target
            out[r] = np.sum(rel * rel)
        return out

    def fun(b, rows):
        return objective(b)

    def grad(b, rows):
        g = np.empty_like(b)
        for j in range(b.shape[1]):
            step = 1e-7 * np.maximum(np.abs(b[:, j]), 1.0)
            up, down = b.copy(), b.copy()
            up[:, j] += step
            down[:, j] -= step
            g[:, j] = (objective(up) - objective(down)) / (2.0 * step)
        return g

    res = bfgs_minimize(fun, grad, beta0[None, :], None, max_iter=500,
                        gtol=1e-12, ftol=1e-14)
    beta = res.x[0]
    with np.errstate(all="ignore"):
        mismatch = (mean_summary(link._inverse(X @ beta)) - target) / target
    return beta, mismatch


def builtin_scenario(id: str, phi: float = 10.0, n: int = 16, link="logit",
                     master_seed: int = DEFAULT_SEED,
                     exp_mean: float = EXP_MEAN) -> ScenarioSpec:
    """One of the five built-in scenarios.

    For a non-logit link the coefficients are recalibrated on the same
    covariates so that the mean, SD, minimum and maximum of the means
    match the logit scenario.
    """
    key = str(id).upper()
    if key not in SCENARIOS:
        raise InputError(f"unknown scenario {id!r}; choose from {list(SCENARIOS)}")
    beta, rule = SCENARIOS[key]
    link = get_link(link)
    spec = ScenarioSpec(key, LOGIT, beta, float(phi), int(n), rule, int(master_seed),
                        exp_mean=float(exp_mean))
    if link is LOGIT:
        return spec
    X = generate_design(spec)
    new_beta, _ = calibrate_link(X, beta, link)
    return ScenarioSpec(key, link, tuple(float(b) for b in new_beta), float(phi),
                        int(n), rule, int(master_seed), reference_beta=beta,
                        exp_mean=float(exp_mean))


# ----------------------------------------------------------- replication

def simulate_replicates(indices, X, mu, phi, link, seed, purpose, options=None):
    """Draw and fit one response vector per replicate index.

    Replicates whose fit fails are redrawn from their own stream, which
    keeps every replicate independent of the others.

    Returns
    -------
    Y : ndarray (R, n)
    fits : BatchFit
    redraws : ndarray (R,) of redraw counts
    """
    indices = list(indices)
    streams = [rng_stream(seed, int(i), purpose=purpose) for i in indices]
    Y = np.stack([sample(mu, phi, rng=s) for s in streams])
    fits = fit_batch(Y, X, link, options)
    redraws = np.zeros(len(indices), dtype=int)
    failed = np.flatnonzero(~fits.converged)
    while failed.size:
        if np.any(redraws[failed] >= MAX_ATTEMPTS_PER_REPLICATE):
            raise ConvergenceError("a replicate failed to converge on every redraw")
        redraws[failed] += 1
        Y[failed] = np.stack([sample(mu, phi, rng=streams[r]) for r in failed])
        refit = fit_batch(Y[failed], X, link, options)
        for name in ("beta", "phi", "mu", "eta", "loglik", "converged",
                     "iterations", "gradient_norm", "reason"):
            getattr(fits, name)[failed] = getattr(refit, name)
        failed = failed[~refit.converged]
    return Y, fits, redraws


@dataclass
class StudySummary:
    """Per-observation residual summaries of one scenario run.

    ``per_obs[kind][stat]`` is a length-n array for ``stat`` in
    ``("mean", "variance", "skewness", "kurtosis", "ad")``.  ``aggregate``
    holds the mean and SD of each column over observations and
    ``ad_table`` the distribution of the AD statistic per kind.
    """

    spec: ScenarioSpec
    n_rep: int
    kinds: tuple
    mu: np.ndarray
    design_hash: str
    per_obs: dict
    aggregate: dict
    ad_table: dict
    redraws: int
    residuals: dict | None = field(default=None, repr=False)

    STATS = ("mean", "variance", "skewness", "kurtosis", "ad")

    def column_mean_ad(self, kind: str) -> float:
        return self.ad_table[kind]["mean"]

    def rows(self) -> list[list]:
        """Table rows: one per observation, then ``Mean`` and ``SD`` rows."""
        out = []
        for i in range(self.spec.n):
            row = [i + 1, float(self.mu[i])]
            for kind in self.kinds:
                row.extend(float(self.per_obs[kind][s][i]) for s in self.STATS)
            out.append(row)
        for label in ("mean", "sd"):
            row = [label.capitalize() if label == "mean" else "SD", float("nan")]
            for kind in self.kinds:
                row.extend(self.aggregate[kind][s][label] for s in self.STATS)
            out.append(row)
        return out

    def header(self) -> list[str]:
        cols = ["i", "mu"]
        for kind in self.kinds:
            cols.extend(f"{kind}_{s}" for s in self.STATS)
        return cols


def _summarize_observations(R):
    mean, var, skew, kurt = gof.moment_summary_columns(R)
    ad = gof.anderson_darling_columns(R)
    return {"mean": mean, "variance": var, "skewness": skew, "kurtosis": kurt, "ad": ad}


def _column_aggregate(values):
    v = np.asarray(values, dtype=float)
    finite = v[np.isfinite(v)]
    if finite.size == 0:
        return {"mean": float("nan"), "sd": float("nan")}
    return {"mean": float(finite.mean()),
            "sd": float(finite.std(ddof=1)) if finite.size > 1 else float("nan")}


def run_study(spec: ScenarioSpec, n_rep: int, kinds=KINDS, threads: int = 1,
              keep_residuals: bool = False,
              options: FitOptions | None = None) -> StudySummary:
    """Run ``n_rep`` replications of a scenario and summarize the residuals.

    Raises
    ------
    StudyError
        If more than 2% of replications had to be redrawn because their fit
        failed to converge.
    """
    if n_rep < 2:
        raise InputError("n_rep must be at least 2")
    kinds = tuple(kinds)
    unknown = set(kinds) - set(KINDS)
    if unknown or not kinds:
        raise InputError(f"unknown residual kinds {sorted(unknown)}")
    options = options or FitOptions(compute_se=False)
    X = generate_design(spec)
    mu = spec.link.inverse(X @ np.asarray(spec.beta))
    chunks = [range(s, min(s + CHUNK_SIZE, n_rep)) for s in range(0, n_rep, CHUNK_SIZE)]

    def work(idx):
        try:
            Y, fits, redraws = simulate_replicates(
                idx, X, mu, spec.phi, spec.link, spec.master_seed, "replicate", options)
        except ConvergenceError as exc:
            raise StudyError(f"scenario {spec.id}: {exc}") from exc
        res = batch_residuals(Y, X, fits.mu, fits.phi, spec.link, kinds)
        return res, int(redraws.sum())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]

    redraws = sum(p[1] for p in parts)
    cap = math.floor(REDRAW_FRACTION * n_rep)
    if redraws > cap:
        raise StudyError(
            f"scenario {spec.id} (phi={spec.phi}, n={spec.n}): {redraws} failed fits "
            f"exceed the cap of {cap} redraws")
    residuals = {k: np.concatenate([p[0][k] for p in parts]) for k in kinds}
    per_obs = {k: _summarize_observations(residuals[k]) for k in kinds}
    aggregate = {k: {s: _column_aggregate(per_obs[k][s]) for s in StudySummary.STATS}
                 for k in kinds}
    ad_table = {k: gof.distribution_summary(per_obs[k]["ad"]) for k in kinds}
    return StudySummary(
        spec=spec, n_rep=n_rep, kinds=kinds, mu=mu, design_hash=design_hash(X),
        per_obs=per_obs, aggregate=aggregate, ad_table=ad_table, redraws=redraws,
        residuals=residuals if keep_residuals else None)
