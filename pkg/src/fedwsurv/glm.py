"""Logistic regression by IRLS and a one-covariate Cox model.

The logistic fits back the propensity and censoring models; the univariate
tests back per-site variable screening.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.special import expit

from .core import DegeneratePredictorError, NoInformationError, SchemaError, SingularityError

PROB_FLOOR = 1e-12
MAX_ITER = 50
DEVIANCE_TOL = 1e-10
SEPARATION_BOUND = 30.0


@dataclass(frozen=True, eq=False)
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    fitted_probabilities: np.ndarray
    loglik_path: tuple[float, ...] = field(default=(), repr=False)

    @property
    def loglik(self) -> float:
        return self.loglik_path[-1]


@dataclass(frozen=True)
class UnivariateTestResult:
    estimate: float
    standard_error: float
    p_value: float


def _loglik(eta, y):
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def check_full_rank(design, names=None):
    """Raise :class:`SingularityError` naming the first dependent column."""
    design = np.asarray(design, dtype=float)
    n, p = design.shape
    if p == 0:
        return
    if n < p:
        raise SingularityError(f"{n} rows cannot identify {p} columns")
    # Column scaling keeps the rank decision independent of units.
    norms = np.linalg.norm(design, axis=0)
    if np.any(norms == 0):
        k = int(np.flatnonzero(norms == 0)[0])
        label = names[k] if names is not None else k
        raise SingularityError(f"design column {label!r} is identically zero")
    _, r, piv = scipy.linalg.qr(design / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > diag[0] * max(n, p) * np.finfo(float).eps * 10))
    if rank < p:
        k = int(piv[rank])
        label = names[k] if names is not None else k
        raise SingularityError(f"design column {label!r} is linearly dependent on the others")


def predict_prob(fit: LogisticFit | np.ndarray, design) -> np.ndarray:
    coef = fit.coefficients if isinstance(fit, LogisticFit) else np.asarray(fit, dtype=float)
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] != coef.shape[0]:
        raise SchemaError(
            f"design has shape {design.shape}, expected {coef.shape[0]} columns")
    return np.clip(expit(design @ coef), PROB_FLOOR, 1.0 - PROB_FLOOR)


def fit_logistic(design, y, names=None, max_iter=MAX_ITER, tol=DEVIANCE_TOL) -> LogisticFit:
    """Maximum-likelihood logistic regression via Newton/IRLS with step halving.

    Stops once the deviance changes by less than ``tol``. Fits that hit
    ``max_iter`` or drift past ``|coef| > 30`` (separation) come back with
    ``converged=False`` instead of raising.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SchemaError(f"design shape {X.shape} does not match {y.shape[0]} outcomes")
    check_full_rank(X, names)

    coef = np.zeros(X.shape[1])
    eta = X @ coef
    ll = _loglik(eta, y)
    path = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = np.clip(expit(eta), PROB_FLOOR, 1.0 - PROB_FLOOR)
        sw = np.sqrt(mu * (1.0 - mu))
        step = np.linalg.lstsq(X * sw[:, None], (y - mu) / sw, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = coef + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y)
            if ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            break
        delta_dev = 2.0 * abs(ll_c - ll)
        coef, eta, ll = cand, eta_c, max(ll_c, ll)
        path.append(ll)
        if delta_dev < tol:
            converged = True
            break
    if np.any(np.abs(coef) > SEPARATION_BOUND):
        converged = False
    probs = np.clip(expit(X @ coef), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return LogisticFit(coef, converged, it, probs, tuple(path))


def _wald(estimate, se):
    z = estimate / se
    return UnivariateTestResult(float(estimate), float(se), float(2.0 * stats.norm.sf(abs(z))))


def univariate_logistic_test(x, y) -> UnivariateTestResult:
    """Wald test of the slope in ``logit P(y=1) = b0 + b1 x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(x) == 0:
        raise DegeneratePredictorError("predictor is constant")
    X = np.column_stack([np.ones_like(x), x])
    fit = fit_logistic(X, y)
    mu = fit.fitted_probabilities
    info = X.T @ (X * (mu * (1.0 - mu))[:, None])
    cov = np.linalg.inv(info)
    return _wald(fit.coefficients[1], np.sqrt(cov[1, 1]))


def cox_partial_loglik(beta, x, time, delta):
    """Breslow partial log-likelihood of a one-covariate Cox model.

    Returns ``(loglik, score, information)`` at ``beta``.
    """
    x = np.asarray(x, dtype=float)
    time = np.asarray(time, dtype=float)
    delta = np.asarray(delta).astype(bool)
    order = np.argsort(time, kind="stable")
    t, xs, d = time[order], x[order], delta[order]
    lp = beta * xs
    shift = lp.max()
    e = np.exp(lp - shift)
    # Suffix sums over the ascending order give the risk-set totals; tied times
    # share the risk set starting at their first occurrence.
    s0 = np.cumsum(e[::-1])[::-1]
    s1 = np.cumsum((e * xs)[::-1])[::-1]
    s2 = np.cumsum((e * xs * xs)[::-1])[::-1]
    start = np.searchsorted(t, t[d], side="left")
    r0, r1, r2 = s0[start], s1[start], s2[start]
    xbar = r1 / r0
    loglik = float(np.sum(lp[d] - shift - np.log(r0)))
    score = float(np.sum(xs[d] - xbar))
    info = float(np.sum(r2 / r0 - xbar ** 2))
    return loglik, score, info


def univariate_cox_score_test(x, time, delta, max_iter=MAX_ITER) -> UnivariateTestResult:
    """Newton fit of ``h(t|x) = h0(t) exp(b x)`` with a Wald test of ``b``."""
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta)
    if not np.any(delta == 1):
        raise NoInformationError("no events: the Cox partial likelihood is flat")
    if np.ptp(x) == 0:
        raise DegeneratePredictorError("predictor is constant")
    # Centring leaves the partial likelihood unchanged and avoids overflow.
    xc = x - x.mean()
    beta = 0.0
    ll, score, info = cox_partial_loglik(beta, xc, time, delta)
    for _ in range(max_iter):
        if info <= 0:
            break
        step = score / info
        t = 1.0
        for _ in range(40):
            ll_new, score_new, info_new = cox_partial_loglik(beta + t * step, xc, time, delta)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        beta += t * step
        done = abs(ll_new - ll) < DEVIANCE_TOL
        ll, score, info = ll_new, score_new, info_new
        if done:
            break
    if info <= 0:
        raise NoInformationError("Cox information is zero at the estimate")
    return _wald(beta, 1.0 / np.sqrt(info))
