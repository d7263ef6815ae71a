"""Weighted AFT estimating equation on pooled data, blip and optimal rule."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Dataset, ModelSpec, NoInformationError, SingularityError, build_design
from .weights import WeightVector

COND_LIMIT = 1e12
AS_WRITTEN = "as_written"
VARIANCE_CONSISTENT = "variance_consistent"
VARIANCE_MODES = (AS_WRITTEN, VARIANCE_CONSISTENT)


@dataclass(frozen=True, eq=False)
class WeightedAggregates:
    """Sufficient statistics of a weighted least-squares fit over event rows."""

    n_events: int
    gram: np.ndarray        # X'WX
    moment: np.ndarray      # X'Wy
    yy: float               # y'Wy
    meat_basis: np.ndarray  # sum w^{3/2} x x'


def weighted_aggregates(X, y, w) -> WeightedAggregates:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    Xw = X * w[:, None]
    gram = Xw.T @ X
    gram = 0.5 * (gram + gram.T)
    meat = (X * (w ** 1.5)[:, None]).T @ X
    meat = 0.5 * (meat + meat.T)
    return WeightedAggregates(X.shape[0], gram, Xw.T @ y, float(np.dot(w * y, y)), meat)


def event_aggregates(ds: Dataset, spec: ModelSpec, w) -> WeightedAggregates:
    """Aggregates of the rows with an observed event (``delta == 1``)."""
    w = w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if w.shape != (ds.n,):
        raise ValueError(f"{w.shape[0]} weights for {ds.n} records")
    ev = ds.delta == 1
    X = build_design(ds, spec).X[ev]
    return weighted_aggregates(X, np.log(ds.time[ev]), w[ev])


def solve_normal_equations(gram, moment) -> np.ndarray:
    """Solve ``gram @ theta = moment`` through an SVD with a conditioning guard."""
    u, s, vt = np.linalg.svd(gram)
    if s[-1] <= 0 or s[0] / s[-1] > COND_LIMIT:
        cond = np.inf if s[-1] <= 0 else s[0] / s[-1]
        raise SingularityError(
            f"normal equations are singular or ill-conditioned (condition number {cond:.3g})")
    return vt.T @ ((u.T @ moment) / s)


def inverse_spd(gram) -> np.ndarray:
    u, s, vt = np.linalg.svd(gram)
    if s[-1] <= 0 or s[0] / s[-1] > COND_LIMIT:
        raise SingularityError("matrix is singular or ill-conditioned")
    inv = vt.T @ (u.T / s[:, None])
    return 0.5 * (inv + inv.T)


def residual_ss(agg: WeightedAggregates, theta) -> float:
    """``R'WR`` recovered from the aggregates alone."""
    return float(agg.yy - 2.0 * theta @ agg.moment + theta @ agg.gram @ theta)


def sandwich(gram_total, meats: Sequence[np.ndarray]) -> np.ndarray:
    bread = inverse_spd(gram_total)
    meat = np.zeros_like(gram_total)
    for m in meats:
        meat = meat + m
    cov = bread @ meat @ bread
    return 0.5 * (cov + cov.T)


def site_meat(agg: WeightedAggregates, sigma2: float, mode: str) -> np.ndarray:
    """Per-site meat of the conservative sandwich.

    ``as_written`` takes the residual-scale matrix with entries
    ``sigma * w^{-1/2}``, giving ``sigma * sum w^{3/2} x x'``;
    ``variance_consistent`` uses ``sigma^2 / w``, giving ``sigma^2 * X'WX``.
    """
    if mode == AS_WRITTEN:
        return np.sqrt(sigma2) * agg.meat_basis
    if mode == VARIANCE_CONSISTENT:
        return sigma2 * agg.gram
    raise ValueError(f"unknown variance mode {mode!r}")


@dataclass(frozen=True, eq=False)
class FittedRule:
    beta: np.ndarray
    psi: np.ndarray
    spec: ModelSpec
    n_events: int
    covariance: np.ndarray | None = None
    covariate_names: tuple[str, ...] = ()

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta, self.psi])

    @property
    def standard_errors(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def blip_features(self, x) -> np.ndarray:
        """Blip basis at ``x``: a Dataset, a name mapping, or raw covariate
        vector(s) ordered as ``covariate_names``."""
        if not isinstance(x, (Mapping, Dataset)):
            x = dict(zip(self.covariate_names, np.asarray(x, dtype=float).T))
        cols = np.broadcast_arrays(*[e.evaluate(x) for e in self.spec.blip])
        return np.stack(cols, axis=-1)

    def blip(self, x) -> np.ndarray:
        """``psi' g(x)``: the treatment contrast on the log-time scale."""
        return self.blip_features(x) @ self.psi


def fit_pooled(ds: Dataset, spec: ModelSpec, w: WeightVector | np.ndarray,
               variance_mode: str | None = None) -> FittedRule:
    """Weighted least squares of log time on ``[f(x), a g(x)]`` over event rows.

    With ``variance_mode`` set, the pooled data are treated as one centre in
    the conservative sandwich formula.
    """
    spec.validate_against(ds)
    n_events = int(np.sum(ds.delta == 1))
    if n_events == 0:
        raise NoInformationError("no observed events")
    if n_events < spec.p:
        raise SingularityError(f"{n_events} events cannot identify {spec.p} parameters")
    agg = event_aggregates(ds, spec, w)
    theta = solve_normal_equations(agg.gram, agg.moment)
    cov = None
    if variance_mode is not None:
        if n_events <= spec.p:
            raise SingularityError("no residual degrees of freedom for a variance")
        sigma2 = max(residual_ss(agg, theta), 0.0) / (n_events - spec.p)
        cov = sandwich(agg.gram, [site_meat(agg, sigma2, variance_mode)])
    return FittedRule(theta[:spec.pf], theta[spec.pf:], spec, n_events, cov,
                      ds.covariate_names)


def blip_value(rule: FittedRule, x, a) -> np.ndarray | float:
    """``gamma(a, x) = a * psi' g(x)``; zero for ``a = 0`` by construction."""
    val = np.asarray(a) * rule.blip(x)
    return float(val) if np.ndim(val) == 0 else val


def decide(rule: FittedRule, x) -> np.ndarray | int:
    """Recommended treatment: 1 iff the estimated blip is strictly positive."""
    d = (rule.blip(x) > 0).astype(int)
    return int(d) if np.ndim(d) == 0 else d
