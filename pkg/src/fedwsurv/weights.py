"""Balancing weights (overlap or inverse probability of treatment, each times
inverse probability of censoring) and nuisance-model estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import INTERCEPT, Dataset, FeatureExpr, PositivityError, expand_features, features
from .glm import LogisticFit, fit_logistic

OVERLAP = "overlap"
IPT = "ipt"


@dataclass(frozen=True)
class WeightSpec:
    treatment_kind: str = OVERLAP
    truncation: float | None = None

    def __post_init__(self):
        if self.treatment_kind not in (OVERLAP, IPT):
            raise ValueError(f"unknown weight family {self.treatment_kind!r}")
        if self.truncation is not None and not 0.0 < self.truncation < 0.5:
            raise ValueError("truncation floor must lie in (0, 0.5)")


@dataclass(frozen=True, eq=False)
class WeightVector:
    w: np.ndarray
    pi: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return self.w.shape[0]


def treatment_factor(a, pi, kind):
    a = np.asarray(a, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if kind == OVERLAP:
        return np.abs(a - pi)
    if kind == IPT:
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / pi + (1.0 - a) / (1.0 - pi)
    raise ValueError(f"unknown weight family {kind!r}")


def compute_weights(pi, phi, a, spec: WeightSpec = WeightSpec()) -> WeightVector:
    """``w_i = t(a_i, pi_i) / phi_i`` for every record, censored ones included.

    ``phi`` is the probability of the event being observed. Only records with
    an observed event enter the estimating equation; that filter happens there.
    """
    pi = np.asarray(pi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    a = np.asarray(a)
    if not (pi.shape == phi.shape == a.shape):
        raise ValueError(f"misaligned inputs: {pi.shape}, {phi.shape}, {a.shape}")
    if spec.truncation is not None:
        f = spec.truncation
        pi = np.clip(pi, f, 1.0 - f)
        phi = np.maximum(phi, f)
    if np.any(phi <= 0):
        bad = int(np.flatnonzero(phi <= 0)[0])
        raise PositivityError(f"record {bad}: probability of observing the event is 0")
    w = treatment_factor(a, pi, spec.treatment_kind) / phi
    if not np.all(np.isfinite(w)):
        bad = int(np.flatnonzero(~np.isfinite(w))[0])
        raise PositivityError(f"record {bad}: non-finite weight (pi={pi[bad]})")
    return WeightVector(w, pi, phi)


def balancing_weight(kind: str) -> Callable:
    """Full weight function ``w(delta, a, pi, phi_a)``.

    A censored cell uses ``1/(1 - phi_a)`` as its censoring factor.
    """
    def w(delta, a, pi, phi_a):
        cens = np.where(delta == 1, phi_a, 1.0 - phi_a)
        return treatment_factor(a, pi, kind) / cens
    return w


@dataclass(frozen=True, eq=False)
class BalanceCheck:
    products: np.ndarray  # (..., 4) cells ordered (d,a) = (0,0), (1,0), (0,1), (1,1)
    spread: float


def check_balancing(pi, phi0, phi1, weight_fn: Callable) -> BalanceCheck:
    """Evaluate ``P(D=d, A=a | x) * w(d, a, x)`` for the four cells.

    The balancing property holds when all four agree; ``spread`` is the
    largest ``(max - min) / max|.|`` across the inputs.
    """
    pi = np.asarray(pi, dtype=float)
    phi0 = np.asarray(phi0, dtype=float)
    phi1 = np.asarray(phi1, dtype=float)
    cells = []
    for a, p_a, phi in ((0, 1.0 - pi, phi0), (1, pi, phi1)):
        for d in (0, 1):
            p_d = phi if d == 1 else 1.0 - phi
            cells.append(p_d * p_a * weight_fn(d, a, pi, phi))
    products = np.stack(cells, axis=-1)
    scale = np.max(np.abs(products), axis=-1)
    rel = (np.max(products, axis=-1) - np.min(products, axis=-1)) / scale
    return BalanceCheck(products, float(np.max(rel)))


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    pi: np.ndarray
    phi: np.ndarray
    treatment: LogisticFit
    censoring: LogisticFit | None


def estimate_nuisances(ds: Dataset, treatment_model: Sequence[FeatureExpr] = (INTERCEPT,),
                       censoring_model: Sequence[FeatureExpr] = (INTERCEPT,)) -> NuisanceFit:
    """Fit the propensity model and the model for observing the event.

    With no censored record in ``ds`` the event is observed with certainty
    and ``phi`` is set to 1 without fitting.
    """
    treatment_model = features(*treatment_model)
    censoring_model = features(*censoring_model)
    Xa = expand_features(ds, treatment_model)
    tfit = fit_logistic(Xa, ds.a, names=[str(e) for e in treatment_model])
    if np.all(ds.delta == 1):
        return NuisanceFit(tfit.fitted_probabilities, np.ones(ds.n), tfit, None)
    Xc = expand_features(ds, censoring_model)
    cfit = fit_logistic(Xc, ds.delta, names=[str(e) for e in censoring_model])
    return NuisanceFit(tfit.fitted_probabilities, cfit.fitted_probabilities, tfit, cfit)
