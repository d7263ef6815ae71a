"""Distributed regression: each site exports weighted sufficient statistics of
its own data; a coordinator sums them into the pooled estimate and the
conservative sandwich covariance.

Nothing record-level leaves a site. A payload holds p x p and p-sized
aggregates plus a count, so its size does not depend on the site's sample
size, and any set of rows with the same weighted cross-products produces the
identical payload.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import INTERCEPT, Dataset, ModelSpec, features
from .dwsurv import (AS_WRITTEN, VARIANCE_MODES, FittedRule, WeightedAggregates, event_aggregates,
                     residual_ss, sandwich, site_meat, solve_normal_equations)
from .weights import WeightSpec, compute_weights, estimate_nuisances

log = logging.getLogger(__name__)

PAYLOAD_VERSION = "1"
PAYLOAD_FIELDS = ("version", "site_id", "n_events", "p", "spec_hash", "gram", "moment", "yy",
                  "meat_basis", "alt_meat_basis")


class ProtocolError(ValueError):
    """Payloads cannot be combined (different designs, duplicate sites...)."""


class PayloadFormatError(ValueError):
    """A payload file is malformed, truncated or fails its checksum."""


@dataclass(frozen=True, eq=False)
class SitePayload:
    site_id: int
    n_events: int
    p: int
    spec_hash: str
    gram: np.ndarray            # X'WX over event rows
    moment: np.ndarray          # X'W log(t)
    yy: float                   # log(t)'W log(t)
    meat_basis: np.ndarray      # sum w^{3/2} x x'
    alt_meat_basis: np.ndarray  # sum w x x' (equals gram)

    def __post_init__(self):
        p = self.p
        for key, shape in (("gram", (p, p)), ("moment", (p,)), ("meat_basis", (p, p)),
                           ("alt_meat_basis", (p, p))):
            arr = np.array(getattr(self, key), dtype=float)
            if arr.shape != shape:
                raise PayloadFormatError(f"{key} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise PayloadFormatError(f"{key} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        object.__setattr__(self, "yy", float(self.yy))

    @property
    def insufficient(self) -> bool:
        """Too few events for a residual variance at this site."""
        return self.n_events <= self.p

    def aggregates(self) -> WeightedAggregates:
        return WeightedAggregates(self.n_events, self.gram, self.moment, self.yy, self.meat_basis)

    @classmethod
    def from_aggregates(cls, site_id, agg: WeightedAggregates, spec_hash: str) -> "SitePayload":
        return cls(int(site_id), int(agg.n_events), agg.gram.shape[0], spec_hash, agg.gram,
                   agg.moment, agg.yy, agg.meat_basis, agg.gram.copy())


@dataclass(frozen=True)
class LocalAll:
    """Fit the spec's treatment and censoring models on the site's data."""


@dataclass(frozen=True)
class LocalSelected:
    """Fit intercept plus the named variables for each nuisance model."""

    treatment: tuple[str, ...] = ()
    censoring: tuple[str, ...] = ()

    def models(self):
        return ((INTERCEPT,) + features(*self.treatment), (INTERCEPT,) + features(*self.censoring))


@dataclass(frozen=True, eq=False)
class Supplied:
    """Externally estimated propensity and observation probabilities."""

    pi: np.ndarray
    phi: np.ndarray


def site_summarize(ds_j: Dataset, spec: ModelSpec, weight_spec: WeightSpec = WeightSpec(),
                   nuisance=LocalAll()) -> SitePayload:
    sites = ds_j.sites
    if len(sites) != 1:
        raise ProtocolError(f"site data must come from one site, got sites {sites}")
    spec.validate_against(ds_j)
    if isinstance(nuisance, Supplied):
        pi, phi = np.asarray(nuisance.pi, float), np.asarray(nuisance.phi, float)
    else:
        if isinstance(nuisance, LocalSelected):
            tm, cm = nuisance.models()
        elif isinstance(nuisance, LocalAll):
            tm, cm = spec.treatment_model, spec.censoring_model
        else:
            raise TypeError(f"unknown nuisance strategy {nuisance!r}")
        fit = estimate_nuisances(ds_j, tm, cm)
        pi, phi = fit.pi, fit.phi
    w = compute_weights(pi, phi, ds_j.a, weight_spec)
    agg = event_aggregates(ds_j, spec, w)
    payload = SitePayload.from_aggregates(sites[0], agg, spec.spec_hash)
    if payload.insufficient:
        log.warning("site %d has %d events for %d parameters; its residual variance is undefined",
                    payload.site_id, payload.n_events, payload.p)
    return payload


@dataclass(frozen=True, eq=False)
class CombinedFit:
    theta: np.ndarray
    covariance: np.ndarray
    per_site_sigma: np.ndarray
    sites_used: list[int]
    spec_hash: str
    n_events: int
    variance_mode: str = AS_WRITTEN

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_rule(self, spec: ModelSpec, covariate_names=()) -> FittedRule:
        if spec.spec_hash != self.spec_hash:
            raise ProtocolError("model spec does not match the combined payloads")
        return FittedRule(self.theta[:spec.pf].copy(), self.theta[spec.pf:].copy(), spec,
                          self.n_events, self.covariance, tuple(covariate_names))


def _ordered(payloads: Sequence[SitePayload]) -> list[SitePayload]:
    if not payloads:
        raise ProtocolError("no payloads to combine")
    ps = sorted(payloads, key=lambda q: q.site_id)
    ids = [q.site_id for q in ps]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate site ids in {ids}")
    if len({q.spec_hash for q in ps}) != 1:
        raise ProtocolError("payloads were built from different design matrices (spec_hash differs)")
    if len({q.p for q in ps}) != 1:
        raise ProtocolError("payloads disagree on the number of parameters")
    return ps


def site_variances(payloads: Sequence[SitePayload], theta) -> np.ndarray:
    """``sigma_j^2 = R_j'W_jR_j / (n_j - p)``; NaN where ``n_j <= p``."""
    out = np.full(len(payloads), np.nan)
    for k, q in enumerate(payloads):
        if not q.insufficient:
            out[k] = max(residual_ss(q.aggregates(), theta), 0.0) / (q.n_events - q.p)
    return out


def sandwich_covariance(payloads: Sequence[SitePayload], theta, mode: str = AS_WRITTEN):
    ps = _ordered(payloads)
    if mode not in VARIANCE_MODES:
        raise ValueError(f"unknown variance mode {mode!r}")
    sigma2 = site_variances(ps, theta)
    meats = []
    for q, s2 in zip(ps, sigma2):
        if np.isnan(s2):
            log.warning("site %d excluded from the variance: %d events for %d parameters",
                        q.site_id, q.n_events, q.p)
            continue
        meats.append(site_meat(q.aggregates(), s2, mode))
    bread = sum((q.gram for q in ps[1:]), ps[0].gram.copy())
    return sandwich(bread, meats), sigma2


def combine(payloads: Sequence[SitePayload], variance_mode: str = AS_WRITTEN) -> CombinedFit:
    """Pooled estimate from summed aggregates, folded in ascending site order."""
    ps = _ordered(payloads)
    gram = ps[0].gram.copy()
    moment = ps[0].moment.copy()
    for q in ps[1:]:
        gram = gram + q.gram
        moment = moment + q.moment
    theta = solve_normal_equations(gram, moment)
    cov, sigma2 = sandwich_covariance(ps, theta, variance_mode)
    return CombinedFit(theta, cov, np.sqrt(sigma2), [q.site_id for q in ps], ps[0].spec_hash,
                       sum(q.n_events for q in ps), variance_mode)


# -- wire format -------------------------------------------------------------
#
# One "key = value" line per field, values in JSON notation, reals with 17
# significant digits, matrices as row-major nested arrays. A trailing
# checksum line (sha256 of everything above it) is optional on read.

def format_real(v: float) -> str:
    v = float(v)
    if not np.isfinite(v):
        raise PayloadFormatError("non-finite value cannot be encoded")
    return format(v, ".17g")


def format_vector(a) -> str:
    return "[" + ", ".join(format_real(v) for v in a) + "]"


def format_matrix(m) -> str:
    return "[" + ", ".join(format_vector(row) for row in m) + "]"


def dumps_payload(q: SitePayload) -> str:
    lines = [
        f'version = "{PAYLOAD_VERSION}"',
        f"site_id = {q.site_id}",
        f"n_events = {q.n_events}",
        f"p = {q.p}",
        f'spec_hash = "{q.spec_hash}"',
        f"gram = {format_matrix(q.gram)}",
        f"moment = {format_vector(q.moment)}",
        f"yy = {format_real(q.yy)}",
        f"meat_basis = {format_matrix(q.meat_basis)}",
        f"alt_meat_basis = {format_matrix(q.alt_meat_basis)}",
    ]
    body = "\n".join(lines) + "\n"
    return body + f'checksum = "{hashlib.sha256(body.encode()).hexdigest()}"\n'


def loads_payload(text: str) -> SitePayload:
    values = {}
    body = []
    checksum = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise PayloadFormatError(f"line {lineno}: expected 'key = value'")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            raise PayloadFormatError(f"field {key!r} (line {lineno}) is malformed") from None
        if key == "checksum":
            checksum = val
            continue
        if key not in PAYLOAD_FIELDS:
            raise PayloadFormatError(f"unknown field {key!r} on line {lineno}")
        if key in values:
            raise PayloadFormatError(f"field {key!r} appears twice")
        values[key] = val
        body.append(line)
    for key in PAYLOAD_FIELDS:
        if key not in values:
            raise PayloadFormatError(f"payload is missing field {key!r}")
    if checksum is not None:
        digest = hashlib.sha256(("\n".join(body) + "\n").encode()).hexdigest()
        if digest != checksum:
            raise PayloadFormatError("checksum mismatch: payload was altered or truncated")
    if values["version"] != PAYLOAD_VERSION:
        raise PayloadFormatError(f"unsupported payload version {values['version']!r}")
    for key in ("site_id", "n_events", "p"):
        if not isinstance(values[key], int):
            raise PayloadFormatError(f"field {key!r} must be an integer")
    try:
        return SitePayload(values["site_id"], values["n_events"], values["p"], values["spec_hash"],
                           np.array(values["gram"], dtype=float),
                           np.array(values["moment"], dtype=float), float(values["yy"]),
                           np.array(values["meat_basis"], dtype=float),
                           np.array(values["alt_meat_basis"], dtype=float))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PayloadFormatError):
            raise
        raise PayloadFormatError(f"payload arrays are malformed: {exc}") from None


def write_payload(q: SitePayload, path):
    with open(path, "w") as fh:
        fh.write(dumps_payload(q))


def read_payload(path) -> SitePayload:
    with open(path) as fh:
        return loads_payload(fh.read())
