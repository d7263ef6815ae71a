"""Domain types shared by every module: records, datasets, feature expressions,
model specifications and design matrices."""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class SchemaError(ValueError):
    """Input data or feature definitions do not fit the expected schema."""


class SingularityError(np.linalg.LinAlgError):
    """A linear system is rank deficient or too badly conditioned to solve."""


class NoInformationError(ValueError):
    """The data carry no information on the requested quantity (e.g. no events)."""


class DegeneratePredictorError(ValueError):
    """A predictor is constant, so no slope can be estimated."""


class PositivityError(ValueError):
    """A probability needed as a weight denominator is zero."""


# Name reserved for the treatment indicator inside feature expressions
# (censoring models may condition on treatment).
TREATMENT_NAME = "a"


@dataclass(frozen=True)
class SubjectRecord:
    id: int
    site: int
    x: tuple[float, ...]
    a: int
    time: float
    delta: int

    def __post_init__(self):
        if not self.time > 0:
            raise SchemaError(f"record {self.id}: time must be > 0, got {self.time}")
        if self.a not in (0, 1):
            raise SchemaError(f"record {self.id}: a must be 0 or 1, got {self.a}")
        if self.delta not in (0, 1):
            raise SchemaError(f"record {self.id}: delta must be 0 or 1, got {self.delta}")
        if self.site < 1:
            raise SchemaError(f"record {self.id}: site must be >= 1, got {self.site}")


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented container of subject records.

    Row order is the canonical iteration order; every downstream sum runs in
    this order. Arrays are read-only after construction.
    """

    covariate_names: tuple[str, ...]
    id: np.ndarray
    site: np.ndarray
    x: np.ndarray
    a: np.ndarray
    time: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        names = tuple(self.covariate_names)
        object.__setattr__(self, "covariate_names", names)
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise SchemaError("covariate matrix must be two-dimensional")
        n = x.shape[0]
        if n == 0:
            raise SchemaError("dataset is empty")
        if x.shape[1] != len(names):
            raise SchemaError(
                f"{len(names)} covariate names for {x.shape[1]} covariate columns")
        if len(set(names)) != len(names):
            raise SchemaError("duplicate covariate names")
        if TREATMENT_NAME in names:
            raise SchemaError(f"covariate name {TREATMENT_NAME!r} is reserved for treatment")
        cols = {"id": (self.id, np.int64), "site": (self.site, np.int64),
                "a": (self.a, np.int8), "time": (self.time, float),
                "delta": (self.delta, np.int8)}
        for key, (val, dtype) in cols.items():
            arr = np.asarray(val)
            if arr.shape != (n,):
                raise SchemaError(f"column {key!r} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, key, _frozen(arr, dtype))
        object.__setattr__(self, "x", _frozen(x, float))

        if not np.all(np.isfinite(self.x)):
            raise SchemaError("covariates must be finite")
        if not np.all(self.time > 0) or not np.all(np.isfinite(self.time)):
            bad = int(np.flatnonzero(~(self.time > 0) | ~np.isfinite(self.time))[0])
            raise SchemaError(f"row {bad}: time must be finite and > 0")
        for key in ("a", "delta"):
            arr = getattr(self, key)
            if not np.all((arr == 0) | (arr == 1)):
                bad = int(np.flatnonzero((arr != 0) & (arr != 1))[0])
                raise SchemaError(f"row {bad}: {key} must be 0 or 1")
        if np.any(self.site < 1):
            raise SchemaError("site ids must be >= 1")

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord], covariate_names: Sequence[str]):
        records = list(records)
        if not records:
            raise SchemaError("dataset is empty")
        k = len(covariate_names)
        for r in records:
            if len(r.x) != k:
                raise SchemaError(f"record {r.id}: {len(r.x)} covariates, expected {k}")
        return cls(
            covariate_names=tuple(covariate_names),
            id=[r.id for r in records],
            site=[r.site for r in records],
            x=np.array([r.x for r in records], dtype=float).reshape(len(records), k),
            a=[r.a for r in records],
            time=[r.time for r in records],
            delta=[r.delta for r in records],
        )

    @property
    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(int(i), int(s), tuple(float(v) for v in row), int(a), float(t), int(d))
            for i, s, row, a, t, d in zip(self.id, self.site, self.x, self.a, self.time, self.delta)
        ]

    def __len__(self):
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name == TREATMENT_NAME:
            return self.a.astype(float)
        try:
            k = self.covariate_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown covariate {name!r}") from None
        return self.x[:, k]

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(self.covariate_names, self.id[mask], self.site[mask], self.x[mask],
                       self.a[mask], self.time[mask], self.delta[mask])

    @property
    def sites(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.site))

    def by_site(self) -> dict[int, "Dataset"]:
        return {s: self.subset(self.site == s) for s in self.sites}


_PROD = re.compile(r"^([A-Za-z_]\w*)\s*\*\s*([A-Za-z_]\w*)$")
_SIN = re.compile(r"^sin\(\s*([A-Za-z_]\w*)\s*\)$")
_VAR = re.compile(r"^[A-Za-z_]\w*$")


@dataclass(frozen=True)
class FeatureExpr:
    """One basis term: ``1``, ``v``, ``sin(v)`` or ``u*v``."""

    kind: str  # "const" | "var" | "sin" | "prod"
    args: tuple[str, ...] = ()

    def __post_init__(self):
        arity = {"const": 0, "var": 1, "sin": 1, "prod": 2}
        if self.kind not in arity:
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if len(self.args) != arity[self.kind]:
            raise SchemaError(f"{self.kind} takes {arity[self.kind]} argument(s)")

    @classmethod
    def parse(cls, text: str) -> "FeatureExpr":
        s = text.strip()
        if s == "1":
            return cls("const")
        if m := _SIN.match(s):
            return cls("sin", (m.group(1),))
        if m := _PROD.match(s):
            return cls("prod", (m.group(1), m.group(2)))
        if _VAR.match(s) and s != "sin":
            return cls("var", (s,))
        raise SchemaError(f"cannot parse feature expression {text!r}")

    def __str__(self):
        if self.kind == "const":
            return "1"
        if self.kind == "var":
            return self.args[0]
        if self.kind == "sin":
            return f"sin({self.args[0]})"
        return f"{self.args[0]}*{self.args[1]}"

    @property
    def variables(self) -> tuple[str, ...]:
        return self.args

    def evaluate(self, source) -> np.ndarray:
        """Evaluate on a :class:`Dataset` or a mapping of name -> values."""
        col = source.column if isinstance(source, Dataset) else (
            lambda name: _lookup(source, name))
        if self.kind == "const":
            n = source.n if isinstance(source, Dataset) else np.shape(_first(source))
            return np.ones(n)
        if self.kind == "var":
            return np.array(col(self.args[0]), dtype=float)
        if self.kind == "sin":
            return np.sin(col(self.args[0]))
        return col(self.args[0]) * col(self.args[1])


def _lookup(mapping, name):
    try:
        return np.asarray(mapping[name], dtype=float)
    except KeyError:
        raise SchemaError(f"unknown covariate {name!r}") from None


def _first(mapping):
    for v in mapping.values():
        return np.asarray(v, dtype=float)
    return np.asarray(0.0)


def features(*exprs: str | FeatureExpr) -> tuple[FeatureExpr, ...]:
    return tuple(e if isinstance(e, FeatureExpr) else FeatureExpr.parse(e) for e in exprs)


def parse_feature_list(text: str) -> tuple[FeatureExpr, ...]:
    parts = [p for p in (s.strip() for s in text.split(",")) if p]
    return features(*parts)


INTERCEPT = FeatureExpr("const")


@dataclass(frozen=True)
class ModelSpec:
    treatment_free: tuple[FeatureExpr, ...]
    blip: tuple[FeatureExpr, ...]
    treatment_model: tuple[FeatureExpr, ...] = (INTERCEPT,)
    censoring_model: tuple[FeatureExpr, ...] = (INTERCEPT,)

    def __post_init__(self):
        for key in ("treatment_free", "blip", "treatment_model", "censoring_model"):
            object.__setattr__(self, key, features(*getattr(self, key)))
        if INTERCEPT not in self.blip:
            raise SchemaError("blip model must contain an intercept (main treatment effect)")
        tf_vars = {v for e in self.treatment_free for v in e.variables}
        missing = sorted({v for e in self.blip for v in e.variables} - tf_vars)
        if missing:
            raise SchemaError(
                f"blip variables {missing} do not appear in the treatment-free model")
        for key in ("treatment_free", "blip", "treatment_model"):
            if any(TREATMENT_NAME in e.variables for e in getattr(self, key)):
                raise SchemaError(f"{key} may not reference the treatment {TREATMENT_NAME!r}")

    @property
    def pf(self) -> int:
        return len(self.treatment_free)

    @property
    def pg(self) -> int:
        return len(self.blip)

    @property
    def p(self) -> int:
        return self.pf + self.pg

    @property
    def column_names(self) -> list[str]:
        return [str(e) for e in self.treatment_free] + [f"a:{e}" for e in self.blip]

    @property
    def spec_hash(self) -> str:
        # Only the outcome design enters: nuisance models may differ by site.
        text = "tf=" + "|".join(map(str, self.treatment_free)) + ";blip=" + "|".join(map(str, self.blip))
        return hashlib.sha256(text.encode()).hexdigest()

    def validate_against(self, ds: Dataset):
        known = set(ds.covariate_names) | {TREATMENT_NAME}
        for key in ("treatment_free", "blip", "treatment_model", "censoring_model"):
            for e in getattr(self, key):
                for v in e.variables:
                    if v not in known:
                        raise SchemaError(f"{key}: unknown covariate {v!r} in {e}")

    def to_text(self) -> str:
        return "\n".join([
            "tf = " + ", ".join(map(str, self.treatment_free)),
            "blip = " + ", ".join(map(str, self.blip)),
            "treatment = " + ", ".join(map(str, self.treatment_model)),
            "censoring = " + ", ".join(map(str, self.censoring_model)),
        ]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        keys = {"tf": "treatment_free", "treatment_free": "treatment_free", "blip": "blip",
                "treatment": "treatment_model", "censoring": "censoring_model"}
        found = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"spec line {lineno}: expected 'name = expr, ...'")
            key, _, rhs = line.partition("=")
            key = key.strip()
            if key not in keys:
                raise SchemaError(f"spec line {lineno}: unknown model {key!r}")
            found[keys[key]] = parse_feature_list(rhs)
        for required in ("treatment_free", "blip"):
            if required not in found:
                raise SchemaError(f"spec is missing the {required!r} model")
        return cls(**found)


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    Xf: np.ndarray
    Xg: np.ndarray
    X: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.X.shape[1]


def expand_features(ds: Dataset, spec: Sequence[FeatureExpr]) -> np.ndarray:
    """Evaluate each expression on every record; column k is ``spec[k]``."""
    spec = features(*spec)
    out = np.empty((ds.n, len(spec)))
    for k, expr in enumerate(spec):
        out[:, k] = expr.evaluate(ds)
    return out


def build_design(ds: Dataset, spec: ModelSpec) -> DesignMatrices:
    Xf = expand_features(ds, spec.treatment_free)
    Xg = expand_features(ds, spec.blip)
    X = np.hstack([Xf, ds.a[:, None] * Xg])
    return DesignMatrices(Xf, Xg, X)
