"""Per-site screening of nuisance-model covariates.

A candidate enters a site's treatment model only when it is associated both
with treatment (univariate logistic) and with the outcome (univariate Cox);
the censoring model uses the censoring indicator in place of treatment.
Requiring the outcome association keeps pure instruments out of the weights.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Dataset, DegeneratePredictorError, NoInformationError, SingularityError
from .federation import LocalSelected
from .glm import univariate_cox_score_test, univariate_logistic_test

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariableScreen:
    variable: str
    p_treatment: float
    p_censoring: float
    p_outcome: float
    chosen_treatment: bool
    chosen_censoring: bool


@dataclass(frozen=True)
class SiteSelection:
    site: int
    screens: tuple[VariableScreen, ...]
    alpha: float

    @property
    def treatment_vars(self) -> tuple[str, ...]:
        return tuple(s.variable for s in self.screens if s.chosen_treatment)

    @property
    def censoring_vars(self) -> tuple[str, ...]:
        return tuple(s.variable for s in self.screens if s.chosen_censoring)

    def nuisance(self) -> LocalSelected:
        return LocalSelected(self.treatment_vars, self.censoring_vars)


@dataclass(frozen=True)
class SelectionReport:
    sites: tuple[SiteSelection, ...] = field(default=())

    def for_site(self, site: int) -> SiteSelection:
        for s in self.sites:
            if s.site == site:
                return s
        raise KeyError(site)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["site", "variable", "p_trt", "p_cens", "p_out", "chosen_trt",
                          "chosen_cens"])
            for s in self.sites:
                for v in s.screens:
                    out.writerow([s.site, v.variable, repr(v.p_treatment), repr(v.p_censoring),
                                  repr(v.p_outcome), int(v.chosen_treatment),
                                  int(v.chosen_censoring)])


def _p(test, *args) -> float:
    try:
        return test(*args).p_value
    except (DegeneratePredictorError, NoInformationError, SingularityError,
            np.linalg.LinAlgError) as exc:
        log.warning("screening test skipped: %s", exc)
        return float("nan")


def screen_site(ds_j: Dataset, candidates: Sequence[str], alpha: float = 0.05) -> SiteSelection:
    sites = ds_j.sites
    if len(sites) != 1:
        raise ValueError(f"expected data from one site, got {sites}")
    if not np.any(ds_j.delta == 1):
        raise NoInformationError(f"site {sites[0]} has no events")
    censored = 1 - ds_j.delta
    has_censoring = bool(np.any(censored == 1))
    screens = []
    for name in candidates:
        x = ds_j.column(name)
        if np.ptp(x) == 0:
            log.warning("site %d: %s is constant and was not screened", sites[0], name)
            nan = float("nan")
            screens.append(VariableScreen(name, nan, nan, nan, False, False))
            continue
        p_trt = _p(univariate_logistic_test, x, ds_j.a)
        p_cens = _p(univariate_logistic_test, x, censored) if has_censoring else float("nan")
        p_out = _p(univariate_cox_score_test, x, ds_j.time, ds_j.delta)
        # NaN compares False, so skipped tests never select.
        screens.append(VariableScreen(name, p_trt, p_cens, p_out,
                                      bool(p_trt < alpha and p_out < alpha),
                                      bool(p_cens < alpha and p_out < alpha)))
    return SiteSelection(sites[0], tuple(screens), alpha)


def screen_sites(ds: Dataset, candidates: Sequence[str], alpha: float = 0.05) -> SelectionReport:
    return SelectionReport(tuple(screen_site(d, candidates, alpha) for d in ds.by_site().values()))
