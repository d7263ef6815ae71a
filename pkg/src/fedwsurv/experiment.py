"""One simulation replication end to end, and the replication fan-out."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .core import INTERCEPT, ModelSpec
from .dwsurv import AS_WRITTEN, VARIANCE_MODES, event_aggregates, fit_pooled
from .evaluator import summarize, value_function
from .federation import (LocalAll, LocalSelected, SitePayload, combine, sandwich_covariance,
                         site_summarize)
from .selection import screen_site
from .simgen import (ALL_X, BLIP, COHORT, CORRECT_TF, COVARIATES, MISSPECIFIED_TF, ScenarioConfig,
                     gen_dataset, known_censoring_predictors, known_confounders, stream)
from .weights import WeightSpec, compute_weights, estimate_nuisances

GLOBAL_ALL = "global_all"
GLOBAL_INTERCEPT = "global_intercept"
LOCAL_ALL = "local_all"
LOCAL_SELECTED = "local_selected"
INTERCEPT_ONLY = "intercept_only"
STRATEGIES = (GLOBAL_ALL, GLOBAL_INTERCEPT, LOCAL_ALL, LOCAL_SELECTED, INTERCEPT_ONLY)
METHOD_LABELS = {GLOBAL_ALL: "Global All Xs", GLOBAL_INTERCEPT: "Global",
                 LOCAL_ALL: "Local All Xs", LOCAL_SELECTED: "Local Some Xs",
                 INTERCEPT_ONLY: "Local"}
TF_SPECS = {"correct": CORRECT_TF, "misspecified": MISSPECIFIED_TF}

REP_COLUMNS = ("rep", "psi0", "psi1", "se_psi0", "se_psi1", "se_psi0_as_written",
               "se_psi1_as_written", "se_psi0_variance_consistent",
               "se_psi1_variance_consistent", "dvf", "v_true", "v_est", "n_events")


@dataclass(frozen=True)
class SimulationConfig:
    scenario: int
    n_total: int = 2500
    reps: int = 1000
    effect: str = "small"
    tf: str = "correct"
    strategy: str = GLOBAL_ALL
    seed: int = 1
    variance_mode: str = AS_WRITTEN
    cohort_size: int = 100_000
    selection: str = "known"  # "known" confounders or per-site "screen"
    screen_alpha: float = 0.05
    weight_kind: str = "overlap"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.strategy == LOCAL_SELECTED and self.scenario not in (5, 6, 7):
            raise ValueError("local_selected needs site-specific confounders (scenarios 5-7)")
        if self.tf not in TF_SPECS:
            raise ValueError(f"tf must be one of {sorted(TF_SPECS)}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"unknown variance mode {self.variance_mode!r}")
        if self.selection not in ("known", "screen"):
            raise ValueError("selection must be 'known' or 'screen'")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        self.scenario_config()

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.scenario, self.n_total, self.effect, self.seed)

    def model_spec(self) -> ModelSpec:
        nuis = (INTERCEPT,) if self.strategy in (GLOBAL_INTERCEPT, INTERCEPT_ONLY) else ALL_X
        return ModelSpec(TF_SPECS[self.tf], BLIP, nuis, nuis)

    @property
    def method(self) -> str:
        return METHOD_LABELS[self.strategy]


@dataclass(frozen=True, eq=False)
class RepResult:
    rep: int
    theta: np.ndarray
    psi: np.ndarray
    se: dict  # variance mode -> SE vector of theta
    variance_mode: str
    dvf: float
    v_true: float
    v_est: float
    n_events: int

    def row(self, pg_offset: int) -> dict:
        se = self.se[self.variance_mode]
        out = {"rep": self.rep, "psi0": self.psi[0], "psi1": self.psi[1],
               "se_psi0": se[pg_offset], "se_psi1": se[pg_offset + 1],
               "dvf": self.dvf, "v_true": self.v_true, "v_est": self.v_est,
               "n_events": self.n_events}
        for mode in VARIANCE_MODES:
            out[f"se_psi0_{mode}"] = self.se[mode][pg_offset]
            out[f"se_psi1_{mode}"] = self.se[mode][pg_offset + 1]
        return out


def site_nuisance(cfg: SimulationConfig, ds_j, site: int):
    if cfg.strategy == LOCAL_SELECTED:
        if cfg.selection == "screen":
            return screen_site(ds_j, COVARIATES, cfg.screen_alpha).nuisance()
        return LocalSelected(known_confounders(cfg.scenario, site),
                             known_censoring_predictors(cfg.scenario, site))
    return LocalAll()


def fit_dataset(ds, spec: ModelSpec, strategy: str, variance_mode: str = AS_WRITTEN,
                weight_spec: WeightSpec = WeightSpec(), nuisance_for_site=None):
    """Fit one dataset under a nuisance strategy.

    Global strategies fit the nuisance models on the pooled records and
    solve the pooled estimating equation, treating the data as one centre for
    the variance. Local strategies fit them per site and combine site
    payloads. ``nuisance_for_site(site, ds_j)`` overrides the per-site
    nuisance strategy. Returns ``(rule, payloads)``.
    """
    if strategy in (GLOBAL_ALL, GLOBAL_INTERCEPT):
        nf = estimate_nuisances(ds, spec.treatment_model, spec.censoring_model)
        w = compute_weights(nf.pi, nf.phi, ds.a, weight_spec)
        rule = fit_pooled(ds, spec, w, variance_mode)
        payloads = [SitePayload.from_aggregates(0, event_aggregates(ds, spec, w), spec.spec_hash)]
        return rule, payloads
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    payloads = []
    for site, ds_j in ds.by_site().items():
        nuis = nuisance_for_site(site, ds_j) if nuisance_for_site else LocalAll()
        payloads.append(site_summarize(ds_j, spec, weight_spec, nuis))
    fit = combine(payloads, variance_mode)
    return fit.to_rule(spec, ds.covariate_names), payloads


def fit_replication(cfg: SimulationConfig, ds):
    return fit_dataset(ds, cfg.model_spec(), cfg.strategy, cfg.variance_mode,
                       WeightSpec(cfg.weight_kind), lambda site, d: site_nuisance(cfg, d, site))


def run_replication(cfg: SimulationConfig, rep: int) -> RepResult:
    ds, truth = gen_dataset(cfg.scenario_config(), rep)
    rule, payloads = fit_replication(cfg, ds)
    se = {cfg.variance_mode: rule.standard_errors}
    for mode in VARIANCE_MODES:
        if mode not in se:
            cov, _ = sandwich_covariance(payloads, rule.theta, mode)
            se[mode] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    val = value_function(rule, truth, cfg.cohort_size, stream(cfg.seed, rep, COHORT))
    return RepResult(rep, rule.theta, rule.psi, se, cfg.variance_mode, val.dvf, val.v_true,
                     val.v_est, rule.n_events)


def _init_worker():
    threadpool_limits(1)


def _run_chunk(args):
    cfg, reps = args
    return [run_replication(cfg, r) for r in reps]


def run_simulation(cfg: SimulationConfig, workers: int = 1) -> list[RepResult]:
    """All replications of ``cfg``, ordered by replication index.

    Each replication draws only from its own streams, so the worker count
    never changes the results.
    """
    reps = list(range(cfg.reps))
    if workers <= 1:
        with threadpool_limits(1):
            return [run_replication(cfg, r) for r in reps]
    chunks = [(cfg, reps[k::workers]) for k in range(workers)]
    out = []
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
        for chunk in pool.map(_run_chunk, chunks):
            out.extend(chunk)
    return sorted(out, key=lambda r: r.rep)


def summarize_results(cfg: SimulationConfig, results: list[RepResult]):
    est = np.array([r.psi[:2] for r in results])
    return summarize(est, cfg.scenario_config().psi, [r.dvf for r in results])


def write_rep_csv(path, cfg: SimulationConfig, results: list[RepResult]):
    pf = len(TF_SPECS[cfg.tf])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(REP_COLUMNS)
        for r in results:
            row = r.row(pf)
            out.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating))
                          else str(row[c]) for c in REP_COLUMNS])
