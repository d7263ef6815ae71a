"""Monte Carlo performance metrics, value of a rule, weighted SMDs."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dwsurv import FittedRule, decide
from .simgen import GeneratedTruth, gen_covariates, site_sizes

METRIC_COLUMNS = ("method", "scenario", "param", "mean", "lo", "hi", "rb_pct", "mse", "rmse",
                  "dvf", "dvf_sd")


@dataclass(frozen=True)
class ValueResult:
    v_true: float
    v_est: float
    dvf: float


def draw_cohort(truth: GeneratedTruth, cohort_size: int, rng) -> np.ndarray:
    """Fresh covariates with the same site mix as the generating scenario."""
    sizes = site_sizes(cohort_size, truth.config.site_fractions)
    return np.vstack([gen_covariates(j, m, rng) for j, m in enumerate(sizes, start=1)])


def value_function(rule: FittedRule | Callable, truth: GeneratedTruth, cohort_size: int = 100_000,
                   rng=None, cohort=None, realized: bool = False) -> ValueResult:
    """Mean noiseless log outcome under the rule vs. under the true optimal rule.

    ``dvf`` is accumulated from per-subject losses ``(a_est - a_opt) * blip``,
    each of which is non-positive, so ``dvf <= 0`` holds exactly.

    With ``realized=True`` each rule is instead scored on simulated log
    outcomes with independent N(0, 1) errors, so ``dvf`` carries Monte Carlo
    noise and may come out positive.
    """
    x = cohort if cohort is not None else draw_cohort(truth, cohort_size, rng)
    if isinstance(rule, FittedRule):
        a_est = np.asarray(decide(rule, {"x1": x[:, 0], "x2": x[:, 1], "x3": x[:, 2]}))
    else:
        a_est = np.asarray(rule(x)).astype(int)
    a_opt = truth.optimal_action(x)
    tf = truth.treatment_free(x)
    blip = truth.blip(x)
    v_true = float(np.mean(tf + a_opt * blip))
    v_est = float(np.mean(tf + a_est * blip))
    if realized:
        if rng is None:
            raise ValueError("realized outcomes need an rng")
        v_true += float(np.mean(rng.standard_normal(len(x))))
        v_est += float(np.mean(rng.standard_normal(len(x))))
        return ValueResult(v_true, v_est, v_est - v_true)
    dvf = float(np.mean((a_est - a_opt) * blip))
    return ValueResult(v_true, v_est, dvf)


@dataclass(frozen=True, eq=False)
class MetricSummary:
    params: tuple[str, ...]
    truth: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    bias: np.ndarray
    relative_bias_pct: np.ndarray
    mse: np.ndarray
    rmse: np.ndarray
    mc_se: np.ndarray
    dvf_mean: float
    dvf_sd: float
    n_reps: int
    degenerate: bool = False

    def rows(self, method: str, scenario) -> list[dict]:
        return [dict(method=method, scenario=scenario, param=name, mean=self.mean[k],
                     lo=self.lo[k], hi=self.hi[k], rb_pct=self.relative_bias_pct[k],
                     mse=self.mse[k], rmse=self.rmse[k], dvf=self.dvf_mean, dvf_sd=self.dvf_sd)
                for k, name in enumerate(self.params)]


def summarize(estimates, truth, dvfs=None, params: Sequence[str] = ("psi0", "psi1")) -> MetricSummary:
    """Replication-level summary; one row of ``estimates`` per replication.

    With a single replication the SD, interval and Monte Carlo SE are NaN and
    ``degenerate`` is set. A zero truth gives NaN relative bias (absolute
    bias is still reported).
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    reps = est.shape[0]
    if reps < 1:
        raise ValueError("no replications to summarize")
    mean = est.mean(axis=0)
    degenerate = reps < 2
    sd = np.full_like(mean, np.nan) if degenerate else est.std(axis=0, ddof=1)
    bias = mean - truth
    with np.errstate(divide="ignore", invalid="ignore"):
        rb = np.where(truth != 0, 100.0 * bias / truth, np.nan)
    mse = np.mean((est - truth) ** 2, axis=0)
    if dvfs is None or len(dvfs) == 0:
        dvf_mean = dvf_sd = float("nan")
    else:
        d = np.asarray(dvfs, dtype=float)
        dvf_mean = float(d.mean())
        dvf_sd = float(d.std(ddof=1)) if d.size > 1 else float("nan")
    return MetricSummary(tuple(params), truth, mean, sd, mean - 1.96 * sd, mean + 1.96 * sd, bias,
                         rb, mse, np.sqrt(mse), sd / np.sqrt(reps), dvf_mean, dvf_sd, reps,
                         degenerate)


def weighted_smd(x, group, w=None) -> float:
    """|weighted mean difference| / sqrt((s0^2 + s1^2) / 2)."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(group)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    stats = []
    for level in (0, 1):
        m = g == level
        if not np.any(m) or np.sum(w[m]) <= 0:
            raise ValueError(f"group {level} is empty")
        mu = np.sum(w[m] * x[m]) / np.sum(w[m])
        var = np.sum(w[m] * (x[m] - mu) ** 2) / np.sum(w[m])
        stats.append((mu, var))
    pooled = (stats[0][1] + stats[1][1]) / 2.0
    if pooled <= 0:
        raise ValueError("SMD undefined: zero pooled variance")
    return float(abs(stats[1][0] - stats[0][0]) / np.sqrt(pooled))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_metrics_csv(path, rows: Sequence[dict]):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(METRIC_COLUMNS)
        for r in rows:
            out.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
