"""Data generation for the seven multi-site simulation scenarios.

Every random draw comes from a Philox stream keyed by ``(seed, rep, purpose,
site)``, so a replication is reproducible on its own and serial and parallel
runs agree.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import Dataset, features

COVARIATES = ("x1", "x2", "x3")
BETA = (4.0, 0.2, -0.1, 0.01, -0.005)
EFFECTS = {"small": (0.15, -0.015), "large": (4.0, -0.55)}
DEFAULT_FRACTIONS = (0.06, 0.07, 0.08, 0.09, 0.10, 0.10, 0.11, 0.12, 0.13, 0.14)

CORRECT_TF = features("1", "x1", "sin(x2)", "x3", "x1*x3")
MISSPECIFIED_TF = features("1", "x1", "x2", "x3")
BLIP = features("1", "x2")
ALL_X = features("1", "x1", "x2", "x3")

# stream purposes
ALPHA, SITE, COHORT = 0, 1, 2


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: int
    n_total: int = 2500
    effect_size: str = "small"
    seed: int = 0
    J: int = 10
    site_fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    beta: tuple[float, ...] = BETA

    def __post_init__(self):
        if self.scenario_id not in range(1, 8):
            raise ValueError(f"scenario must be 1..7, got {self.scenario_id}")
        if self.effect_size not in EFFECTS:
            raise ValueError(f"effect size must be one of {sorted(EFFECTS)}")
        fr = np.asarray(self.site_fractions, dtype=float)
        if fr.shape != (self.J,):
            raise ValueError(f"{fr.size} site fractions for J={self.J} sites")
        if abs(fr.sum() - 1.0) > 1e-12:
            raise ValueError(f"site fractions sum to {fr.sum()!r}, not 1")
        if np.any(fr < 0.06 - 1e-12) or np.any(fr > 0.14 + 1e-12):
            raise ValueError("each site fraction must lie in [0.06, 0.14]")
        if self.J != 10 and self.scenario_id >= 5:
            raise ValueError("scenarios 5-7 define site-specific confounders for 10 sites")
        if self.n_total < self.J:
            raise ValueError("fewer subjects than sites")

    @property
    def psi(self) -> tuple[float, float]:
        return EFFECTS[self.effect_size]

    @property
    def censored(self) -> bool:
        return self.scenario_id == 7


@dataclass(frozen=True, eq=False)
class GeneratedTruth:
    config: ScenarioConfig
    alphas: np.ndarray

    @property
    def psi(self) -> np.ndarray:
        return np.array(self.config.psi)

    @property
    def beta(self) -> np.ndarray:
        return np.array(self.config.beta)

    def treatment_free(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        b = self.config.beta
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return b[0] + b[1] * x1 + b[2] * np.sin(x2) + b[3] * x3 + b[4] * x1 * x3

    def blip(self, x) -> np.ndarray:
        psi0, psi1 = self.config.psi
        return psi0 + psi1 * np.asarray(x, dtype=float)[..., 1]

    def optimal_action(self, x) -> np.ndarray:
        return (self.blip(x) > 0).astype(int)


def site_sizes(n_total: int, fractions) -> np.ndarray:
    """Largest-remainder apportionment of ``n_total`` across sites."""
    quota = n_total * np.asarray(fractions, dtype=float)
    sizes = np.floor(quota).astype(int)
    short = n_total - sizes.sum()
    order = np.argsort(-(quota - sizes), kind="stable")
    sizes[order[:short]] += 1
    return sizes


def gen_covariates(j: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if j < 1:
        raise ValueError("site index starts at 1")
    odd = j % 2 == 1
    x1 = (rng.random(m) < (0.55 if odd else 0.4)).astype(float)
    x2 = rng.normal(10.0, 1.0, m) if odd else rng.normal(8.0, 1.5, m)
    x3 = rng.uniform(6.0, 14.0, m) if odd else 7.0 + rng.lognormal(0.7, 0.5, m)
    return np.column_stack([x1, x2, x3])


_UNIFORM = {3: [(0.002, 0.02)] * 4, 4: [(0.04, 0.14)] * 4,
            5: [(0.01, 0.06), (0.01, 0.06), (0.002, 0.02), (0.002, 0.02)],
            6: [(0.6, 0.8), (0.6, 0.8), (0.14, 0.18), (0.14, 0.18)]}


def active_alphas(scenario: int, J: int = 10) -> np.ndarray:
    """Boolean J x 4 mask of propensity coefficients that are not fixed at zero."""
    mask = np.ones((J, 4), dtype=bool)
    if scenario in (5, 6, 7):
        j = np.arange(1, J + 1)
        mask[:, 1] = j <= 4
        mask[:, 2] = (j >= 4) & (j <= 7)
        mask[:, 3] = j >= 8
    return mask


def draw_alphas(scenario: int, J: int, rng: np.random.Generator) -> np.ndarray:
    if scenario == 1:
        return np.full((J, 4), 0.01)
    if scenario == 2:
        return np.full((J, 4), 0.1)
    ranges = _UNIFORM[5 if scenario == 7 else scenario]
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    u = rng.random((J, 4))
    return np.where(active_alphas(scenario, J), lo + (hi - lo) * u, 0.0)


def gen_dataset(config: ScenarioConfig, rep: int = 0) -> tuple[Dataset, GeneratedTruth]:
    alphas = draw_alphas(config.scenario_id, config.J, stream(config.seed, rep, ALPHA))
    truth = GeneratedTruth(config, alphas)
    sizes = site_sizes(config.n_total, config.site_fractions)
    xs, a_all, t_all, d_all, s_all = [], [], [], [], []
    for j, m in enumerate(sizes, start=1):
        rng = stream(config.seed, rep, SITE, j)
        x = gen_covariates(j, m, rng)
        pi = expit(alphas[j - 1, 0] + x @ alphas[j - 1, 1:])
        a = (rng.random(m) < pi).astype(int)
        eps = rng.standard_normal(m)
        logy = truth.treatment_free(x) + a * truth.blip(x) + eps
        delta = np.ones(m, dtype=int)
        if config.censored:
            p_cens = np.full(m, 0.3) if j % 2 == 1 else expit(0.1 + 0.6 * x[:, 0])
            delta = (rng.random(m) >= p_cens).astype(int)
        xs.append(x)
        a_all.append(a)
        t_all.append(np.exp(logy))
        d_all.append(delta)
        s_all.append(np.full(m, j))
    n = int(sizes.sum())
    ds = Dataset(COVARIATES, np.arange(1, n + 1), np.concatenate(s_all), np.vstack(xs),
                 np.concatenate(a_all), np.concatenate(t_all), np.concatenate(d_all))
    return ds, truth


def true_optimal_action(x2, effect_size: str = "small"):
    psi0, psi1 = EFFECTS[effect_size]
    d = (psi0 + psi1 * np.asarray(x2, dtype=float) > 0).astype(int)
    return int(d) if np.ndim(d) == 0 else d


def known_confounders(scenario: int, site: int) -> tuple[str, ...]:
    """Covariates that truly drive treatment at ``site``."""
    mask = active_alphas(scenario)[site - 1, 1:]
    return tuple(v for v, on in zip(COVARIATES, mask) if on)


def known_censoring_predictors(scenario: int, site: int) -> tuple[str, ...]:
    if scenario == 7 and site % 2 == 0:
        return ("x1",)
    return ()
