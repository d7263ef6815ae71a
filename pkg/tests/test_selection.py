import numpy as np
import pytest

from fedwsurv.core import Dataset
from fedwsurv.selection import screen_site, screen_sites
from fedwsurv.simgen import COVARIATES, ScenarioConfig, gen_dataset
from scipy.special import expit


def confounded_site(rng, n=2000, site=1):
    x = rng.normal(size=(n, 3))
    a = (rng.random(n) < expit(1.2 * x[:, 0])).astype(int)
    t = np.exp(0.8 * x[:, 0] + 0.3 * a + rng.normal(size=n))
    return Dataset(("x1", "x2", "x3"), np.arange(1, n + 1), np.full(n, site), x, a, t,
                   np.ones(n, int))


def test_confounder_selected(rng):
    sel = screen_site(confounded_site(rng), ("x1", "x2", "x3"))
    assert "x1" in sel.treatment_vars
    assert sel.censoring_vars == ()  # nothing censored: censoring test skipped
    assert np.isnan(sel.screens[0].p_censoring)
    assert sel.nuisance().treatment == sel.treatment_vars


def test_null_selection_rate():
    # irrelevant x: both tests must reject, so selection happens about alpha^2 of the time
    rng = np.random.default_rng(21)
    alpha, hits, trials = 0.2, 0, 300
    for _ in range(trials):
        n = 150
        x = rng.normal(size=(n, 1))
        ds = Dataset(("x1",), np.arange(1, n + 1), np.ones(n, int), x,
                     (rng.random(n) < 0.5).astype(int), rng.exponential(size=n), np.ones(n, int))
        hits += screen_site(ds, ("x1",), alpha).screens[0].chosen_treatment
    # expected 12 of 300; binomial SD about 3.4
    assert 2 <= hits <= 24


def test_alpha_one_selects_everything(rng):
    sel = screen_site(confounded_site(rng, n=200), ("x1", "x2", "x3"), alpha=1.0)
    assert sel.treatment_vars == ("x1", "x2", "x3")


def test_selection_monotone_in_alpha(rng):
    ds = confounded_site(rng, n=300)
    previous = set()
    for alpha in (0.001, 0.01, 0.05, 0.2, 0.5, 1.0):
        chosen = set(screen_site(ds, ("x1", "x2", "x3"), alpha).treatment_vars)
        assert previous <= chosen
        previous = chosen


def test_scenario_6_treatment_test_finds_site_confounder():
    ds, _ = gen_dataset(ScenarioConfig(6, n_total=19231, seed=0))
    sel = screen_site(ds.by_site()[9], COVARIATES)
    p = {v.variable: v.p_treatment for v in sel.screens}
    assert p["x3"] < 1e-4


def test_constant_covariate_skipped(rng, caplog):
    ds = confounded_site(rng, n=100)
    x = ds.x.copy()
    x[:, 2] = 1.0
    ds = Dataset(ds.covariate_names, ds.id, ds.site, x, ds.a, ds.time, ds.delta)
    sel = screen_site(ds, ("x1", "x2", "x3"))
    assert not sel.screens[2].chosen_treatment
    assert "constant" in caplog.text


def test_report_csv(rng, tmp_path):
    a, b = confounded_site(rng, 300, 1), confounded_site(rng, 300, 2)
    ds = Dataset(a.covariate_names, np.r_[a.id, b.id + 300], np.r_[a.site, b.site],
                 np.vstack([a.x, b.x]), np.r_[a.a, b.a], np.r_[a.time, b.time],
                 np.r_[a.delta, b.delta])
    report = screen_sites(ds, ("x1", "x2"))
    report.write_csv(tmp_path / "sel.csv")
    lines = (tmp_path / "sel.csv").read_text().splitlines()
    assert lines[0] == "site,variable,p_trt,p_cens,p_out,chosen_trt,chosen_cens"
    assert len(lines) == 5
    assert report.for_site(2).site == 2
    with pytest.raises(KeyError):
        report.for_site(3)
