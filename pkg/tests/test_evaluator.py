import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fedwsurv.core import ModelSpec, features
from fedwsurv.dwsurv import FittedRule
from fedwsurv.evaluator import summarize, value_function, weighted_smd
from fedwsurv.simgen import ScenarioConfig, gen_dataset, stream
from fedwsurv.weights import compute_weights, estimate_nuisances

TRUTH = gen_dataset(ScenarioConfig(1, n_total=100, seed=0))[1]
SPEC = ModelSpec(features("1", "x1", "sin(x2)", "x3", "x1*x3"), features("1", "x2"))


def rule(psi):
    return FittedRule(np.zeros(5), np.asarray(psi, float), SPEC, 0, covariate_names=("x1", "x2", "x3"))


def test_true_rule_has_zero_loss():
    assert value_function(rule([0.15, -0.015]), TRUTH, 10_000, stream(0, 1)).dvf == 0.0


def test_never_treat_closed_form():
    # dvf = -E[max(blip, 0)] with blip = 0.015 (10 - x2), mixing the two site types
    def part(mu, sd):
        m = (10 - mu) / sd
        return 0.015 * ((10 - mu) * stats.norm.cdf(m) + sd * stats.norm.pdf(m))
    fr = np.array(ScenarioConfig(1).site_fractions)
    expected = -(fr[0::2].sum() * part(10.0, 1.0) + fr[1::2].sum() * part(8.0, 1.5))
    res = value_function(lambda x: np.zeros(len(x)), TRUTH, 1_000_000, stream(0, 2))
    assert res.dvf == pytest.approx(expected, abs=2e-4)
    assert res.v_est - res.v_true == pytest.approx(res.dvf, abs=1e-12)


@given(st.floats(-1, 1), st.floats(-0.1, 0.1))
def test_dvf_never_positive(psi0, psi1):
    assert value_function(rule([psi0, psi1]), TRUTH, 2000, stream(1, 1)).dvf <= 0.0


def test_summary_example():
    s = summarize(np.array([[0.1, -0.01], [0.2, -0.02]]), [0.15, -0.015], [-0.01, -0.03])
    np.testing.assert_allclose(s.mean, [0.15, -0.015])
    np.testing.assert_allclose(s.relative_bias_pct, [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(s.mse, [0.0025, 0.000025], rtol=1e-12)
    assert s.dvf_mean == pytest.approx(-0.02)
    assert s.sd[0] == pytest.approx(np.sqrt(0.005))
    rows = s.rows("Global All Xs", 1)
    assert rows[0]["param"] == "psi0" and rows[1]["param"] == "psi1"


def test_summary_degenerate_cases():
    s = summarize(np.array([[0.2, 0.0]]), [0.15, 0.0])
    assert s.degenerate and np.isnan(s.sd).all()
    assert np.isnan(s.relative_bias_pct[1])
    assert s.bias[1] == 0.0


def test_smd_examples():
    x = np.array([1.0, 3.0, 2.0, 6.0])
    g = np.array([0, 0, 1, 1])
    # means 2 and 4, variances 1 and 4; weights (3, 1) move group 1 to mean 3, variance 3
    assert weighted_smd(x, g) == pytest.approx(2.0 / np.sqrt(2.5))
    assert weighted_smd(x, g, np.array([1.0, 1.0, 3.0, 1.0])) == pytest.approx(1.0 / np.sqrt(2.0))
    with pytest.raises(ValueError):
        weighted_smd(x, np.zeros(4, int))
    with pytest.raises(ValueError):
        weighted_smd(np.ones(4), g)


def test_overlap_weights_improve_balance():
    ds, _ = gen_dataset(ScenarioConfig(2, n_total=20_000, seed=5))
    nf = estimate_nuisances(ds, features("1", "x1", "x2", "x3"))
    w = compute_weights(nf.pi, nf.phi, ds.a).w
    # overlap weights from a logistic fit balance the fitted covariates exactly
    for k in range(3):
        assert weighted_smd(ds.x[:, k], ds.a, w) < 1e-8 < weighted_smd(ds.x[:, k], ds.a)


def test_realized_outcome_value_is_noisy_but_centred():
    never = lambda x: np.zeros(len(x))
    exact = value_function(never, TRUTH, 200_000, stream(0, 3)).dvf
    noisy = value_function(never, TRUTH, 200_000, stream(0, 3), realized=True).dvf
    # difference of two independent means of 200k unit normals: SD about 0.0032
    assert noisy != exact
    assert abs(noisy - exact) < 0.015
