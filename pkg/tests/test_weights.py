import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedwsurv.core import PositivityError
from fedwsurv.weights import (WeightSpec, balancing_weight, check_balancing, compute_weights,
                              estimate_nuisances)
from conftest import random_dataset

probs = st.floats(0.01, 0.99)


def test_overlap_and_ipt_examples():
    pi = np.array([0.2, 0.2, 0.75])
    phi = np.array([0.5, 1.0, 0.8])
    a = np.array([1, 0, 1])
    np.testing.assert_allclose(compute_weights(pi, phi, a).w, [1.6, 0.2, 0.3125], rtol=1e-15)
    np.testing.assert_allclose(compute_weights(pi, phi, a, WeightSpec("ipt")).w,
                               [10.0, 1.25, 5.0 / 3.0], rtol=1e-15)


@given(probs, probs, probs)
def test_balancing_identity(pi, phi0, phi1):
    for kind, target in (("overlap", pi * (1 - pi)), ("ipt", 1.0)):
        chk = check_balancing(pi, phi0, phi1, balancing_weight(kind))
        assert chk.spread < 1e-12
        np.testing.assert_allclose(chk.products, target, rtol=1e-12)


def test_balancing_negative_control():
    # dropping the censoring factor breaks the identity when phi0 != phi1
    chk = check_balancing(0.3, 0.4, 0.9, lambda d, a, pi, phi: np.abs(a - pi))
    assert chk.spread > 0.1


def test_truncation_clips():
    w = compute_weights(np.array([0.001, 0.999]), np.array([0.01, 1.0]), np.array([0, 0]),
                        WeightSpec("ipt", truncation=0.05))
    np.testing.assert_allclose(w.pi, [0.05, 0.95])
    np.testing.assert_allclose(w.phi, [0.05, 1.0])
    with pytest.raises(ValueError):
        WeightSpec(truncation=0.6)


def test_zero_observation_probability():
    with pytest.raises(PositivityError):
        compute_weights(np.array([0.5]), np.array([0.0]), np.array([1]))


def test_ipt_at_boundary():
    with pytest.raises(PositivityError):
        compute_weights(np.array([1.0]), np.array([1.0]), np.array([0]), WeightSpec("ipt"))


def test_no_censoring_gives_unit_phi(rng):
    nf = estimate_nuisances(random_dataset(rng), ("1", "x1"), ("1", "x1"))
    assert np.all(nf.phi == 1.0)
    assert nf.censoring is None


def test_censoring_model_fit(rng):
    ds = random_dataset(rng, n=4000, censor=0.3)
    nf = estimate_nuisances(ds, ("1",), ("1",))
    assert nf.phi[0] == pytest.approx(ds.delta.mean(), abs=1e-10)
    assert nf.pi[0] == pytest.approx(ds.a.mean(), abs=1e-10)
