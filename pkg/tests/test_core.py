import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedwsurv.core import (Dataset, FeatureExpr, ModelSpec, SchemaError, SubjectRecord,
                           build_design, expand_features, features)
from conftest import random_dataset

TINY = Dataset(("x1", "x2"), [1, 2, 3], [1, 1, 2], [[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]],
               [1, 0, 1], [2.0, 3.0, 4.0], [1, 1, 0])


def test_design_hand_example():
    spec = ModelSpec(features("1", "x1", "x1*x2"), features("1", "x2"))
    d = build_design(TINY, spec)
    expected = np.array([[1, 1, 2, 1, 2],
                         [1, 0, 0, 0, 0],
                         [1, 3, 1.5, 1, 0.5]], dtype=float)
    np.testing.assert_array_equal(d.X, expected)
    assert spec.column_names == ["1", "x1", "x1*x2", "a:1", "a:x2"]


def test_sin_feature():
    col = expand_features(TINY, features("sin(x2)"))[:, 0]
    np.testing.assert_allclose(col, np.sin([2.0, -1.0, 0.5]), rtol=0, atol=0)


@given(st.integers(0, 2**32 - 1))
def test_blip_block_zero_when_untreated(seed):
    ds = random_dataset(np.random.default_rng(seed), n=30)
    spec = ModelSpec(features("1", "x1", "x2"), features("1", "x1"))
    d = build_design(ds, spec)
    assert np.all(d.X[ds.a == 0, spec.pf:] == 0)
    np.testing.assert_array_equal(d.X[ds.a == 1, spec.pf:], d.Xg[ds.a == 1])


@given(st.integers(0, 2**32 - 1))
def test_design_is_pure_and_rowwise(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=25)
    spec = ModelSpec(features("1", "x1", "sin(x2)", "x1*x3"), features("1", "x2"))
    first = build_design(ds, spec).X
    np.testing.assert_array_equal(first, build_design(ds, spec).X)
    perm = rng.permutation(ds.n)
    shuffled = build_design(ds.subset(perm), spec).X
    np.testing.assert_array_equal(shuffled, first[perm])


def test_records_round_trip():
    again = Dataset.from_records(TINY.records, TINY.covariate_names)
    for key in ("id", "site", "x", "a", "time", "delta"):
        np.testing.assert_array_equal(getattr(again, key), getattr(TINY, key))


def test_arrays_are_read_only():
    with pytest.raises(ValueError):
        TINY.x[0, 0] = 5.0


@pytest.mark.parametrize("field,value", [("time", [1.0, 0.0, 2.0]), ("a", [0, 2, 1]),
                                         ("delta", [1, 1, -1])])
def test_invalid_columns_rejected(field, value):
    kwargs = dict(covariate_names=("x1",), id=[1, 2, 3], site=[1, 1, 1], x=[[0.0], [1.0], [2.0]],
                  a=[0, 1, 1], time=[1.0, 2.0, 3.0], delta=[1, 1, 1])
    kwargs[field] = value
    with pytest.raises(SchemaError):
        Dataset(**kwargs)


def test_subject_record_validation():
    with pytest.raises(SchemaError):
        SubjectRecord(1, 1, (0.0,), 1, -2.0, 1)


def test_reserved_treatment_name():
    with pytest.raises(SchemaError, match="reserved"):
        Dataset(("a",), [1], [1], [[0.0]], [0], [1.0], [1])


def test_feature_parsing():
    assert FeatureExpr.parse("x1 * x3") == FeatureExpr("prod", ("x1", "x3"))
    assert str(FeatureExpr.parse("sin( x2 )")) == "sin(x2)"
    assert FeatureExpr.parse("1").variables == ()
    with pytest.raises(SchemaError):
        FeatureExpr.parse("x1 + x2")


def test_spec_rules():
    with pytest.raises(SchemaError, match="intercept"):
        ModelSpec(features("1", "x1"), features("x1"))
    with pytest.raises(SchemaError, match="x2"):
        ModelSpec(features("1", "x1"), features("1", "x2"))
    with pytest.raises(SchemaError, match="unknown covariate"):
        ModelSpec(features("1", "x9"), features("1")).validate_against(TINY)


def test_spec_text_round_trip():
    spec = ModelSpec(features("1", "x1", "sin(x2)", "x1*x2"), features("1", "x2"),
                     features("1", "x1"), features("1", "x2"))
    again = ModelSpec.from_text(spec.to_text())
    assert again == spec
    assert again.spec_hash == spec.spec_hash


def test_spec_hash_ignores_nuisance_models():
    a = ModelSpec(features("1", "x1"), features("1"), features("1", "x1"))
    b = ModelSpec(features("1", "x1"), features("1"))
    c = ModelSpec(features("1", "x1", "x2"), features("1"))
    assert a.spec_hash == b.spec_hash != c.spec_hash
