import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pertinent.schema import (
    CATEGORICAL, REAL, DataError, Dataset, FeatureSpec, Schema, SchemaError, complete_schema,
    estimate_base_values, feature_stats, ingest_csv, serialize_csv,
)


def ac_schema(**kw):
    return Schema(features=(FeatureSpec("a", REAL, range=(0, 10)),
                            FeatureSpec("c", CATEGORICAL, values=("X", "Y"))),
                  target="t", classes=("0", "1"), **kw)


def test_ingest_two_rows():
    ds = ingest_csv(b"a,c,t\n1.5,X,0\n7,Y,1\n", ac_schema())
    assert ds.rows == ((1.5, "X"), (7.0, "Y"))
    assert ds.labels == ("0", "1")


def test_ingest_any_column_order_and_optional_target():
    ds = ingest_csv("c,a\nY,3\n", ac_schema())
    assert ds.rows == ((3.0, "Y"),)
    assert ds.labels is None


def test_unknown_categorical_names_row_and_feature():
    with pytest.raises(DataError) as err:
        ingest_csv(b"a,c\n1,X\n2,Z\n", ac_schema())
    assert err.value.row == 1
    assert err.value.feature == "c"


@pytest.mark.parametrize("text, fragment", [
    ("a\n1\n", "missing column"),
    ("a,c,zz\n1,X,3\n", "unexpected column"),
    ("a,c\nnan,X\n", "non-finite"),
    ("a,c\ninf,X\n", "non-finite"),
    ("a,c\n,X\n", "missing value"),
    ("a,c\n1\n", "expected 2 cells"),
    ("a,c\nabc,X\n", "not a number"),
    ("", "empty CSV"),
])
def test_ingest_rejects(text, fragment):
    with pytest.raises(DataError, match=fragment):
        ingest_csv(text, ac_schema())


def test_substitute_map_applies_to_reals_before_statistics():
    schema = Schema(features=(FeatureSpec("a", REAL),), classes=("0", "1"),
                    substitute={-9.0: 0.0, -7.0: 0.0})
    ds = ingest_csv("a\n-9\n-7\n4\n5\n6\n", schema)
    assert ds.column(0) == [0.0, 0.0, 4.0, 5.0, 6.0]
    assert estimate_base_values(ds, schema).features[0].base == 4.0
    assert Schema.from_json(schema.to_json()).substitute == {-9.0: 0.0, -7.0: 0.0}


def test_german_credit_shaped_file():
    rng = np.random.default_rng(0)
    feats = [FeatureSpec(f"r{i}", REAL) for i in range(7)]
    feats += [FeatureSpec(f"c{i}", CATEGORICAL, values=("A", "B", "C")) for i in range(13)]
    schema = Schema(features=tuple(feats), target="y", classes=("good", "bad"))
    rows = [tuple(float(v) for v in rng.integers(0, 100, 7)) + tuple(rng.choice(["A", "B", "C"], 13))
            for _ in range(1000)]
    labels = tuple(rng.choice(["good", "bad"], 1000))
    ds = ingest_csv(serialize_csv(Dataset(tuple(rows), labels), schema), schema)
    assert len(ds) == 1000 and schema.d == 20


def test_median_is_robust_and_mode_is_first_on_ties():
    schema = ac_schema()
    ds = Dataset(((1.0, "Y"), (2.0, "X"), (100.0, "Y"), (3.0, "X")))
    out = estimate_base_values(ds, schema)
    # even count: mean of the middle pair (2, 3); X and Y tie, X is declared first
    assert out.features[0].base == 2.5
    assert out.features[1].base == "X"
    ds3 = Dataset(((1.0, "X"), (2.0, "X"), (100.0, "Y")))
    out3 = estimate_base_values(ds3, schema)
    assert out3.features[0].base == 2.0 and out3.features[1].base == "X"


def test_mode_of_eleven_six_one_counts():
    schema = Schema(features=(FeatureSpec("c", CATEGORICAL, values=("A", "B", "C")),), classes=("0", "1"))
    ds = Dataset(tuple([("C",)] + [("B",)] * 6 + [("A",)] * 11))
    assert estimate_base_values(ds, schema).features[0].base == "A"


def test_user_bases_preserved():
    schema = Schema(features=(FeatureSpec("a", REAL, base=9.0), FeatureSpec("c", CATEGORICAL, values=("X", "Y"), base="Y")),
                    classes=("0", "1"))
    ds = Dataset(((1.0, "X"), (2.0, "X"), (3.0, "X")))
    out = complete_schema(ds, schema)
    assert out.features[0].base == 9.0 and out.features[1].base == "Y"


def test_empty_dataset_rejected():
    with pytest.raises(SchemaError):
        estimate_base_values(Dataset(()), ac_schema())
    with pytest.raises(SchemaError):
        feature_stats(Dataset(()), ac_schema())


@pytest.mark.parametrize("col, rng, std", [
    ([0.0, 10.0], (0.0, 10.0), 5.0),
    ([3.0, 3.0, 3.0], (3.0, 3.0), 0.0),
    ([1.0, 2.0, 3.0, 4.0], (1.0, 4.0), math.sqrt(1.25)),
])
def test_feature_stats(col, rng, std):
    schema = Schema(features=(FeatureSpec("a", REAL),), classes=("0", "1"))
    out = feature_stats(Dataset(tuple((v,) for v in col)), schema).features[0]
    assert out.range == rng
    assert out.std == pytest.approx(std, abs=1e-12)


def test_user_range_kept_by_feature_stats():
    schema = Schema(features=(FeatureSpec("a", REAL, range=(-5, 50)),), classes=("0", "1"))
    assert feature_stats(Dataset(((1.0,), (2.0,))), schema).features[0].range == (-5.0, 50.0)


def test_categorical_std_is_std_of_codes():
    schema = Schema(features=(FeatureSpec("c", CATEGORICAL, values=("A", "B", "C")),), classes=("0", "1"))
    col = ["A"] * 11 + ["B"] * 6 + ["C"]
    codes = [0.0] * 11 + [0.5] * 6 + [1.0]
    out = feature_stats(Dataset(tuple((v,) for v in col)), schema).features[0]
    assert out.std == pytest.approx(float(np.std(codes)), abs=1e-12)


@pytest.mark.parametrize("kw", [
    dict(name="a", kind="real", range=(5, 1)),
    dict(name="a", kind="real", range=(0, 1), base=3),
    dict(name="c", kind="categorical", values=()),
    dict(name="c", kind="categorical", values=("X", "X")),
    dict(name="c", kind="categorical", values=("X",), base="Q"),
    dict(name="a", kind="real", std=-1),
    dict(name="a", kind="ordinal"),
])
def test_feature_spec_invariants(kw):
    with pytest.raises(SchemaError):
        FeatureSpec(**kw)


def test_schema_json_round_trip():
    schema = ac_schema(substitute={-8.0: 0.0})
    assert Schema.from_json(schema.to_json()) == schema


def test_permutation_invariance_of_bases():
    rng = np.random.default_rng(3)
    schema = ac_schema()
    rows = [(float(rng.integers(0, 10)), str(rng.choice(["X", "Y"]))) for _ in range(41)]
    a = estimate_base_values(Dataset(tuple(rows)), schema)
    b = estimate_base_values(Dataset(tuple(rows[::-1])), schema)
    assert a == b


cells = st.tuples(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False), st.sampled_from(["X", "Y"]))


@settings(max_examples=60, deadline=None)
@given(st.lists(cells, min_size=0, max_size=20), st.booleans())
def test_csv_round_trip(rows, labelled):
    schema = Schema(features=(FeatureSpec("a", REAL), FeatureSpec("c", CATEGORICAL, values=("X", "Y"))),
                    target="t", classes=("0", "1"))
    labels = tuple("1" if c == "Y" else "0" for _, c in rows) if labelled else None
    ds = Dataset(tuple(rows), labels)
    assert ingest_csv(serialize_csv(ds, schema), schema) == ds
