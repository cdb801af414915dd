import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pertinent.encoding import (
    EncodedSpace, FmaFeature, FmaMap, SimplexEncoding, SimplexSpace, fma_decode, fma_fit,
    simplex_project, ssa_evaluate,
)
from pertinent.schema import CATEGORICAL, REAL, Dataset, FeatureSpec, Schema

from conftest import mixed_schema


def abc_map(counts=(11, 6, 1)):
    return FmaMap({"c": FmaFeature("c", ("A", "B", "C"), counts)})


def test_eleven_six_one_codes_exact():
    f = abc_map()["c"]
    assert [f.code(v) for v in "ABC"] == [0.0, 0.5, 1.0]


def test_fit_counts_absent_values_as_one():
    schema = Schema(features=(FeatureSpec("c", CATEGORICAL, values=("A", "B", "C")),), classes=("0", "1"))
    ds = Dataset(tuple([("A",)] * 7))
    f = fma_fit(ds, schema)["c"]
    assert f.counts == (7, 1, 1)
    assert f.code("A") == 0.0 and f.code("B") == 1.0


def test_single_value_maps_to_zero():
    f = FmaFeature("c", ("A",), (7,))
    assert f.code("A") == 0.0 and f.decode(0.9) == "A"


def test_tied_counts_share_code_and_decode_first():
    f = FmaFeature("c", ("A", "B"), (3, 3))
    assert f.code("A") == f.code("B") == 0.0
    assert {f.decode(x) for x in np.linspace(0, 1, 11)} == {"A"}


def test_all_counts_one():
    f = FmaFeature("c", ("A", "B"), (1, 1))
    assert f.code("A") == f.code("B") == 0.0


@pytest.mark.parametrize("x, value", [(0.2, "A"), (0.25, "A"), (0.9, "C"), (0.75, "B"), (0.7500001, "C"),
                                      (-3.0, "A"), (7.0, "C")])
def test_decode_examples(x, value):
    assert fma_decode(x, abc_map(), "c") == value


def test_decode_nonfinite():
    with pytest.raises(ValueError):
        fma_decode(float("nan"), abc_map(), "c")


def test_monotone_in_counts():
    f = FmaFeature("c", tuple("ABCDE"), (9, 4, 7, 1, 2))
    for i in range(5):
        for j in range(5):
            if f.counts[i] > f.counts[j]:
                assert f.codes[i] < f.codes[j]


def test_breakpoints_at_midpoints():
    f = FmaFeature("c", tuple("ABCD"), (10, 7, 3, 1))
    r = np.sort(f.codes)
    assert np.allclose(f.breakpoints, (r[1:] + r[:-1]) / 2)
    # brute-force step function: nearest code, lower code on exact ties
    for x in np.linspace(0, 1, 2001):
        dist = np.abs(f.codes - x)
        best = [v for v, dd in zip(f.values, dist) if dd == dist.min()]
        want = min(best, key=lambda v: f.code(v))
        assert f.decode(x) == want


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=8, unique=True))
def test_distinct_counts_round_trip(counts):
    values = tuple(f"v{i}" for i in range(len(counts)))
    f = FmaFeature("c", values, tuple(counts))
    for v in values:
        assert f.decode(f.code(v)) == v


def test_map_json_round_trip():
    m = abc_map((5, 2, 9))
    back = FmaMap.from_dict(abc_map((5, 2, 9)).to_dict())
    assert back["c"].codes.tolist() == m["c"].codes.tolist()


# --------------------------------------------------------------------------- encoded space


def test_encode_decode_mixed():
    schema = mixed_schema()
    fmap = FmaMap({"c": FmaFeature("c", ("X", "Y", "Z"), (5, 3, 1))})
    space = EncodedSpace(schema, fmap)
    x = space.encode((7.0, "Y"))
    assert x.tolist() == [0.7, 0.5]
    assert space.decode(x) == (7.0, "Y")
    assert space.base.tolist() == [0.5, 0.0]


def test_round_trip_training_records(credit):
    space, ds = credit["space"], credit["train"]
    X = space.encode_many(ds.rows)
    back = space.decode_many(X)
    for a, b in zip(back, ds.rows):
        assert a[3:] == b[3:]
        assert np.allclose(a[:3], b[:3], rtol=0, atol=1e-9)


def test_degenerate_range():
    schema = Schema(features=(FeatureSpec("a", REAL, range=(3.0, 3.0), base=3.0, std=0.0),), classes=("0", "1"))
    space = EncodedSpace(schema, FmaMap({}))
    assert space.encode((3.0,)).tolist() == [0.0]
    assert space.decode(np.array([0.0])) == (3.0,)


def test_encode_nonfinite():
    space = EncodedSpace(mixed_schema(), FmaMap({"c": FmaFeature("c", ("X", "Y", "Z"), (5, 3, 1))}))
    with pytest.raises(ValueError):
        space.encode((float("inf"), "X"))
    with pytest.raises(ValueError):
        space.decode(np.array([np.nan, 0.0]))


# --------------------------------------------------------------------------- simplex


def test_simplex_examples():
    assert simplex_project(np.array([2.0, 0.0])).tolist() == [1.0, 0.0]
    assert np.allclose(simplex_project(np.array([0.6, 0.6, 0.0])), [0.5, 0.5, 0.0])
    v = np.array([0.2, 0.3, 0.5])
    assert np.allclose(simplex_project(v), v)


def _kkt_oracle(v):
    """Projection by bisection on the threshold (independent of the sort algorithm)."""
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        mid = (lo + hi) / 2
        if np.maximum(v - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - (lo + hi) / 2, 0)


vecs = arrays(np.float64, st.integers(1, 8), elements=st.floats(-5, 5, allow_subnormal=False))


@settings(max_examples=200, deadline=None)
@given(vecs)
def test_simplex_matches_bisection_and_is_idempotent(v):
    p = simplex_project(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(p, _kkt_oracle(v), atol=1e-9)
    assert np.allclose(simplex_project(p), p, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-5, 5, allow_subnormal=False)),
    arrays(np.float64, n, elements=st.floats(-5, 5, allow_subnormal=False)))))
def test_simplex_nonexpansive(pair):
    u, v = pair
    assert np.linalg.norm(simplex_project(u) - simplex_project(v)) <= np.linalg.norm(u - v) + 1e-9


def _cat_scores(records):
    # score depends only on the categorical cell
    table = {"X": [0.0, 1.0], "Y": [1.0, 0.0], "Z": [0.5, 0.5]}
    return np.array([table[r[1]] for r in records])


def test_ssa_corner_equals_direct():
    enc = SimplexEncoding((1,), (("X", "Y", "Z"),), [np.array([0.0, 1.0, 0.0])])
    out = ssa_evaluate(_cat_scores, enc, (3.0, "X"), 7, np.random.default_rng(0))
    assert out.tolist() == _cat_scores([(3.0, "Y")])[0].tolist()


def test_ssa_expectation():
    enc = SimplexEncoding((1,), (("X", "Y", "Z"),), [np.array([0.5, 0.5, 0.0])])
    n = 10000
    out = ssa_evaluate(_cat_scores, enc, (3.0, "X"), n, np.random.default_rng(1))
    # each component is a Bernoulli(0.5) mean: standard error 0.5/sqrt(n)
    assert abs(out[0] - 0.5) < 3 * 0.5 / np.sqrt(n)


def test_ssa_seed_determinism():
    enc = SimplexEncoding((1,), (("X", "Y", "Z"),), [np.array([0.2, 0.3, 0.5])])
    a = ssa_evaluate(_cat_scores, enc, (3.0, "X"), 50, np.random.default_rng(5))
    b = ssa_evaluate(_cat_scores, enc, (3.0, "X"), 50, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_simplex_encoding_validates():
    with pytest.raises(ValueError):
        SimplexEncoding((1,), (("X", "Y"),), [np.array([0.7, 0.7])])


def test_simplex_space_layout_and_round_trip():
    space = SimplexSpace(mixed_schema())
    x = space.encode((7.0, "Z"))
    assert x.tolist() == [0.7, 0.0, 0.0, 1.0]
    assert space.decode(x) == (7.0, "Z")
    assert space.blocks == ((1, slice(1, 4)),)
    snapped = space.snap(np.array([0.3, 0.2, 0.5, 0.3]))
    assert snapped.tolist() == [0.3, 0.0, 1.0, 0.0]
