import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pertinent.encoding import EncodedSpace, FmaFeature, FmaMap
from pertinent.explainer import (
    Explanation, compute_importances, explain, explain_many, feature_importance,
)
from pertinent.models import CallableModel
from pertinent.schema import REAL, FeatureSpec, Schema, SchemaError
from pertinent.solver import PN, PP, SolverConfig

from conftest import mixed_schema, threshold_model, threshold_schema

FAST = SolverConfig(iterations=30, restarts=1, c_rounds=3)


def two_real_schema(std=(1.0, 2.0)):
    return Schema(features=(FeatureSpec("f0", REAL, range=(-10, 10), base=0.0, std=std[0]),
                            FeatureSpec("f1", REAL, range=(-10, 10), base=0.0, std=std[1])),
                  classes=("a", "b"))


def test_importance_formula():
    schema = two_real_schema()
    imp = compute_importances(PP, (1.0, 1.0), (3.0, 3.0), schema, FmaMap({}))
    assert imp == [1.0, 0.5]
    expl = Explanation(input=(3.0, 3.0), t0="a", pp=None, pn=None)
    from pertinent.explainer import Part
    expl.pp = Part((1.0, 1.0), [-2.0, -2.0], imp, "a", 0, 0, 0)
    pp_rank, pn_rank = feature_importance(expl, schema)
    assert [n for n, _ in pp_rank] == ["f0", "f1"] and pn_rank is None


def test_importance_zero_at_base_and_pn_uses_change():
    schema = two_real_schema()
    assert compute_importances(PP, (0.0, 0.0), (3.0, 3.0), schema, FmaMap({})) == [0.0, 0.0]
    assert compute_importances(PN, (5.0, 3.0), (3.0, 3.0), schema, FmaMap({})) == [2.0, 0.0]


def test_categorical_importance_uses_codes():
    schema = mixed_schema()
    fmap = FmaMap({"c": FmaFeature("c", ("X", "Y", "Z"), (5, 3, 1))})
    imp = compute_importances(PP, (5.0, "Y"), (5.0, "Y"), schema, fmap)
    assert imp == [0.0, pytest.approx(0.5 / 0.4)]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.01, 100))
def test_unit_scaling_keeps_ranking(pp, scale):
    a = compute_importances(PP, tuple(pp), (0.0, 0.0), two_real_schema((1.0, 2.0)), FmaMap({}))
    # feature 0 expressed in units `scale` times smaller
    s2 = Schema(features=(FeatureSpec("f0", REAL, range=(-10 * scale, 10 * scale), base=0.0, std=scale),
                          FeatureSpec("f1", REAL, range=(-10, 10), base=0.0, std=2.0)), classes=("a", "b"))
    b = compute_importances(PP, (pp[0] * scale, pp[1]), (0.0, 0.0), s2, FmaMap({}))
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_constant_classifier_explanation():
    schema = mixed_schema()
    space = EncodedSpace(schema, FmaMap({"c": FmaFeature("c", ("X", "Y", "Z"), (5, 3, 1))}))
    model = CallableModel(schema, lambda recs: [[0.2, 0.8]] * len(recs))
    e = explain((9.0, "Y"), model, space, SolverConfig(restarts=0, c_rounds=1))
    assert e.pp.record == (5.0, "X")
    assert e.pn is None
    assert e.diagnostics["pn"]["valid"] is False and e.diagnostics["pn"]["reason"]


def test_one_d_threshold_explanation():
    space = EncodedSpace(threshold_schema(), FmaMap({}))
    e = explain((7.0,), threshold_model(), space, SolverConfig(seed=1))
    assert e.t0 == "hi"
    assert abs(e.pp.record[0] - 5.0) <= 0.25
    assert abs(e.pn.record[0] - 1.0) <= 0.25


def test_json_round_trip_and_version(credit):
    x0 = credit["ds"].rows[credit["test_idx"][0]]
    e = explain(x0, credit["model"], credit["space"], FAST)
    back = Explanation.from_json(e.to_json())
    assert back.to_json() == e.to_json()
    d = json.loads(e.to_json())
    d["version"] = 99
    with pytest.raises(SchemaError):
        Explanation.from_dict(d)


def test_determinism_and_pp_feasibility(credit):
    space, model = credit["space"], credit["model"]
    rows = [credit["ds"].rows[i] for i in credit["test_idx"][:5]]
    a = explain_many(rows, model, space, FAST, jobs=1)
    b = explain_many(rows, model, space, FAST, jobs=3)
    assert [e.to_json() for e in a] == [e.to_json() for e in b]
    for x0, e in zip(rows, a):
        if e.pp is not None:
            dev = np.abs(space.encode(e.pp.record) - space.base)
            assert np.all(dev <= np.abs(space.encode(x0) - space.base) + 1e-9)
            assert int(np.argmax(model.predict_scores([e.pp.record])[0])) == credit["schema"].class_index(e.t0)
        if e.pn is not None:
            assert e.pn.predicted != e.t0


def test_sparsity_does_not_grow_with_beta():
    """With c = 0 the positive is pulled to the base; more L1 weight never adds nonzeros."""
    schema = two_real_schema()
    space = EncodedSpace(schema, FmaMap({}))
    model = CallableModel(schema, lambda recs: [[0.9, 0.1]] * len(recs))
    counts = []
    for beta in (0.0, 0.1, 1.0, 5.0):
        e = explain((4.0, -7.0), model, space, SolverConfig(c=0.0, beta=beta, iterations=100, restarts=0,
                                                             c_rounds=1))
        counts.append(int(np.sum(np.abs(space.encode(e.pp.record) - space.base) > 1e-9)))
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_invalid_record_rejected(credit):
    with pytest.raises(SchemaError):
        explain(("x",) * 6, credit["model"], credit["space"], FAST)
