import numpy as np
import pytest

from pertinent.encoding import EncodedSpace
from pertinent.models import CallableModel, train_cart
from pertinent.schema import CATEGORICAL, REAL, FeatureSpec, Schema, complete_schema
from pertinent.synthetic import make_credit, train_test_split


@pytest.fixture(scope="session")
def credit():
    """Synthetic 500-row credit data, its completed schema, the train/test split and a depth-5 CART."""
    schema, ds = make_credit(500, seed=0)
    schema = complete_schema(ds, schema)
    train_idx, test_idx = train_test_split(len(ds), 0.75, seed=0)
    train = ds.subset(train_idx)
    model = train_cart(train, schema, max_depth=5)
    space = EncodedSpace.fit(train, schema)
    return {"schema": schema, "ds": ds, "train": train, "test_idx": test_idx,
            "model": model, "space": space}


def threshold_schema() -> Schema:
    return Schema(features=(FeatureSpec("x", REAL, range=(0.0, 10.0), base=4.0, std=1.0),),
                  target="y", classes=("lo", "hi"))


def threshold_model(schema=None, piecewise_constant=True):
    """Class 1 iff x >= 5, with confident probabilities."""
    schema = schema or threshold_schema()

    def fn(records):
        x = np.array([r[0] for r in records], dtype=float)
        p = np.where(x >= 5, 0.99, 0.01)
        return np.column_stack([1 - p, p])

    return CallableModel(schema, fn, piecewise_constant=piecewise_constant)


def mixed_schema() -> Schema:
    return Schema(
        features=(FeatureSpec("a", REAL, range=(0.0, 10.0), base=5.0, std=2.0),
                  FeatureSpec("c", CATEGORICAL, values=("X", "Y", "Z"), base="X", std=0.4)),
        target="t", classes=("n", "p"),
    )
