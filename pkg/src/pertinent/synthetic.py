"""Small synthetic credit-style dataset with mixed feature types.

Used by the demos and the test-suite; nothing here is tuned to any
published dataset.
"""

from __future__ import annotations

import numpy as np

from .schema import CATEGORICAL, REAL, Dataset, FeatureSpec, Schema

HOUSING = ("own", "rent", "free")
PURPOSE = ("car", "furniture", "education", "business")
EMPLOYMENT = ("employed", "self", "unemployed")


def credit_schema() -> Schema:
    return Schema(
        features=(
            FeatureSpec("income", REAL),
            FeatureSpec("debt", REAL),
            FeatureSpec("age", REAL),
            FeatureSpec("housing", CATEGORICAL, values=HOUSING),
            FeatureSpec("purpose", CATEGORICAL, values=PURPOSE),
            FeatureSpec("employment", CATEGORICAL, values=EMPLOYMENT),
        ),
        target="approved",
        classes=("no", "yes"),
    )


def make_credit(n: int = 500, seed: int = 0) -> tuple[Schema, Dataset]:
    """``n`` applicants with 3 real and 3 categorical features and a noisy approval label."""
    rng = np.random.default_rng(seed)
    income = np.round(rng.gamma(4.0, 12.0, n), 1)
    debt = np.round(rng.gamma(2.0, 8.0, n), 1)
    age = np.round(rng.uniform(19, 75, n))
    housing = rng.choice(len(HOUSING), n, p=[0.6, 0.3, 0.1])
    purpose = rng.choice(len(PURPOSE), n, p=[0.4, 0.3, 0.2, 0.1])
    employment = rng.choice(len(EMPLOYMENT), n, p=[0.7, 0.2, 0.1])

    score = (
        0.06 * (income - 48)
        - 0.09 * (debt - 16)
        + 0.02 * (age - 45)
        + np.array([0.5, -0.3, -0.6])[housing]
        + np.array([0.2, 0.0, 0.3, -0.5])[purpose]
        + np.array([0.6, 0.0, -1.5])[employment]
    )
    label = score + rng.normal(0, 0.4, n) > 0
    rows = [
        (float(income[i]), float(debt[i]), float(age[i]), HOUSING[housing[i]],
         PURPOSE[purpose[i]], EMPLOYMENT[employment[i]])
        for i in range(n)
    ]
    labels = ["yes" if v else "no" for v in label]
    return credit_schema(), Dataset(tuple(rows), tuple(labels))


def train_test_split(n: int, train_fraction: float = 0.75, seed: int = 0):
    """Shuffled index split; returns sorted ``(train, test)`` index lists."""
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    return sorted(perm[:cut].tolist()), sorted(perm[cut:].tolist())
