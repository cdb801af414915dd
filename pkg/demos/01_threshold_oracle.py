# A one-feature model small enough to check by hand.
#
# The classifier says "hi" when x >= 5. The base value is 4 and the input
# is x0 = 7, so a pertinent positive should walk from 7 toward the base and
# stop right where the class would flip (x = 5). A pertinent negative must
# stay at least |7 - 4| = 3 from the base, so its feasible set is
# x <= 1 or x >= 7, and the only way to change the class is x = 1.

import numpy as np

from pertinent.encoding import EncodedSpace, FmaMap
from pertinent.models import CallableModel
from pertinent.schema import REAL, FeatureSpec, Schema
from pertinent.solver import PN, PP, SolverConfig, solve

# %% model and search space
schema = Schema(features=(FeatureSpec("x", REAL, range=(0.0, 10.0), base=4.0, std=1.0),),
                classes=("lo", "hi"))


def proba(records):
    x = np.array([r[0] for r in records])
    p = np.where(x >= 5, 0.99, 0.01)
    return np.column_stack([1 - p, p])


model = CallableModel(schema, proba, piecewise_constant=True)
space = EncodedSpace(schema, FmaMap({}))  # no categoricals, empty frequency map

# %% brute force on a 0.01 grid
grid = np.round(np.arange(0, 10.001, 0.01), 2)
pp_ok = (np.abs(grid - 4) <= 3) & (grid >= 5)
pn_ok = (np.abs(grid - 4) >= 3) & (grid < 5)
print("grid PP:", grid[pp_ok][np.argmin(np.abs(grid[pp_ok] - 4))])
print("grid PN:", grid[pn_ok][np.argmin(np.abs(grid[pn_ok] - 7))])

# %% the query-only solver, several seeds
for seed in range(5):
    cfg = SolverConfig(seed=seed)
    pp = solve(PP, (7.0,), None, model, space, cfg)
    pn = solve(PN, (7.0,), None, model, space, cfg)
    print(f"seed {seed}: PP x={pp.record[0]:.3f} ({pp.queries_used} queries)   "
          f"PN x={pn.record[0]:.3f} ({pn.queries_used} queries)")
