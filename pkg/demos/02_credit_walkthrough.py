# End-to-end on a small mixed-type credit dataset.
#
# Train a depth-5 tree, explain one rejected applicant, then score a batch
# of explanations with the three evaluation metrics.

import numpy as np

from pertinent.encoding import EncodedSpace
from pertinent.explainer import explain, explain_many, feature_importance
from pertinent.metrics import evaluate
from pertinent.models import train_cart
from pertinent.schema import complete_schema
from pertinent.solver import SolverConfig
from pertinent.synthetic import make_credit, train_test_split

# %% data, bases and model
schema, ds = make_credit(500, seed=0)
schema = complete_schema(ds, schema)          # medians / modes become base values
train_idx, test_idx = train_test_split(len(ds), 0.75, seed=0)
train = ds.subset(train_idx)
model = train_cart(train, schema, max_depth=5)
space = EncodedSpace.fit(train, schema)       # frequency codes from training rows only

print("base values:", {f.name: f.base for f in schema.features})
test = ds.subset(test_idx)
acc = np.mean(model.predict(test.rows) == test.label_indices(schema))
print(f"tree depth {model.depth()}, test accuracy {acc:.3f}")

# %% one rejected applicant
cfg = SolverConfig(seed=0)
rejected = next(ds.rows[i] for i in test_idx if model.predict([ds.rows[i]])[0] == 0)
e = explain(rejected, model, space, cfg)
print("\ninput:", rejected, "->", e.t0)
if e.pp:
    print("pertinent positive (what suffices for this decision):", e.pp.record)
if e.pn:
    print("pertinent negative (what would flip it):             ", e.pn.record, "->", e.pn.predicted)
pp_rank, pn_rank = feature_importance(e, schema)
print("PP ranking:", [n for n, v in pp_rank if v > 0])
print("PN ranking:", [n for n, v in pn_rank if v > 0] if pn_rank else None)
print("queries used:", e.diagnostics["queries_used"])

# %% metrics over a batch
rows = [ds.rows[i] for i in test_idx[:25]]
expls = explain_many(rows, model, space, cfg, ids=test_idx[:25])
report = evaluate(expls, model, schema, train, space)
print()
print(report.to_table())
