# Explaining a model that lives behind an HTTP endpoint.
#
# A local stub server plays the scoring service. The explainer only ever
# sees the scores it returns, batched into POST /scores requests.

from pertinent.encoding import EncodedSpace
from pertinent.explainer import explain
from pertinent.metrics import evaluate
from pertinent.models import remote_model, train_forest
from pertinent.schema import complete_schema
from pertinent.server import make_stub_server, serve_in_thread
from pertinent.solver import SolverConfig
from pertinent.synthetic import make_credit

schema, ds = make_credit(400, seed=3)
schema = complete_schema(ds, schema)
forest = train_forest(ds, schema, n_trees=25, seed=0)

server = make_stub_server(model=forest)
url = serve_in_thread(server)
print("stub service at", url)

# %% the remote handle knows nothing about trees
remote = remote_model(url, schema, piecewise_constant=True)
space = EncodedSpace.fit(ds, schema)
cfg = SolverConfig(iterations=50, restarts=2, seed=1)
e = explain(ds.rows[5], remote, space, cfg)
print("input", ds.rows[5], "->", e.t0)
print("PN", e.pn.record if e.pn else None)
print(f"{remote.queries} scored records in {server.requests} HTTP requests "
      f"(largest batch {max(server.batch_sizes)})")

# %% metrics: no decision paths over HTTP, so CFIP is reported as unavailable
print(evaluate([e], remote, schema).to_table())

server.shutdown()
server.server_close()
