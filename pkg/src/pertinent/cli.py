"""Command-line front end: ``bases``, ``train``, ``explain``, ``evaluate``, ``serve-stub``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 model or
transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .encoding import EncodedSpace, FmaMap, fma_fit
from .explainer import Explanation, explain
from .metrics import evaluate
from .models import ModelError, TreeModel, remote_model, train_cart, train_forest
from .schema import Schema, SchemaError, complete_schema, ingest_csv
from .solver import SolverConfig
from .synthetic import train_test_split

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_CONFIG, EXIT_DATA, EXIT_MODEL = 2, 3, 4


class ConfigError(Exception):
    pass


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise SchemaError(f"cannot read {path}: {e.strerror}") from None


def _write(path, text: str):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise SchemaError(f"cannot write {path}: {e.strerror}") from None


def _meta(seed, config_hash=None) -> dict:
    meta = {"tool": "pertinent", "tool_version": __version__, "seed": seed}
    if config_hash is not None:
        meta["config_hash"] = config_hash
    return meta


def cmd_bases(args) -> int:
    schema = Schema.from_json(_read(args.schema))
    ds = ingest_csv(_read(args.data), schema)
    _write(args.out, complete_schema(ds, schema).to_json() + "\n")
    return 0


def cmd_train(args) -> int:
    schema = Schema.from_json(_read(args.schema))
    ds = ingest_csv(_read(args.data), schema)
    if ds.labels is None:
        raise SchemaError(f"{args.data} has no target column {schema.target!r}")
    schema = complete_schema(ds, schema)
    if args.split is not None:
        if not 0 < args.split < 1:
            raise ConfigError("--split must be in (0, 1)")
        train_idx, test_idx = train_test_split(len(ds), args.split, args.seed)
    else:
        train_idx, test_idx = list(range(len(ds))), []
    train = ds.subset(train_idx)
    if args.kind == "cart":
        model = train_cart(train, schema, max_depth=args.max_depth, min_leaf=args.min_leaf,
                           seed=args.seed, score_scale=args.score_scale)
    else:
        model = train_forest(train, schema, n_trees=args.trees, max_depth=args.max_depth,
                             min_leaf=args.min_leaf, seed=args.seed, score_scale=args.score_scale)
    model.meta.update(_meta(args.seed))
    model.meta["split"] = {"fraction": args.split, "train": train_idx, "test": test_idx}
    model.meta["fma"] = fma_fit(train, schema).to_dict()
    if test_idx:
        test = ds.subset(test_idx)
        acc = float((model.predict(test.rows) == test.label_indices(schema)).mean())
        model.meta["test_accuracy"] = acc
        print(f"test accuracy: {acc:.4f} on {len(test_idx)} rows", file=sys.stderr)
    _write(args.out, model.to_json() + "\n")
    return 0


def _load_model(args):
    """Model handle, schema and training indices (None for remote models)."""
    if bool(args.model) == bool(args.remote):
        raise ConfigError("give exactly one of --model or --remote")
    if args.model:
        text = _read(args.model)
        try:
            model = TreeModel.from_json(text)
        except (ValueError, KeyError) as e:
            raise SchemaError(f"{args.model} is not a model file: {e}") from None
        return model, model.schema, model.meta
    if not args.schema:
        raise ConfigError("--remote needs --schema")
    schema = Schema.from_json(_read(args.schema))
    return remote_model(args.remote, schema, score_scale=args.score_scale,
                        piecewise_constant=args.piecewise_constant), schema, {}


def _solver_config(args) -> SolverConfig:
    raw: dict = {}
    if args.config:
        try:
            raw = tomllib.loads(_read(args.config).decode("utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from None
        raw = dict(raw.get("solver", raw))
    grad = dict(raw.pop("grad", {}))
    flags = {"c": args.c, "beta": args.beta, "gamma": None, "kappa": args.kappa, "alpha": args.alpha,
             "iterations": args.steps, "restarts": args.restarts, "c_rounds": args.c_rounds,
             "c_factor": args.c_factor, "engine": args.engine, "seed": args.seed}
    raw.update({k: v for k, v in flags.items() if v is not None})
    if args.grad_samples is not None:
        grad["q"] = args.grad_samples
    if args.mu is not None:
        grad["mu"] = args.mu
    raw["grad"] = grad
    try:
        return SolverConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad solver configuration: {e}") from None


def _select_rows(args, n: int, meta: dict) -> list[int]:
    if args.all_test:
        split = meta.get("split") or {}
        if not split.get("test"):
            raise ConfigError("--all-test needs a model trained with --split")
        rows = list(split["test"])
    elif args.all:
        rows = list(range(n))
    else:
        rows = list(args.row or [])
    if not rows:
        raise ConfigError("select rows with --row, --all-test or --all")
    bad = [r for r in rows if not 0 <= r < n]
    if bad:
        raise ConfigError(f"row index out of range: {bad[0]}")
    return rows


def _space(schema, ds, meta) -> EncodedSpace:
    split = meta.get("split") or {}
    if meta.get("fma"):
        fmap = FmaMap.from_dict(meta["fma"])
    else:
        train = ds.subset(split["train"]) if split.get("train") else ds
        fmap = fma_fit(train, schema)
    return EncodedSpace(schema, fmap)


def cmd_explain(args) -> int:
    cfg = _solver_config(args)
    model, schema, meta = _load_model(args)
    ds = ingest_csv(_read(args.data), schema)
    if not schema.is_complete():
        schema = complete_schema(ds, schema)
        model.schema = schema
    rows = _select_rows(args, len(ds), meta)
    space = _space(schema, ds, meta)
    digest = cfg.digest()

    def one(i):
        row_cfg = cfg.with_seed(cfg.seed + i)
        try:
            e = explain(ds.rows[i], model, space, row_cfg)
        except ModelError as err:
            return {"version": 1, "row": i, "error": str(err), "meta": _meta(row_cfg.seed, digest)}
        e.meta = dict(_meta(row_cfg.seed, digest), row=i)
        return e

    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, rows))
    else:
        results = [one(i) for i in rows]

    lines, failures = [], 0
    for i, r in zip(rows, results):
        if isinstance(r, dict):
            failures += 1
            print(f"row {i}: failed: {r['error']}", file=sys.stderr)
            lines.append(json.dumps(r, separators=(",", ":")))
        else:
            d = r.diagnostics
            print(f"row {i}: pp {'found' if r.pp else 'none'}, pn {'found' if r.pn else 'none'}, "
                  f"{d['queries_used']} queries", file=sys.stderr)
            lines.append(r.to_json())
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if failures == len(rows):
        return EXIT_MODEL
    return 0


def read_explanations(text: str) -> tuple[list[Explanation], int]:
    expls, failed = [], 0
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"line {n}: not JSON: {e}") from None
        if "error" in d:
            failed += 1
            continue
        expls.append(Explanation.from_dict(d))
    return expls, failed


def cmd_evaluate(args) -> int:
    model, schema, meta = _load_model(args)
    expls, failed = read_explanations(_read(args.explanations).decode("utf-8"))
    if not expls:
        print(f"{args.explanations}: no explanations to evaluate", file=sys.stderr)
        return EXIT_DATA
    ds = space = None
    if args.data:
        ds = ingest_csv(_read(args.data), schema)
        if not schema.is_complete():
            schema = complete_schema(ds, schema)
            model.schema = schema
        space = _space(schema, ds, meta)
        split = meta.get("split") or {}
        if split.get("train"):
            ds = ds.subset(split["train"])
    report = evaluate(expls, model, schema, ds, space, beta=args.beta)
    if failed:
        report.notes = report.notes + (f"{failed} input(s) failed during explanation",)
    out = report.to_dict()
    out["meta"] = _meta(None)
    if args.out:
        _write(args.out, json.dumps(out, indent=2) + "\n")
    print(report.to_table())
    return 0


def cmd_serve_stub(args) -> int:
    from .server import fixed_scores, make_stub_server

    if bool(args.model) == bool(args.scores):
        raise ConfigError("give exactly one of --model or --scores")
    if args.model:
        server = make_stub_server(args.host, args.port, model=TreeModel.from_json(_read(args.model)))
    else:
        try:
            server = make_stub_server(args.host, args.port, scores=fixed_scores(args.scores))
        except ValueError as e:
            raise ConfigError(f"--scores: {e}") from None
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _model_source(p):
    p.add_argument("--model", help="built-in model file (JSON)")
    p.add_argument("--remote", help="base URL of a scoring service")
    p.add_argument("--schema", help="schema JSON (required with --remote)")
    p.add_argument("--score-scale", choices=["log", "prob"], default="log",
                   help="scale of remote scores (default: log)")
    p.add_argument("--piecewise-constant", action="store_true",
                   help="treat the remote model as piecewise constant (wider smoothing)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pertinent", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bases", help="fill base values, ranges and stds into a schema")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bases)

    p = sub.add_parser("train", help="train a built-in CART tree or random forest")
    p.add_argument("kind", choices=["cart", "forest"])
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-depth", type=int, default=None,
                   help="depth cap (default: 5 for cart, unlimited for forest)")
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--split", type=float, default=None, help="training fraction, e.g. 0.75")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-scale", choices=["log", "prob"], default="log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="compute pertinent positives and negatives")
    _model_source(p)
    p.add_argument("--data", required=True)
    p.add_argument("--row", type=int, action="append", help="row index (repeatable)")
    p.add_argument("--all-test", action="store_true", help="every held-out row of the model's split")
    p.add_argument("--all", action="store_true", help="every row of --data")
    p.add_argument("--config", help="TOML file with solver options")
    p.add_argument("--steps", type=int, default=None, help="FISTA iterations (default 100)")
    p.add_argument("--grad-samples", type=int, default=None,
                   help="random directions per gradient estimate (default 50)")
    p.add_argument("--mu", type=float, default=None, help="smoothing radius")
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--c-rounds", type=int, default=None)
    p.add_argument("--c-factor", type=float, default=None)
    p.add_argument("--engine", choices=["fma", "ssa"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output JSON-lines file (default: stdout)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="score explanations with CCP, CFR and CFIP")
    p.add_argument("--explanations", required=True)
    _model_source(p)
    p.add_argument("--data", help="dataset CSV (training rows are used for CFIP proxies)")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve-stub", help="serve a model (or fixed scores) over HTTP for testing")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--model")
    p.add_argument("--scores", help='fixed scores, e.g. "[[0.1, -2.3]]"')
    p.set_defaults(func=cmd_serve_stub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "kind", None) == "cart" and args.max_depth is None:
        args.max_depth = 5
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
