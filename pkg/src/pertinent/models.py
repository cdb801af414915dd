"""Black-box model handles.

Every handle exposes ``predict_scores(records) -> (n, k) array`` and keeps a
monotone count of queried records. Built-in CART trees and random forests
additionally report the features on a record's decision path.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from typing import Any, Callable, Sequence

import numpy as np

from .schema import Dataset, Schema, SchemaError

PROB_FLOOR = 1e-6
REMOTE_BATCH = 256


class ModelError(RuntimeError):
    """A model query failed or returned something that breaks the contract."""


class ModelHandle:
    """Base class for query-only classifiers.

    ``score_scale`` is ``"log"`` (log-probabilities floored at 1e-6) or
    ``"prob"``. ``piecewise_constant`` hints the solver to use a wide
    smoothing radius.
    """

    piecewise_constant = False

    def __init__(self, schema: Schema, score_scale: str = "log"):
        if score_scale not in ("log", "prob"):
            raise ValueError(f"score_scale must be 'log' or 'prob', not {score_scale!r}")
        self.schema = schema
        self.score_scale = score_scale
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def n_classes(self) -> int:
        return len(self.schema.classes)

    @property
    def queries(self) -> int:
        return self._queries

    @property
    def has_paths(self) -> bool:
        return False

    def predict_scores(self, records: Sequence[Sequence[Any]]) -> np.ndarray:
        records = list(records)
        with self._lock:
            self._queries += len(records)
        if not records:
            return np.empty((0, self.n_classes))
        scores = np.asarray(self._scores(records), dtype=float)
        if scores.shape != (len(records), self.n_classes):
            raise ModelError(f"model returned scores of shape {scores.shape}, "
                             f"expected {(len(records), self.n_classes)}")
        if not np.all(np.isfinite(scores)):
            raise ModelError("model returned non-finite scores")
        return scores

    def predict(self, records: Sequence[Sequence[Any]]) -> np.ndarray:
        """Predicted class indices (ties go to the lowest index)."""
        return np.argmax(self.predict_scores(records), axis=1)

    def path_features(self, record: Sequence[Any]) -> set[str]:
        raise ModelError(f"{type(self).__name__} does not expose decision paths")

    def _scale(self, proba: np.ndarray) -> np.ndarray:
        if self.score_scale == "prob":
            return proba
        return np.log(np.maximum(proba, PROB_FLOOR))

    def _scores(self, records: list) -> np.ndarray:
        raise NotImplementedError


class CallableModel(ModelHandle):
    """Wraps a function mapping a list of records to class probabilities."""

    def __init__(self, schema: Schema, fn: Callable[[list], Any], score_scale: str = "log",
                 piecewise_constant: bool = False):
        super().__init__(schema, score_scale)
        self.fn = fn
        self.piecewise_constant = piecewise_constant

    def _scores(self, records):
        return self._scale(np.asarray(self.fn(records), dtype=float))


def records_to_matrix(schema: Schema, records: Sequence[Sequence[Any]]) -> np.ndarray:
    """Numeric matrix: reals as floats, categoricals as their index in ``values``."""
    X = np.empty((len(records), schema.d))
    if not len(records):
        return X
    if any(len(rec) != schema.d for rec in records):
        raise ModelError(f"every record needs {schema.d} cells")
    for i, (f, col) in enumerate(zip(schema.features, zip(*records))):
        if f.is_real:
            X[:, i] = np.asarray(col, dtype=float)
        else:
            lookup = {v: j for j, v in enumerate(f.values)}
            try:
                X[:, i] = [lookup[str(v)] for v in col]
            except KeyError as e:
                raise ModelError(f"unknown categorical value {e.args[0]!r} for {f.name!r}") from None
    return X


# --------------------------------------------------------------------------- trees


class Tree:
    """Binary tree in flat arrays; node 0 is the root, ``left == -1`` marks a leaf.

    Real splits send ``x <= threshold`` left; categorical splits send
    ``x == category`` left (one value versus the rest).
    """

    def __init__(self, feature, threshold, categorical, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=float)
        self.categorical = np.asarray(categorical, dtype=bool)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.counts = np.asarray(counts, dtype=float)
        k = self.counts.shape[1]
        # Laplace-smoothed leaf class frequencies
        self.proba = (self.counts + 1.0) / (self.counts.sum(axis=1, keepdims=True) + k)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(n):
            if self.left[n] < 0:
                return 0
            return 1 + max(walk(self.left[n]), walk(self.right[n]))
        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            internal = self.left[node] >= 0
            if not internal.any():
                return node
            f = self.feature[node]
            v = X[rows, np.where(internal, f, 0)]
            thr = self.threshold[node]
            go_left = np.where(self.categorical[node], v == thr, v <= thr)
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.proba[self.apply(X)]

    def path(self, x: np.ndarray) -> list[int]:
        """Feature indices tested on the path of one numeric row, root first."""
        out, n = [], 0
        while self.left[n] >= 0:
            f = self.feature[n]
            out.append(int(f))
            thr = self.threshold[n]
            go_left = x[f] == thr if self.categorical[n] else x[f] <= thr
            n = self.left[n] if go_left else self.right[n]
        return out

    def to_dict(self, schema: Schema) -> dict[str, Any]:
        nodes = []
        log_proba = np.log(np.maximum(self.proba, PROB_FLOOR))
        for n in range(self.n_nodes):
            node: dict[str, Any] = {"counts": [int(c) for c in self.counts[n]]}
            if self.left[n] >= 0:
                f = schema.features[self.feature[n]]
                node["feature"] = f.name
                if self.categorical[n]:
                    node["category"] = f.values[int(self.threshold[n])]
                else:
                    node["threshold"] = float(self.threshold[n])
                node["left"] = int(self.left[n])
                node["right"] = int(self.right[n])
            else:
                node["log_proba"] = [float(v) for v in log_proba[n]]
            nodes.append(node)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict[str, Any], schema: Schema) -> Tree:
        feature, threshold, categorical, left, right, counts = [], [], [], [], [], []
        for node in d["nodes"]:
            counts.append(node["counts"])
            if "feature" in node:
                i = schema.index(node["feature"])
                f = schema.features[i]
                feature.append(i)
                if f.is_categorical:
                    categorical.append(True)
                    threshold.append(float(f.values.index(node["category"])))
                else:
                    categorical.append(False)
                    threshold.append(float(node["threshold"]))
                left.append(node["left"])
                right.append(node["right"])
            else:
                feature.append(-1)
                threshold.append(0.0)
                categorical.append(False)
                left.append(-1)
                right.append(-1)
        return cls(feature, threshold, categorical, left, right, counts)


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.sum(p * p, axis=-1), 0.0)


def _best_split(X, y, k, features, categorical, min_leaf):
    """Lowest weighted Gini split over ``features``; None if nothing beats the parent."""
    n = len(y)
    parent = np.bincount(y, minlength=k).astype(float)
    best_score = _gini(parent) * n - 1e-12
    best = None
    onehot = np.eye(k)[y]
    for f in features:
        x = X[:, f]
        if categorical[f]:
            for c in np.unique(x):
                mask = x == c
                nl = int(mask.sum())
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                cl = onehot[mask].sum(axis=0)
                score = _gini(cl) * nl + _gini(parent - cl) * (n - nl)
                if score < best_score:
                    best_score, best = score, (f, float(c), True)
        else:
            order = np.argsort(x, kind="stable")
            xs = x[order]
            cum = np.cumsum(onehot[order], axis=0)
            # candidate cut after position i (left holds i+1 rows)
            cut = np.flatnonzero(xs[1:] > xs[:-1])
            if cut.size == 0:
                continue
            nl = cut + 1
            ok = (nl >= min_leaf) & (n - nl >= min_leaf)
            cut, nl = cut[ok], nl[ok]
            if cut.size == 0:
                continue
            cl = cum[cut]
            scores = _gini(cl) * nl + _gini(parent - cl) * (n - nl)
            j = int(np.argmin(scores))
            if scores[j] < best_score:
                best_score = scores[j]
                best = (f, float((xs[cut[j]] + xs[cut[j] + 1]) / 2), False)
    return best


def _grow(X, y, k, categorical, max_depth, min_leaf, max_features, rng) -> Tree:
    feature, threshold, cat, left, right, counts = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        cat.append(False)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=k))
        return len(feature) - 1

    d = X.shape[1]
    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if (max_depth is not None and depth >= max_depth) or np.all(yi == yi[0]):
            continue
        if max_features is None or max_features >= d:
            feats = range(d)
        else:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
        split = _best_split(X[idx], yi, k, feats, categorical, min_leaf)
        if split is None:
            continue
        f, thr, is_cat = split
        x = X[idx, f]
        go_left = x == thr if is_cat else x <= thr
        feature[node], threshold[node], cat[node] = f, thr, is_cat
        li, ri = idx[go_left], idx[~go_left]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(feature, threshold, cat, left, right, counts)


class TreeModel(ModelHandle):
    """A built-in CART tree or a forest of them (probabilities averaged)."""

    piecewise_constant = True

    def __init__(self, schema: Schema, trees: Sequence[Tree], kind: str = "cart",
                 score_scale: str = "log", meta: dict | None = None):
        super().__init__(schema, score_scale)
        self.trees = list(trees)
        self.kind = kind
        self.meta = dict(meta or {})

    @property
    def has_paths(self) -> bool:
        return True

    def predict_proba(self, records) -> np.ndarray:
        X = records_to_matrix(self.schema, records)
        proba = self.trees[0].predict_proba(X)
        for t in self.trees[1:]:
            proba = proba + t.predict_proba(X)
        return proba / len(self.trees)

    def _scores(self, records):
        return self._scale(self.predict_proba(records))

    def depth(self) -> int:
        return max(t.depth() for t in self.trees)

    def path_features(self, record) -> set[str]:
        """Features on the decision path.

        For a forest: the k features appearing on the most member-tree
        paths, k being the mean number of distinct path features per tree
        (rounded, at least 1).
        """
        x = records_to_matrix(self.schema, [record])[0]
        names = self.schema.names
        if len(self.trees) == 1:
            return {names[f] for f in self.trees[0].path(x)}
        per_tree = [set(t.path(x)) for t in self.trees]
        freq = Counter(f for s in per_tree for f in s)
        if not freq:
            return set()
        k = max(1, int(round(np.mean([len(s) for s in per_tree]))))
        ranked = sorted(freq, key=lambda f: (-freq[f], f))
        return {names[f] for f in ranked[:k]}

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "pertinent.model",
            "version": 1,
            "kind": self.kind,
            "score_scale": self.score_scale,
            "schema": self.schema.to_dict(),
            "trees": [t.to_dict(self.schema) for t in self.trees],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TreeModel:
        if d.get("format") != "pertinent.model" or d.get("version") != 1:
            raise SchemaError("not a version-1 model file")
        schema = Schema.from_dict(d["schema"])
        trees = [Tree.from_dict(t, schema) for t in d["trees"]]
        return cls(schema, trees, kind=d.get("kind", "cart"), score_scale=d.get("score_scale", "log"),
                   meta=d.get("meta"))

    @classmethod
    def from_json(cls, text: str | bytes) -> TreeModel:
        return cls.from_dict(json.loads(text))


def _training_arrays(ds: Dataset, schema: Schema):
    if ds.labels is None:
        raise SchemaError("training needs a labelled dataset")
    if len(ds) == 0:
        raise SchemaError("training needs a nonempty dataset")
    X = records_to_matrix(schema, ds.rows)
    y = ds.label_indices(schema)
    categorical = np.array([f.is_categorical for f in schema.features])
    return X, y, categorical


def train_cart(ds: Dataset, schema: Schema, max_depth: int = 5, min_leaf: int = 1,
               seed: int = 0, score_scale: str = "log") -> TreeModel:
    """Gini CART with threshold splits on reals and one-vs-rest splits on categoricals.

    The search is exhaustive, so ``seed`` only matters through
    :func:`train_forest`; it is recorded in ``meta``.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    X, y, categorical = _training_arrays(ds, schema)
    tree = _grow(X, y, len(schema.classes), categorical, max_depth, min_leaf, None,
                 np.random.default_rng(seed))
    return TreeModel(schema, [tree], kind="cart", score_scale=score_scale,
                     meta={"max_depth": max_depth, "min_leaf": min_leaf, "seed": seed})


def train_forest(ds: Dataset, schema: Schema, n_trees: int = 100, max_depth: int | None = None,
                 min_leaf: int = 1, seed: int = 0, score_scale: str = "log") -> TreeModel:
    """Bagged CART trees with sqrt(d) candidate features per split."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X, y, categorical = _training_arrays(ds, schema)
    rng = np.random.default_rng(seed)
    n, d = X.shape
    max_features = max(1, int(np.sqrt(d)))
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, n, size=n)
        trees.append(_grow(X[idx], y[idx], len(schema.classes), categorical, max_depth, min_leaf,
                           max_features, rng))
    return TreeModel(schema, trees, kind="forest", score_scale=score_scale,
                     meta={"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf,
                           "seed": seed})


# --------------------------------------------------------------------------- remote


class RemoteModel(ModelHandle):
    """Client for a scoring service: ``POST {url}/scores``.

    Request body ``{"instances": [[cell, ...], ...]}``; response
    ``{"scores": [[number, ...], ...]}``. Batches larger than
    ``batch_size`` are split into several requests.
    """

    def __init__(self, url: str, schema: Schema, score_scale: str = "log", timeout: float = 30.0,
                 batch_size: int = REMOTE_BATCH, piecewise_constant: bool = False):
        import httpx

        super().__init__(schema, score_scale)
        self.url = url.rstrip("/") + "/scores"
        self.batch_size = batch_size
        self.piecewise_constant = piecewise_constant
        self._client = httpx.Client(timeout=timeout)
        self._httpx = httpx

    def close(self):
        self._client.close()

    def _scores(self, records):
        out = []
        for start in range(0, len(records), self.batch_size):
            chunk = records[start:start + self.batch_size]
            out.extend(self._post(chunk))
        return out

    def _post(self, chunk) -> list:
        payload = {"instances": [[_json_cell(v) for v in rec] for rec in chunk]}
        try:
            resp = self._client.post(self.url, json=payload)
        except self._httpx.HTTPError as e:
            raise ModelError(f"transport failure contacting {self.url}: {e}") from e
        if not 200 <= resp.status_code < 300:
            raise ModelError(f"{self.url} answered HTTP {resp.status_code}")
        try:
            scores = resp.json()["scores"]
            arr = np.asarray(scores, dtype=float)
        except (ValueError, KeyError, TypeError) as e:
            raise ModelError(f"malformed response from {self.url}: {e}") from e
        if arr.shape != (len(chunk), self.n_classes):
            raise ModelError(f"shape mismatch: got scores of shape {arr.shape} for "
                             f"{len(chunk)} instances and {self.n_classes} classes")
        return arr.tolist()


def _json_cell(v):
    return v if isinstance(v, str) else float(v)


def remote_model(url: str, schema: Schema, **kwargs) -> RemoteModel:
    return RemoteModel(url, schema, **kwargs)


def load_model(text: str | bytes) -> TreeModel:
    return TreeModel.from_json(text)
