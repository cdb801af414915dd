"""Continuous search spaces for mixed real/categorical records.

Two engines are provided:

* the frequency map (:class:`FmaMap`, :class:`EncodedSpace`), which places
  each categorical value on [0, 1] by how rare it is (the mode sits at 0)
  and rounds back to the nearest encoded value whenever the model is
  queried;
* simplex sampling (:class:`SimplexSpace`), which one-hot encodes
  categoricals, lets each block roam its probability simplex and scores
  a point by averaging the model over sampled corner assignments.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .schema import Dataset, Schema, SchemaError


@dataclass(frozen=True)
class FmaFeature:
    """Frequency map for one categorical feature."""

    name: str
    values: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        c_max = counts.max()
        if c_max <= 1:
            codes = np.zeros_like(counts)
        else:
            codes = (c_max - counts) / (c_max - 1)
        object.__setattr__(self, "codes", codes)
        # decode table: distinct codes ascending, each represented by the
        # earliest value in schema order carrying it
        distinct = np.unique(codes)
        reps = tuple(self.values[int(np.flatnonzero(codes == r)[0])] for r in distinct)
        object.__setattr__(self, "table", distinct)
        object.__setattr__(self, "table_values", reps)
        object.__setattr__(self, "breakpoints", (distinct[1:] + distinct[:-1]) / 2)
        object.__setattr__(self, "_lookup", dict(zip(self.values, codes.tolist())))

    def code(self, value: str) -> float:
        return self._lookup[value]

    def encode_many(self, values: Sequence[str]) -> np.ndarray:
        return np.array([self._lookup[v] for v in values], dtype=float)

    def decode(self, x: float) -> str:
        return self.table_values[int(self.decode_index(np.asarray(x)))]

    def decode_index(self, x: np.ndarray) -> np.ndarray:
        """Indices into ``table`` nearest to ``x``; exact midpoints go to the lower code."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return np.searchsorted(self.breakpoints, x, side="left")

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Encoded value of the category each ``x`` decodes to."""
        return self.table[self.decode_index(x)]

    def to_dict(self) -> dict[str, Any]:
        return {"values": list(self.values), "counts": list(self.counts),
                "codes": self.codes.tolist()}


class FmaMap:
    """Frequency maps for every categorical feature of a schema."""

    def __init__(self, features: dict[str, FmaFeature]):
        self.features = dict(features)

    def __getitem__(self, name: str) -> FmaFeature:
        return self.features[name]

    def __contains__(self, name: str) -> bool:
        return name in self.features

    def to_dict(self) -> dict[str, Any]:
        return {name: f.to_dict() for name, f in self.features.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FmaMap:
        return cls({name: FmaFeature(name, tuple(v["values"]), tuple(int(c) for c in v["counts"]))
                    for name, v in d.items()})


def fma_fit(ds: Dataset, schema: Schema) -> FmaMap:
    """Count categorical values in ``ds``; values never observed get count 1."""
    features = {}
    for i, f in enumerate(schema.features):
        if not f.is_categorical:
            continue
        counts = Counter(ds.column(i))
        features[f.name] = FmaFeature(f.name, f.values, tuple(max(counts[v], 1) for v in f.values))
    return FmaMap(features)


def fma_decode(x: float, fmap: FmaMap, feature: str) -> str:
    """Round an encoded value to the categorical value with the nearest code."""
    if not np.isfinite(x):
        raise ValueError(f"cannot decode non-finite value {x!r}")
    return fmap[feature].decode(x)


class EncodedSpace:
    """Maps records to [0, 1]^d and back.

    Real features are normalized affinely over their range (a degenerate
    range encodes to 0); categorical features use the frequency map.
    """

    blocks: tuple = ()

    def __init__(self, schema: Schema, fmap: FmaMap):
        if not schema.is_complete():
            raise SchemaError("encoded space needs a schema with ranges, bases and stds filled")
        self.schema = schema
        self.fmap = fmap
        d = schema.d
        self.dim = d
        self.lo = np.zeros(d)
        self.span = np.ones(d)
        self.real_mask = np.array([f.is_real for f in schema.features])
        for i, f in enumerate(schema.features):
            if f.is_real:
                lo, hi = f.range
                self.lo[i] = lo
                self.span[i] = hi - lo
            elif f.name not in fmap:
                raise SchemaError(f"no frequency map for categorical feature {f.name!r}")
        self.lower = np.zeros(d)
        self.upper = np.ones(d)
        self.base = self.encode([f.base for f in schema.features])

    @classmethod
    def fit(cls, ds: Dataset, schema: Schema) -> EncodedSpace:
        return cls(schema, fma_fit(ds, schema))

    def _real(self, i: int, v: float) -> float:
        span = self.span[i]
        return 0.0 if span == 0 else (float(v) - self.lo[i]) / span

    def encode(self, record: Sequence[Any]) -> np.ndarray:
        out = np.empty(self.dim)
        for i, (f, v) in enumerate(zip(self.schema.features, record)):
            if f.is_real:
                v = float(v)
                if not np.isfinite(v):
                    raise ValueError(f"non-finite value for feature {f.name!r}")
                out[i] = self._real(i, v)
            else:
                out[i] = self.fmap[f.name].code(str(v))
        return out

    def encode_many(self, records: Sequence[Sequence[Any]]) -> np.ndarray:
        return np.array([self.encode(r) for r in records]).reshape(len(records), self.dim)

    def decode(self, x: np.ndarray) -> tuple:
        return self.decode_many(np.asarray(x, dtype=float)[None, :])[0]

    def decode_many(self, X: np.ndarray) -> list[tuple]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(np.isfinite(X)):
            raise ValueError("cannot decode non-finite vectors")
        cols = []
        for i, f in enumerate(self.schema.features):
            if f.is_real:
                cols.append((self.lo[i] + X[:, i] * self.span[i]).tolist())
            else:
                fm = self.fmap[f.name]
                cols.append([fm.table_values[j] for j in fm.decode_index(X[:, i])])
        return list(zip(*cols))

    def snap(self, X: np.ndarray) -> np.ndarray:
        """Replace categorical coordinates by the code of the value they decode to."""
        X = np.array(X, dtype=float, copy=True)
        for i, f in enumerate(self.schema.features):
            if f.is_categorical:
                X[..., i] = self.fmap[f.name].snap(X[..., i])
        return X

    def query(self, model, X: np.ndarray, rng=None) -> np.ndarray:
        """Model scores at encoded points (categoricals rounded through the step map)."""
        return model.predict_scores(self.decode_many(X))


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex_project expects a nonempty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("simplex_project expects finite input")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


@dataclass
class SimplexEncoding:
    """Distributions over the values of each categorical feature.

    ``positions`` are the categorical feature indices in the schema,
    ``values`` the value lists and ``points`` the simplex points.
    """

    positions: tuple[int, ...]
    values: tuple[tuple[str, ...], ...]
    points: list[np.ndarray]

    def __post_init__(self):
        for p, vals in zip(self.points, self.values):
            if p.shape != (len(vals),) or np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-9:
                raise ValueError("every categorical point must lie on its simplex")


def ssa_evaluate(f: Callable[[list], np.ndarray], enc: SimplexEncoding, record: Sequence[Any],
                 n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Mean of ``f`` over corner assignments drawn independently per feature.

    ``record`` supplies the real cells (its categorical cells are
    overwritten by the samples). ``f`` maps a batch of records to a
    ``(n, k)`` score array.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    draws = []
    for p, vals in zip(enc.points, enc.values):
        p = np.clip(p, 0.0, None)
        idx = rng.choice(len(vals), size=n_samples, p=p / p.sum())
        draws.append([vals[j] for j in idx])
    batch = []
    for s in range(n_samples):
        rec = list(record)
        for pos, col in zip(enc.positions, draws):
            rec[pos] = col[s]
        batch.append(tuple(rec))
    return np.asarray(f(batch), dtype=float).mean(axis=0)


class SimplexSpace:
    """Search space of the simplex sampling engine.

    Layout: one coordinate per real feature (normalized as in
    :class:`EncodedSpace`), then one block per categorical feature holding
    a point of its probability simplex. ``blocks`` lists, per categorical
    feature, its schema position and the slice of coordinates it owns.
    """

    def __init__(self, schema: Schema, n_samples: int = 20):
        if not schema.is_complete():
            raise SchemaError("simplex space needs a complete schema")
        self.schema = schema
        self.n_samples = n_samples
        self.real_positions = [i for i, f in enumerate(schema.features) if f.is_real]
        n_real = len(self.real_positions)
        blocks, start = [], n_real
        for i, f in enumerate(schema.features):
            if f.is_categorical:
                blocks.append((i, slice(start, start + len(f.values))))
                start += len(f.values)
        self.blocks = tuple(blocks)
        self.dim = start
        self.lo = np.array([schema.features[i].range[0] for i in self.real_positions])
        self.span = np.array([schema.features[i].range[1] - schema.features[i].range[0]
                              for i in self.real_positions])
        self.real_mask = np.zeros(self.dim, dtype=bool)
        self.real_mask[:n_real] = True
        self.lower = np.zeros(self.dim)
        self.upper = np.ones(self.dim)
        self.base = self.encode([f.base for f in schema.features])

    def encode(self, record: Sequence[Any]) -> np.ndarray:
        out = np.zeros(self.dim)
        for k, i in enumerate(self.real_positions):
            out[k] = 0.0 if self.span[k] == 0 else (float(record[i]) - self.lo[k]) / self.span[k]
        for i, sl in self.blocks:
            out[sl.start + self.schema.features[i].values.index(str(record[i]))] = 1.0
        return out

    def encoding(self, x: np.ndarray) -> SimplexEncoding:
        return SimplexEncoding(
            positions=tuple(i for i, _ in self.blocks),
            values=tuple(self.schema.features[i].values for i, _ in self.blocks),
            points=[simplex_project(x[sl]) for _, sl in self.blocks],
        )

    def _template(self, x: np.ndarray) -> list:
        rec: list[Any] = [None] * self.schema.d
        for k, i in enumerate(self.real_positions):
            rec[i] = float(self.lo[k] + x[k] * self.span[k])
        return rec

    def decode(self, x: np.ndarray) -> tuple:
        """Reals un-normalized; each categorical takes its most probable value."""
        rec = self._template(x)
        for i, sl in self.blocks:
            rec[i] = self.schema.features[i].values[int(np.argmax(x[sl]))]
        return tuple(rec)

    def decode_many(self, X: np.ndarray) -> list[tuple]:
        return [self.decode(x) for x in np.atleast_2d(X)]

    def snap(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        for row in np.atleast_2d(X):
            for _, sl in self.blocks:
                j = int(np.argmax(row[sl]))
                row[sl] = 0.0
                row[sl.start + j] = 1.0
        return X

    def query(self, model, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Expected scores under the product distribution of each point."""
        X = np.atleast_2d(X)
        if not self.blocks:
            return model.predict_scores(self.decode_many(X))
        return np.array([
            ssa_evaluate(model.predict_scores, self.encoding(x), self._template(x), self.n_samples, rng)
            for x in X
        ])
