"""Feature metadata, CSV ingestion and per-feature statistics.

Records are plain tuples in schema order: real cells are ``float`` and
categorical cells are ``str``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

REAL = "real"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Malformed schema or a dataset that does not conform to one."""


class DataError(SchemaError):
    """A CSV row that cannot be parsed under the schema."""

    def __init__(self, message: str, row: int | None = None, feature: str | None = None):
        self.row = row
        self.feature = feature
        where = []
        if row is not None:
            where.append(f"row {row}")
        if feature is not None:
            where.append(f"feature {feature!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    range: tuple[float, float] | None = None
    values: tuple[str, ...] | None = None
    base: float | str | None = None
    std: float | None = None

    def __post_init__(self):
        if self.kind not in (REAL, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.is_real:
            if self.values is not None:
                raise SchemaError(f"real feature {self.name!r} cannot declare values")
            if self.range is not None:
                lo, hi = (float(v) for v in self.range)
                if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                    raise SchemaError(f"feature {self.name!r}: bad range {self.range!r}")
                object.__setattr__(self, "range", (lo, hi))
            if self.base is not None:
                base = float(self.base)
                if self.range is not None and not self.range[0] <= base <= self.range[1]:
                    raise SchemaError(f"feature {self.name!r}: base {base} outside range {self.range}")
                object.__setattr__(self, "base", base)
        else:
            if not self.values:
                raise SchemaError(f"categorical feature {self.name!r} needs a nonempty value list")
            values = tuple(str(v) for v in self.values)
            if len(set(values)) != len(values):
                raise SchemaError(f"feature {self.name!r}: duplicate categorical values")
            object.__setattr__(self, "values", values)
            if self.range is not None:
                raise SchemaError(f"categorical feature {self.name!r} cannot declare a range")
            if self.base is not None:
                base = str(self.base)
                if base not in values:
                    raise SchemaError(f"feature {self.name!r}: base {base!r} not among values")
                object.__setattr__(self, "base", base)
        if self.std is not None and not self.std >= 0:
            raise SchemaError(f"feature {self.name!r}: negative std")

    @property
    def is_real(self) -> bool:
        return self.kind == REAL

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.is_real:
            if self.range is not None:
                out["range"] = list(self.range)
        else:
            out["values"] = list(self.values)
        if self.base is not None:
            out["base"] = self.base
        if self.std is not None:
            out["std"] = self.std
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FeatureSpec:
        rng = d.get("range")
        values = d.get("values")
        return cls(
            name=str(d["name"]),
            kind=str(d["kind"]).lower(),
            range=tuple(rng) if rng is not None else None,
            values=tuple(values) if values is not None else None,
            base=d.get("base"),
            std=d.get("std"),
        )


@dataclass(frozen=True)
class Schema:
    """Ordered feature list, target column and class labels.

    ``substitute`` maps raw real values (e.g. sentinel codes such as -9) to
    replacement values; it is applied while ingesting real columns.
    """

    features: tuple[FeatureSpec, ...]
    target: str | None = None
    classes: tuple[str, ...] = ()
    substitute: dict[float, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "classes", tuple(str(c) for c in self.classes))
        if not self.features:
            raise SchemaError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if len(self.classes) < 2:
            raise SchemaError("schema needs at least two classes")
        if len(set(self.classes)) != len(self.classes):
            raise SchemaError("class labels must be unique")
        if self.target is not None and self.target in names:
            raise SchemaError("target column cannot also be a feature")

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def class_index(self, label: str) -> int:
        try:
            return self.classes.index(str(label))
        except ValueError:
            raise SchemaError(f"unknown class label {label!r}") from None

    def with_features(self, features: Iterable[FeatureSpec]) -> Schema:
        return replace(self, features=tuple(features))

    def is_complete(self) -> bool:
        """True when every feature carries a base value, a std and (for reals) a range."""
        return all(
            f.base is not None and f.std is not None and (f.is_categorical or f.range is not None)
            for f in self.features
        )

    def validate_record(self, record: Sequence[Any]) -> tuple:
        """Coerce a record to canonical cell types, raising SchemaError on violations."""
        if len(record) != self.d:
            raise SchemaError(f"record has {len(record)} cells, schema has {self.d} features")
        out = []
        for f, cell in zip(self.features, record):
            if f.is_real:
                try:
                    v = float(cell)
                except (TypeError, ValueError):
                    raise DataError(f"not a number: {cell!r}", feature=f.name) from None
                if not math.isfinite(v):
                    raise DataError("non-finite value", feature=f.name)
                out.append(v)
            else:
                v = str(cell)
                if v not in f.values:
                    raise DataError(f"unknown categorical value {v!r}", feature=f.name)
                out.append(v)
        return tuple(out)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "features": [f.to_dict() for f in self.features],
            "target": self.target,
            "classes": list(self.classes),
        }
        if self.substitute:
            out["substitute"] = {_fmt_key(k): v for k, v in sorted(self.substitute.items())}
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Schema:
        try:
            features = [FeatureSpec.from_dict(f) for f in d["features"]]
            classes = d["classes"]
        except (KeyError, TypeError) as e:
            raise SchemaError(f"malformed schema JSON: {e}") from None
        substitute = {float(k): float(v) for k, v in (d.get("substitute") or {}).items()}
        return cls(features=tuple(features), target=d.get("target"), classes=tuple(classes),
                   substitute=substitute)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str | bytes) -> Schema:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise SchemaError(f"schema is not valid JSON: {e}") from None


def _fmt_key(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


@dataclass(frozen=True)
class Dataset:
    rows: tuple[tuple, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))
            if len(self.labels) != len(self.rows):
                raise SchemaError("label count does not match row count")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, i: int) -> list:
        return [r[i] for r in self.rows]

    def subset(self, indices: Sequence[int]) -> Dataset:
        rows = tuple(self.rows[i] for i in indices)
        labels = None if self.labels is None else tuple(self.labels[i] for i in indices)
        return Dataset(rows, labels)

    def label_indices(self, schema: Schema) -> np.ndarray:
        if self.labels is None:
            raise SchemaError("dataset has no labels")
        return np.array([schema.class_index(v) for v in self.labels], dtype=np.intp)


def ingest_csv(data: bytes | str, schema: Schema) -> Dataset:
    """Parse a UTF-8 CSV (header row, RFC 4180 quoting) into a Dataset.

    The header must contain every feature name; the target column is
    optional. Columns may appear in any order. Missing cells are rejected.
    """
    text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty CSV (no header row)") from None
    except csv.Error as e:
        raise DataError(f"malformed CSV header: {e}") from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    allowed = set(schema.names) | ({schema.target} if schema.target else set())
    extra = [h for h in header if h not in allowed]
    if extra:
        raise DataError(f"unexpected column(s) {extra}")
    missing = [n for n in schema.names if n not in header]
    if missing:
        raise DataError(f"missing column(s) {missing}")
    positions = [header.index(n) for n in schema.names]
    target_pos = header.index(schema.target) if schema.target in header else None

    rows, labels = [], []
    i = -1
    try:
        for i, cells in enumerate(reader):
            if not cells:
                raise DataError("blank line", row=i)
            if len(cells) != len(header):
                raise DataError(f"expected {len(header)} cells, got {len(cells)}", row=i)
            rows.append(_parse_row(cells, positions, schema, i))
            if target_pos is not None:
                label = cells[target_pos].strip()
                if label not in schema.classes:
                    raise DataError(f"unknown class label {label!r}", row=i, feature=schema.target)
                labels.append(label)
    except csv.Error as e:
        raise DataError(f"malformed CSV: {e}", row=i + 1) from None
    return Dataset(tuple(rows), tuple(labels) if target_pos is not None else None)


def _parse_row(cells, positions, schema: Schema, i: int) -> tuple:
    out = []
    for f, p in zip(schema.features, positions):
        raw = cells[p].strip()
        if raw == "":
            raise DataError("missing value", row=i, feature=f.name)
        if f.is_real:
            try:
                v = float(raw)
            except ValueError:
                raise DataError(f"not a number: {raw!r}", row=i, feature=f.name) from None
            if not math.isfinite(v):
                raise DataError("non-finite value", row=i, feature=f.name)
            v = schema.substitute.get(v, v)
            out.append(v)
        else:
            if raw not in f.values:
                raise DataError(f"unknown categorical value {raw!r}", row=i, feature=f.name)
            out.append(raw)
    return tuple(out)


def serialize_csv(ds: Dataset, schema: Schema) -> str:
    """Inverse of :func:`ingest_csv` (floats written with round-trip precision)."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    header = schema.names + ([schema.target] if ds.labels is not None and schema.target else [])
    w.writerow(header)
    for k, row in enumerate(ds.rows):
        cells = [repr(float(v)) if f.is_real else v for f, v in zip(schema.features, row)]
        if ds.labels is not None and schema.target:
            cells.append(ds.labels[k])
        w.writerow(cells)
    return buf.getvalue()


def _mode(column: Sequence[str], values: Sequence[str]) -> str:
    counts = Counter(column)
    best = max(counts[v] for v in values)
    # ties go to the earliest value in schema order
    return next(v for v in values if counts[v] == best)


def estimate_base_values(ds: Dataset, schema: Schema) -> Schema:
    """Fill missing base values: median for real features, mode for categoricals.

    Bases already present in the schema are kept as given.
    """
    if len(ds) == 0:
        raise SchemaError("cannot estimate base values from an empty dataset")
    features = []
    for i, f in enumerate(schema.features):
        if f.base is None:
            col = ds.column(i)
            base = float(np.median(np.asarray(col, dtype=float))) if f.is_real else _mode(col, f.values)
            if f.is_real and f.range is not None:
                base = min(max(base, f.range[0]), f.range[1])
            f = replace(f, base=base)
        features.append(f)
    return schema.with_features(features)


def feature_stats(ds: Dataset, schema: Schema) -> Schema:
    """Fill observed ranges (unless user-given) and population standard deviations.

    An inferred range is widened to cover a user-supplied base value.

    For categorical features the std is that of the frequency-encoded column.
    """
    if len(ds) == 0:
        raise SchemaError("cannot compute feature statistics from an empty dataset")
    from .encoding import fma_fit

    fmap = fma_fit(ds, schema)
    features = []
    for i, f in enumerate(schema.features):
        col = ds.column(i)
        if f.is_real:
            x = np.asarray(col, dtype=float)
            if f.range is not None:
                rng = f.range
            else:
                # widen the observed range so a user-given base stays inside it
                lo, hi = float(x.min()), float(x.max())
                if f.base is not None:
                    lo, hi = min(lo, f.base), max(hi, f.base)
                rng = (lo, hi)
            f = replace(f, range=rng, std=float(x.std()))
        else:
            codes = fmap[f.name].encode_many(col)
            f = replace(f, std=float(np.std(codes)))
        features.append(f)
    return schema.with_features(features)


def complete_schema(ds: Dataset, schema: Schema) -> Schema:
    """Ranges, stds and base values in one call."""
    return estimate_base_values(ds, feature_stats(ds, schema))
