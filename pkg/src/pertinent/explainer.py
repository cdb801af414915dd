"""End-to-end contrastive explanation of single records."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .encoding import FmaMap
from .schema import Schema, SchemaError
from .solver import PN, PP, CandidateResult, SolverConfig, solve

FORMAT_VERSION = 1


@dataclass
class Part:
    """A pertinent positive or negative.

    ``delta`` holds raw-unit changes for real features and changes of the
    frequency code for categorical ones.
    """

    record: tuple
    delta: list[float]
    importances: list[float]
    predicted: str
    hinge: float
    l1: float
    l2: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "record": list(self.record),
            "delta": self.delta,
            "importances": self.importances,
            "predicted": self.predicted,
            "objective": {"hinge": self.hinge, "l1": self.l1, "l2": self.l2},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Part:
        obj = d.get("objective", {})
        return cls(record=tuple(d["record"]), delta=list(d["delta"]),
                   importances=[float(v) for v in d["importances"]], predicted=str(d["predicted"]),
                   hinge=obj.get("hinge", 0.0), l1=obj.get("l1", 0.0), l2=obj.get("l2", 0.0))


@dataclass
class Explanation:
    input: tuple
    t0: str
    pp: Part | None
    pn: Part | None
    diagnostics: dict[str, Any] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "version": FORMAT_VERSION,
            "input": list(self.input),
            "t0": self.t0,
            "pp": None if self.pp is None else self.pp.to_dict(),
            "pn": None if self.pn is None else self.pn.to_dict(),
            "diagnostics": self.diagnostics,
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Explanation:
        if d.get("version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported explanation format version {d.get('version')!r}")
        return cls(
            input=tuple(d["input"]), t0=str(d["t0"]),
            pp=None if d.get("pp") is None else Part.from_dict(d["pp"]),
            pn=None if d.get("pn") is None else Part.from_dict(d["pn"]),
            diagnostics=d.get("diagnostics", {}), meta=d.get("meta", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> Explanation:
        return cls.from_dict(json.loads(text))


def _codes(schema: Schema, fmap: FmaMap | None, record: Sequence) -> list[float | None]:
    out = []
    for f, v in zip(schema.features, record):
        if f.is_real:
            out.append(float(v))
        elif fmap is not None:
            out.append(fmap[f.name].code(str(v)))
        else:
            out.append(None)
    return out


def compute_importances(kind: str, record: Sequence, x0: Sequence, schema: Schema,
                        fmap: FmaMap | None = None) -> list[float]:
    """Per-feature importance of a PP (deviation from base) or PN (change from x0).

    Both are divided by the feature's std (1 for constant columns).
    Categorical features are measured on their frequency codes.
    """
    vals = _codes(schema, fmap, record)
    if kind == PP:
        ref = _codes(schema, fmap, [f.base for f in schema.features])
    else:
        ref = _codes(schema, fmap, x0)
    out = []
    for f, v, r, raw, raw_ref in zip(schema.features, vals, ref, record,
                                     [f.base for f in schema.features] if kind == PP else x0):
        if v is None:
            # no frequency map: only equality is observable
            dev = 0.0 if str(raw) == str(raw_ref) else 1.0
        else:
            dev = abs(v - r)
        sigma = f.std if f.std else 1.0
        out.append(dev / sigma)
    return out


def _delta(schema: Schema, fmap: FmaMap, record, x0) -> list[float]:
    a = _codes(schema, fmap, record)
    b = _codes(schema, fmap, x0)
    return [float(u - v) for u, v in zip(a, b)]


def rank(importances: Sequence[float], names: Sequence[str]) -> list[tuple[str, float]]:
    order = sorted(range(len(importances)), key=lambda i: (-importances[i], i))
    return [(names[i], float(importances[i])) for i in order]


def feature_importance(expl: Explanation, schema: Schema):
    """Features ranked by importance (descending, ties by schema order) for the PP and PN.

    A missing part yields ``None`` in its slot.
    """
    names = schema.names
    pp = None if expl.pp is None else rank(expl.pp.importances, names)
    pn = None if expl.pn is None else rank(expl.pn.importances, names)
    return pp, pn


def _part(kind, res: CandidateResult, x0, schema: Schema, fmap: FmaMap) -> Part:
    return Part(
        record=res.record,
        delta=_delta(schema, fmap, res.record, x0),
        importances=compute_importances(kind, res.record, x0, schema, fmap),
        predicted=schema.classes[res.predicted],
        hinge=res.hinge, l1=res.l1, l2=res.l2,
    )


def _diag(res: CandidateResult) -> dict[str, Any]:
    return {"valid": res.valid, "queries_used": res.queries_used, "iterations": res.iterations,
            "restarts_used": res.restarts_used, "c_final": res.c_final, "reason": res.reason}


def explain(x0: Sequence, model, space, cfg: SolverConfig, fmap: FmaMap | None = None,
            density=None) -> Explanation:
    """Pertinent positive and negative for one record.

    A part whose search found nothing valid is left out; the diagnostics
    say why. ``fmap`` defaults to ``space.fmap`` and is used for
    categorical importances.
    """
    schema = space.schema
    x0 = schema.validate_record(x0)
    fmap = fmap if fmap is not None else getattr(space, "fmap", None)
    if fmap is None:
        raise ValueError("a frequency map is needed to score categorical importances")
    t0 = int(np.argmax(model.predict_scores([x0])[0]))
    pp = solve(PP, x0, t0, model, space, cfg, density=density)
    pn = solve(PN, x0, t0, model, space, cfg, density=density)
    return Explanation(
        input=x0,
        t0=schema.classes[t0],
        pp=_part(PP, pp, x0, schema, fmap) if pp.valid else None,
        pn=_part(PN, pn, x0, schema, fmap) if pn.valid else None,
        diagnostics={"seed": cfg.seed, "queries_used": 1 + pp.queries_used + pn.queries_used,
                     "pp": _diag(pp), "pn": _diag(pn)},
    )


def explain_many(records: Sequence[Sequence], model, space, cfg: SolverConfig,
                 ids: Sequence[int] | None = None, jobs: int = 1, fmap: FmaMap | None = None,
                 density=None) -> list[Explanation]:
    """Explain several records; record ``i`` uses seed ``cfg.seed + ids[i]``.

    Results come back in input order and do not depend on ``jobs``.
    """
    ids = list(range(len(records))) if ids is None else list(ids)

    def one(args):
        rec, i = args
        return explain(rec, model, space, cfg.with_seed(cfg.seed + i), fmap=fmap, density=density)

    if jobs <= 1:
        return [one(a) for a in zip(records, ids)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, zip(records, ids)))
