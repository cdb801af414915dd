"""Evaluation of explanation sets: class validity, ranking faithfulness and path overlap."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .explainer import Explanation, rank
from .models import ModelError
from .schema import Dataset, Schema
from .solver import PN, PP


@dataclass
class MetricReport:
    n_evaluated: int
    n_pp_valid: int
    n_pn_valid: int
    ccp_pp: float | None = None
    ccp_pn: float | None = None
    ccp_pp_all: float | None = None
    ccp_pn_all: float | None = None
    cfr_pp: float | None = None
    cfr_pn: float | None = None
    n_cfr_pp: int = 0
    n_cfr_pn: int = 0
    cfip_pp: float | None = None
    cfip_pn: float | None = None
    n_cfip_pp: int = 0
    n_cfip_pn: int = 0
    notes: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return self.n_evaluated == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        def fmt(v, pct):
            if v is None:
                return "n/a"
            return f"{v:.2f}" if pct else f"{v:.3f}"

        rows = [
            ("metric", "PP", "PN"),
            ("CCP (valid parts)", fmt(self.ccp_pp, True), fmt(self.ccp_pn, True)),
            ("CCP (all inputs)", fmt(self.ccp_pp_all, True), fmt(self.ccp_pn_all, True)),
            ("CFR", fmt(self.cfr_pp, False), fmt(self.cfr_pn, False)),
            ("CFIP", fmt(self.cfip_pp, True), fmt(self.cfip_pn, True)),
            ("parts found", str(self.n_pp_valid), str(self.n_pn_valid)),
        ]
        w0 = max(len(r[0]) for r in rows)
        w1 = max(len(r[1]) for r in rows)
        w2 = max(len(r[2]) for r in rows)
        lines = [f"{a:<{w0}}  {b:>{w1}}  {c:>{w2}}" for a, b, c in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append(f"inputs evaluated: {self.n_evaluated}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def _predicted(model, records) -> np.ndarray:
    if not records:
        return np.empty(0, dtype=int)
    return np.argmax(model.predict_scores(records), axis=1)


def ccp(expls: Sequence[Explanation], model, schema: Schema):
    """Percentage of PPs predicted as ``t0`` and of PNs predicted as something else.

    Denominators are the numbers of explanations carrying each part;
    ``None`` when there are none.
    """
    out = []
    for kind in (PP, PN):
        parts = [(e, getattr(e, kind)) for e in expls if getattr(e, kind) is not None]
        if not parts:
            out.append(None)
            continue
        pred = _predicted(model, [p.record for _, p in parts])
        t0 = np.array([schema.class_index(e.t0) for e, _ in parts])
        hits = pred == t0 if kind == PP else pred != t0
        out.append(100.0 * hits.sum() / len(parts))
    return tuple(out)


def _ablation(kind, expl: Explanation, model, schema: Schema, top: list[int]) -> np.ndarray:
    """Score each top feature keeps when it alone is reset (base for PP, x0 for PN)."""
    if kind == PP:
        src = list(expl.input)
        target = schema.class_index(expl.t0)
        fill = [f.base for f in schema.features]
    else:
        src = list(expl.pn.record)
        target = int(_predicted(model, [tuple(src)])[0])
        fill = list(expl.input)
    batch = []
    for j in top:
        rec = list(src)
        rec[j] = fill[j]
        batch.append(tuple(rec))
    return model.predict_scores(batch)[:, target]


def cfr(expls: Sequence[Explanation], model, schema: Schema):
    """Mean Spearman correlation between importance order and one-at-a-time ablation order.

    Features with nonzero importance are ablated individually; the one whose
    reset leaves the lowest score for the class of interest ranks first.
    Explanations with fewer than two such features (or a flat ablation
    profile) are skipped. Returns ``((cfr_pp, n_pp), (cfr_pn, n_pn))``.
    """
    out = []
    for kind in (PP, PN):
        rhos = []
        for e in expls:
            part = getattr(e, kind)
            if part is None:
                continue
            ranked = [i for i in sorted(range(schema.d), key=lambda i: (-part.importances[i], i))
                      if part.importances[i] > 0]
            if len(ranked) < 2:
                continue
            kept = _ablation(kind, e, model, schema, ranked)
            if np.all(kept == kept[0]):
                continue
            rho = spearmanr(np.arange(len(ranked)), kept).statistic
            # strip floating-point dust so perfect agreement reads as exactly +/-1
            rhos.append(float(np.round(rho, 12)))
        out.append((float(np.mean(rhos)) if rhos else None, len(rhos)))
    return tuple(out)


def _criteria(kind, X, predicted, x0e, b, t0):
    dev = np.abs(X - b)
    ref = np.abs(x0e - b)
    if kind == PP:
        return (predicted == t0) & np.all(dev <= ref + 1e-12, axis=1)
    return (predicted != t0) & np.all(dev >= ref - 1e-12, axis=1)


def _sparsity(X, b, beta):
    v = np.atleast_2d(X) - b
    return beta * np.abs(v).sum(axis=1) + np.sum(v * v, axis=1)


def find_proxy(kind: str, x0, t0: int, ds: Dataset, model, space, beta: float = 0.1,
               encoded: np.ndarray | None = None, predicted: np.ndarray | None = None):
    """Training row closest to the base values that qualifies as a PP (or PN) of ``x0``.

    ``encoded``/``predicted`` may carry the encoded rows and their predicted
    classes to avoid recomputing them across calls. Returns ``None`` if no
    row qualifies.
    """
    if len(ds) == 0:
        return None
    X = space.encode_many(ds.rows) if encoded is None else encoded
    pred = _predicted(model, ds.rows) if predicted is None else predicted
    ok = _criteria(kind, X, pred, space.encode(x0), space.base, t0)
    if not ok.any():
        return None
    idx = np.flatnonzero(ok)
    best = idx[int(np.argmin(_sparsity(X[idx], space.base, beta)))]
    return ds.rows[best]


def cfip(expls: Sequence[Explanation], model, ds: Dataset, space, beta: float = 0.1,
         prefer_explanation: bool = True):
    """Overlap between top-k important features and the decision path of the ideal proxy.

    The proxy is the sparsest qualifying training row, or the explanation's
    own part when that is sparser still (``prefer_explanation``). ``k`` is
    the number of features on the proxy's path. Returns
    ``((cfip_pp, n_pp), (cfip_pn, n_pn))``.
    """
    if not getattr(model, "has_paths", False):
        raise ModelError("CFIP needs a model that exposes decision paths")
    schema = space.schema
    X = space.encode_many(ds.rows)
    pred = _predicted(model, ds.rows)
    out = []
    for kind in (PP, PN):
        scores = []
        for e in expls:
            part = getattr(e, kind)
            if part is None:
                continue
            t0 = schema.class_index(e.t0)
            proxy = find_proxy(kind, e.input, t0, ds, model, space, beta, X, pred)
            if prefer_explanation:
                own = space.encode(part.record)
                if proxy is None or _sparsity(own, space.base, beta)[0] < \
                        _sparsity(space.encode(proxy), space.base, beta)[0]:
                    proxy = part.record
            if proxy is None:
                continue
            path = model.path_features(proxy)
            if not path:
                continue
            k = len(path)
            top = {name for name, imp in rank(part.importances, schema.names)[:k] if imp > 0}
            scores.append(len(top & path) / k)
        out.append((100.0 * float(np.mean(scores)) if scores else None, len(scores)))
    return tuple(out)


def evaluate(expls: Sequence[Explanation], model, schema: Schema, ds: Dataset | None = None,
             space=None, beta: float = 0.1) -> MetricReport:
    """All metrics in one report; CFIP only when the model exposes paths and data is given."""
    n = len(expls)
    n_pp = sum(e.pp is not None for e in expls)
    n_pn = sum(e.pn is not None for e in expls)
    report = MetricReport(n_evaluated=n, n_pp_valid=n_pp, n_pn_valid=n_pn)
    notes = []
    if n == 0:
        report.notes = ("no explanations to evaluate",)
        return report
    report.ccp_pp, report.ccp_pn = ccp(expls, model, schema)
    if report.ccp_pp is not None:
        report.ccp_pp_all = report.ccp_pp * n_pp / n
    else:
        report.ccp_pp_all = 0.0
    if report.ccp_pn is not None:
        report.ccp_pn_all = report.ccp_pn * n_pn / n
    else:
        report.ccp_pn_all = 0.0
    (report.cfr_pp, report.n_cfr_pp), (report.cfr_pn, report.n_cfr_pn) = cfr(expls, model, schema)
    if getattr(model, "has_paths", False) and ds is not None and space is not None:
        (report.cfip_pp, report.n_cfip_pp), (report.cfip_pn, report.n_cfip_pn) = \
            cfip(expls, model, ds, space, beta)
    else:
        notes.append("CFIP unavailable: model does not expose decision paths"
                     if not getattr(model, "has_paths", False) else "CFIP skipped: no training data")
    report.notes = tuple(notes)
    return report
