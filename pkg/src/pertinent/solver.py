"""Projected FISTA over query-only gradient estimates.

The search runs in an encoded space (see :mod:`pertinent.encoding`) on the
point ``x = x0 + delta``. Pertinent positives are kept no farther from the
base values than the input; pertinent negatives at least as far.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .encoding import EncodedSpace, SimplexSpace, simplex_project
from .gradient import DEFAULT_MU, TREE_MU, GradConfig, estimate_gradient

PP = "pp"
PN = "pn"


@dataclass(frozen=True)
class SolverConfig:
    c: float = 0.01
    beta: float = 0.1
    gamma: float = 0.0
    kappa: float = 0.0
    alpha: float = 0.01
    iterations: int = 100
    c_rounds: int = 5
    c_factor: float = 3.0
    restarts: int = 4
    grad: GradConfig = field(default_factory=GradConfig)
    seed: int = 0
    engine: str = "fma"
    ssa_samples: int = 20

    def __post_init__(self):
        for name in ("c", "beta", "gamma", "kappa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.iterations < 1 or self.c_rounds < 1 or self.restarts < 0:
            raise ValueError("iterations and c_rounds must be >= 1, restarts >= 0")
        if self.engine not in ("fma", "ssa"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if isinstance(self.grad, dict):
            object.__setattr__(self, "grad", GradConfig(**self.grad))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SolverConfig:
        d = dict(d)
        grad = d.pop("grad", {}) or {}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver option(s): {sorted(unknown)}")
        return cls(grad=GradConfig(**grad), **d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> SolverConfig:
        return replace(self, seed=seed)


# --------------------------------------------------------------------------- losses


def _split_scores(s: np.ndarray, t0: int):
    s = np.asarray(s, dtype=float)
    if s.shape[-1] < 2:
        raise ValueError("score vectors need at least two classes")
    others = np.delete(s, t0, axis=-1).max(axis=-1)
    return s[..., t0], others


def hinge_pp(s: np.ndarray, t0: int, kappa: float) -> np.ndarray | float:
    """``max(max_{i != t0} s_i - s_t0, -kappa)``; small while ``t0`` still wins."""
    own, other = _split_scores(s, t0)
    return np.maximum(other - own, -kappa)


def hinge_pn(s: np.ndarray, t0: int, kappa: float) -> np.ndarray | float:
    """``max(s_t0 - max_{i != t0} s_i, -kappa)``; small once another class wins."""
    own, other = _split_scores(s, t0)
    return np.maximum(own - other, -kappa)


def shrink(z: np.ndarray, beta: float) -> np.ndarray:
    """Element-wise soft thresholding: the proximal map of ``beta * ||.||_1``."""
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - beta, 0.0)


# --------------------------------------------------------------------------- projections


def _edges(x0, b):
    x0 = np.asarray(x0, dtype=float)
    mirror = 2.0 * np.asarray(b, dtype=float) - x0
    return np.minimum(x0, mirror), np.maximum(x0, mirror)


def project_pp(x, x0, b, lower, upper) -> np.ndarray:
    """Nearest point with ``|x - b| <= |x0 - b|`` inside ``[lower, upper]``."""
    lo_edge, hi_edge = _edges(x0, b)
    lo = np.maximum(lo_edge, lower)
    hi = np.minimum(hi_edge, upper)
    # x0 is always feasible, so the interval is never empty when x0 is in bounds
    hi = np.maximum(hi, lo)
    return np.clip(x, lo, hi)


def project_pn(x, x0, b, lower, upper) -> np.ndarray:
    """Nearest point with ``|x - b| >= |x0 - b|`` inside ``[lower, upper]``.

    Each coordinate goes to the nearer of the two rays away from the base
    value (ties to the ray holding ``x0``); a coordinate where neither ray
    meets the bounds stays at ``x0``.
    """
    x, x0, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, x0, b)))
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape)
    lo_edge, hi_edge = _edges(x0, b)
    has_low = lo_edge >= lower
    has_high = hi_edge <= upper
    cand_low = np.clip(x, lower, np.maximum(lo_edge, lower))
    cand_high = np.clip(x, np.minimum(hi_edge, upper), upper)
    # the two rays are equidistant exactly at b, so the side of b decides;
    # comparing rounded distances would break exact ties arbitrarily
    pick_high = np.where(x == b, x0 >= b, x > b)
    out = np.where(pick_high, cand_high, cand_low)
    out = np.where(has_low & ~has_high, cand_low, out)
    out = np.where(has_high & ~has_low, cand_high, out)
    out = np.where(~has_low & ~has_high, x0, out)
    return out


def _sample_feasible(kind, x0, b, lower, upper, rng) -> np.ndarray:
    lo_edge, hi_edge = _edges(x0, b)
    if kind == PP:
        lo = np.maximum(lo_edge, lower)
        hi = np.maximum(np.minimum(hi_edge, upper), lo)
        return lo + rng.random(x0.size) * (hi - lo)
    low_len = np.clip(lo_edge - lower, 0.0, None)
    high_len = np.clip(upper - hi_edge, 0.0, None)
    total = low_len + high_len
    t = rng.random(x0.size) * total
    out = np.where(t < low_len, lower + t, hi_edge + (t - low_len))
    return np.where(total > 0, out, x0)


# --------------------------------------------------------------------------- search


@dataclass
class CandidateResult:
    """Best pertinent positive or negative found by :func:`solve`.

    ``point`` and ``delta`` are in the encoded space, with categorical
    coordinates snapped to the values the model actually saw.
    """

    kind: str
    t0: int
    point: np.ndarray
    delta: np.ndarray
    record: tuple
    predicted: int
    valid: bool
    hinge: float
    l1: float
    l2: float
    queries_used: int
    iterations: int
    restarts_used: int
    c_final: float
    reason: str | None = None


class _CountingModel:
    """Per-solve query counter around a shared model handle."""

    def __init__(self, model):
        self.model = model
        self.count = 0

    def predict_scores(self, records):
        records = list(records)
        self.count += len(records)
        return self.model.predict_scores(records)


def _project(kind, space, x, x0e, b, lower, upper, supports):
    project = project_pp if kind == PP else project_pn
    box = space.real_mask if space.blocks else slice(None)
    out = np.array(x, dtype=float, copy=True)
    out[box] = project(out[box], x0e[box], b[box], lower[box], upper[box])
    for (_, sl), allowed in zip(space.blocks, supports):
        seg = np.zeros(sl.stop - sl.start)
        seg[allowed] = simplex_project(out[sl][allowed])
        out[sl] = seg
    return out


def _block_supports(kind, space, x0e, b):
    """Allowed categorical values per simplex block.

    A positive may only keep the input's value or fall back to the base
    value; a negative may take any value unless that moves it to the base.
    """
    supports = []
    for _, sl in space.blocks:
        own = int(np.argmax(x0e[sl]))
        base = int(np.argmax(b[sl]))
        n = sl.stop - sl.start
        if kind == PP:
            allowed = np.array(sorted({own, base}))
        elif own == base:
            allowed = np.arange(n)
        else:
            allowed = np.array([j for j in range(n) if j != base])
        supports.append(allowed)
    return supports


def make_space(schema, fmap, cfg: SolverConfig):
    return EncodedSpace(schema, fmap) if cfg.engine == "fma" else SimplexSpace(schema, cfg.ssa_samples)


def solve(kind: str, x0, t0: int | None, model, space, cfg: SolverConfig,
          density: Callable[[np.ndarray], np.ndarray] | None = None,
          gradient: Callable[[np.ndarray], np.ndarray] | None = None) -> CandidateResult:
    """Search for a pertinent positive (``kind="pp"``) or negative (``"pn"``).

    Runs ``cfg.iterations`` steps of projected FISTA from ``delta = 0`` and
    from ``cfg.restarts`` random feasible starts. Every iterate is scored
    once; among those that keep (PP) or change (PN) the predicted class the
    sparsest one in elastic-net terms is returned. When none qualifies the
    loss weight ``c`` is multiplied by ``cfg.c_factor`` and the search is
    repeated, up to ``cfg.c_rounds`` times.

    ``density`` adds ``-gamma * density(x)`` to the objective. ``gradient``
    replaces the query-based estimate of the smooth part (test use only).
    """
    if kind not in (PP, PN):
        raise ValueError(f"kind must be 'pp' or 'pn', not {kind!r}")
    counted = _CountingModel(model)
    rng = np.random.default_rng(cfg.seed)
    x0_record = tuple(x0)
    x0e = space.encode(x0_record)
    if t0 is None:
        t0 = int(np.argmax(counted.predict_scores([x0_record])[0]))
    b = space.base
    lower = np.minimum(space.lower, x0e)
    upper = np.maximum(space.upper, x0e)
    center = b if kind == PP else x0e
    mu = cfg.grad.mu if cfg.grad.mu is not None else (
        TREE_MU if getattr(model, "piecewise_constant", False) else DEFAULT_MU)
    grad_cfg = GradConfig(q=cfg.grad.q, mu=mu)
    hinge = hinge_pp if kind == PP else hinge_pn
    supports = _block_supports(kind, space, x0e, b)

    def project(x):
        return _project(kind, space, x, x0e, b, lower, upper, supports)

    def is_valid(pred):
        return pred == t0 if kind == PP else pred != t0

    pool: list[tuple] = []
    c = cfg.c
    rounds_run = 0
    for rnd in range(cfg.c_rounds):
        c = cfg.c * cfg.c_factor ** rnd
        rounds_run = rnd + 1
        pool = []

        def objective(X, c=c):
            X = np.atleast_2d(X)
            val = c * hinge(space.query(counted, X, rng), t0, cfg.kappa)
            val = val + np.sum((X - center) ** 2, axis=1)
            if density is not None and cfg.gamma:
                val = val - cfg.gamma * np.asarray(density(X), dtype=float)
            return val

        for start in range(cfg.restarts + 1):
            if start == 0:
                x = x0e.copy()
            else:
                x = project(_sample_feasible(kind, x0e, b, lower, upper, rng))
                for (_, sl), allowed in zip(space.blocks, supports):
                    w = np.zeros(sl.stop - sl.start)
                    w[allowed] = rng.dirichlet(np.ones(len(allowed)))
                    x[sl] = w
            y = x.copy()
            for k in range(cfg.iterations):
                if gradient is None:
                    g = estimate_gradient(objective, y, grad_cfg, rng, lower, upper)
                else:
                    g = gradient(y)
                z = y - cfg.alpha * g
                x_new = project(center + shrink(z - center, cfg.alpha * cfg.beta))
                y = project(x_new + k / (k + 3.0) * (x_new - x))
                x = x_new
                snapped = space.snap(x)
                s = space.query(counted, snapped[None, :], rng)[0]
                pred = int(np.argmax(s))
                v = snapped - center
                score = cfg.beta * np.abs(v).sum() + np.sum(v * v)
                pool.append((is_valid(pred), score, float(hinge(s, t0, cfg.kappa)), snapped, pred))
        if any(p[0] for p in pool):
            break

    valid = [p for p in pool if p[0]]
    if valid:
        best = min(valid, key=lambda p: p[1])
        reason = None
    else:
        best = min(pool, key=lambda p: (p[2], p[1]))
        reason = ("no iterate kept the predicted class" if kind == PP
                  else "no iterate changed the predicted class")
    point = best[3]
    record = _to_record(space, point, x0e, b, x0_record)
    # final check on the exact record that will be reported
    final = counted.predict_scores([record])[0]
    pred = int(np.argmax(final))
    ok = bool(valid) and is_valid(pred)
    if valid and not ok:
        reason = "final verification query disagreed with the search"
    v = point - center
    return CandidateResult(
        kind=kind, t0=t0, point=point, delta=point - x0e, record=record, predicted=pred,
        valid=ok, hinge=float(hinge(final, t0, cfg.kappa)), l1=float(np.abs(v).sum()),
        l2=float(np.sum(v * v)), queries_used=counted.count,
        iterations=cfg.iterations * (cfg.restarts + 1) * rounds_run,
        restarts_used=cfg.restarts, c_final=float(c), reason=reason,
    )


def _to_record(space, point, x0e, b, x0_record) -> tuple:
    """Decode ``point``, reusing exact raw values where a real coordinate sits at x0 or b."""
    rec = list(space.decode(point))
    schema = space.schema
    coords = range(schema.d) if not space.blocks else range(len(space.real_positions))
    for k in coords:
        i = k if not space.blocks else space.real_positions[k]
        f = schema.features[i]
        if not f.is_real:
            continue
        if point[k] == x0e[k]:
            rec[i] = float(x0_record[i])
        elif point[k] == b[k]:
            rec[i] = float(f.base)
    return tuple(rec)
