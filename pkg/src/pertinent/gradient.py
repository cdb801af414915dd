"""Gradient estimates from function values along random unit directions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_MU = 0.1
TREE_MU = 0.5

Objective = Callable[[np.ndarray], np.ndarray]


class NonFiniteObjective(ValueError):
    def __init__(self, point: np.ndarray):
        self.point = np.array(point)
        super().__init__(f"objective is not finite at {self.point.tolist()}")


@dataclass(frozen=True)
class GradConfig:
    """``q`` random directions per estimate and smoothing radius ``mu``.

    ``mu=None`` means 0.1, or 0.5 when the solver is explaining a
    piecewise-constant model.
    """

    q: int = 50
    mu: float | None = None

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be > 0")


def unit_directions(rng: np.random.Generator, q: int, d: int) -> np.ndarray:
    """``q`` directions drawn uniformly from the unit sphere in R^d."""
    u = rng.standard_normal((q, d))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    # a zero draw has probability zero, but keep the result on the sphere anyway
    bad = norms[:, 0] == 0
    if bad.any():
        u[bad] = np.eye(d)[0]
        norms[bad] = 1.0
    return u / norms


def estimate_gradient(f: Objective, x: np.ndarray, cfg: GradConfig, rng: np.random.Generator,
                      lower: np.ndarray | None = None, upper: np.ndarray | None = None,
                      directions: np.ndarray | None = None) -> np.ndarray:
    """Two-point random-direction estimate of the gradient of ``f`` at ``x``.

    ``f`` is vectorized: it maps an ``(n, d)`` array of points to ``n``
    values. It is called once on ``x`` stacked with the ``q`` probes
    ``x + mu * u_j`` (clamped to ``[lower, upper]`` when given), and the
    estimate is ``(d / q) * sum_j (f(x + mu u_j) - f(x)) / mu * u_j``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    mu = DEFAULT_MU if cfg.mu is None else cfg.mu
    u = unit_directions(rng, cfg.q, d) if directions is None else np.asarray(directions, dtype=float)
    probes = x + mu * u
    if lower is not None or upper is not None:
        probes = np.clip(probes, lower, upper)
    values = np.asarray(f(np.vstack([x[None, :], probes])), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise NonFiniteObjective(x if j == 0 else probes[j - 1])
    diffs = (values[1:] - values[0]) / mu
    return (d / len(u)) * (diffs @ u)


def empirical_mse(f: Objective, grad_f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                  cfg: GradConfig, trials: int, rng: np.random.Generator) -> float:
    """Monte-Carlo mean of ``||estimate - grad_f(x)||^2`` over ``trials`` estimates."""
    true = np.asarray(grad_f(np.asarray(x, dtype=float)), dtype=float)
    errs = [np.sum((estimate_gradient(f, x, cfg, rng) - true) ** 2) for _ in range(trials)]
    return float(np.mean(errs))
