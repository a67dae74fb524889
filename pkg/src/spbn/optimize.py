"""Derivative-free Nelder-Mead simplex minimizer.

The only optimizer in the package. Objectives may return +inf to reject a
point (used to signal bandwidth candidates outside the SPD cone), which keeps
the search unconstrained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteStart


@dataclass(frozen=True)
class NmConfig:
    """Simplex settings. max_iters of None means 500 * dimension."""

    init_step: float = 0.1
    f_tol: float = 1e-8
    x_tol: float = 1e-8
    max_iters: int | None = None
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5

    def __post_init__(self):
        if self.init_step <= 0:
            raise ValueError("init_step must be positive")
        if self.reflection <= 0:
            raise ValueError("reflection coefficient must be positive")
        if self.expansion <= self.reflection:
            raise ValueError("expansion must exceed reflection")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class NmResult:
    x_min: np.ndarray
    f_min: float
    iterations: int
    converged: bool


def nelder_mead(objective, x0, config: NmConfig = NmConfig()) -> NmResult:
    """Minimize objective from x0; converged means the simplex collapsed
    below f_tol in value spread and x_tol in vertex spread before max_iters."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1 or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite 1-d vector")
    dim = x0.shape[0]
    max_iters = config.max_iters if config.max_iters is not None else 500 * dim

    best_x = None
    best_f = math.inf

    def evaluate(x):
        nonlocal best_x, best_f
        value = float(objective(x))
        if math.isnan(value):
            value = math.inf
        if value < best_f:
            best_f = value
            best_x = x.copy()
        return value

    f0 = float(objective(x0))
    if math.isnan(f0):
        raise NonFiniteStart("objective is NaN at the starting point")
    if f0 < best_f:
        best_f, best_x = f0, x0.copy()

    # Initial simplex: x0 plus one vertex per axis, displaced by a
    # scale-aware step.
    simplex = [x0.copy()]
    values = [f0]
    for i in range(dim):
        vertex = x0.copy()
        vertex[i] += config.init_step * max(abs(x0[i]), 1.0)
        simplex.append(vertex)
        values.append(evaluate(vertex))

    iterations = 0
    converged = False
    while iterations < max_iters:
        order = sorted(range(dim + 1), key=lambda k: values[k])
        simplex = [simplex[k] for k in order]
        values = [values[k] for k in order]

        f_spread = values[-1] - values[0]
        x_spread = max(
            float(np.max(np.abs(simplex[k] - simplex[0]))) for k in range(1, dim + 1)
        )
        # Both spreads must collapse: equal values alone can be a simplex
        # straddling a symmetric minimum, not convergence.
        if f_spread < config.f_tol and x_spread < config.x_tol:
            converged = True
            break

        iterations += 1
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]

        reflected = centroid + config.reflection * (centroid - worst)
        f_reflected = evaluate(reflected)
        if values[0] <= f_reflected < values[-2]:
            simplex[-1], values[-1] = reflected, f_reflected
            continue

        if f_reflected < values[0]:
            expanded = centroid + config.expansion * (centroid - worst)
            f_expanded = evaluate(expanded)
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
            continue

        contracted = centroid + config.contraction * (worst - centroid)
        f_contracted = evaluate(contracted)
        if f_contracted < values[-1]:
            simplex[-1], values[-1] = contracted, f_contracted
            continue

        anchor = simplex[0]
        for k in range(1, dim + 1):
            simplex[k] = anchor + config.shrink * (simplex[k] - anchor)
            values[k] = evaluate(simplex[k])

    order = sorted(range(dim + 1), key=lambda k: values[k])
    x_best_vertex, f_best_vertex = simplex[order[0]], values[order[0]]
    if f_best_vertex <= best_f:
        best_x, best_f = x_best_vertex, f_best_vertex
    if best_x is None:
        best_x, best_f = x0.copy(), f0
    return NmResult(
        x_min=np.asarray(best_x), f_min=best_f, iterations=iterations, converged=converged
    )
