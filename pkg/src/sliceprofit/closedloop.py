"""Closed-loop allocation: deployed slices feed back into KPI demands.

Serving customers changes the environment (interference, offered load), so
the KPI vectors the allocation was optimised for drift with the deployed
sizes. The loop alternates an open-loop solve with a damped environment
update until the KPI matrix reaches a fixed point; non-convergence is
reported, not raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import ConfigurationError
from .orthogonal import SolveResult, solve_objective_sum


@dataclass(frozen=True, eq=False)
class EnvironmentModel:
    """Linear size coupling around baseline KPIs.

    response[i, l] = baseline[i, l] * (1 + sum_k gamma[i, l, k] * size_k),
    with gamma[i, :, i] forced to zero (no self-coupling).
    """

    baseline: np.ndarray
    gamma: np.ndarray
    damping: float = 1.0
    tol: float = 1e-6
    max_iter: int = 50

    def __post_init__(self):
        baseline = np.asarray(self.baseline, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        if baseline.ndim != 2:
            raise ConfigurationError("baseline KPIs must be an (M, L) matrix")
        m, l = baseline.shape
        if gamma.shape != (m, l, m):
            raise ConfigurationError("coupling tensor must have shape (M, L, M)")
        if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
            raise ConfigurationError("coupling rates must be finite and non-negative")
        for i in range(m):
            if np.any(gamma[i, :, i] != 0):
                raise ConfigurationError("self-coupling rates must be zero")
        if not (0.0 < self.damping <= 1.0):
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "gamma", gamma)


def environment_response(env: EnvironmentModel, sizes) -> np.ndarray:
    """KPI matrix induced by deployed sizes."""
    sizes = np.asarray(sizes, dtype=float)
    if sizes.shape != (env.gamma.shape[2],):
        raise ConfigurationError("sizes length must match the coupling tensor")
    lift = np.einsum("ilk,k->il", env.gamma, sizes)
    return env.baseline * (1.0 + lift)


def residual(k_a: np.ndarray, k_b: np.ndarray) -> float:
    """Max relative deviation between two KPI matrices."""
    k_a = np.asarray(k_a, dtype=float)
    k_b = np.asarray(k_b, dtype=float)
    if k_a.shape != k_b.shape:
        raise ConfigurationError("KPI matrices must have equal shape")
    return float(np.max(np.abs(k_a - k_b) / np.maximum(1.0, np.abs(k_b))))


def solve_closed_loop(
    scenario,
    inner_solver: Optional[Callable] = None,
    env: Optional[EnvironmentModel] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    damping: Optional[float] = None,
) -> SolveResult:
    """Damped fixed-point iteration over the KPI matrix.

    Each step re-solves the scenario at the current KPIs, measures the
    environment response to the resulting sizes and blends it in. Stops when
    the max relative KPI change falls below tol; otherwise runs max_iter
    steps and flags converged=False in the metadata.
    """
    env = env if env is not None else scenario.environment
    if env is None:
        raise ConfigurationError("scenario declares no environment model")
    inner = inner_solver if inner_solver is not None else solve_objective_sum
    tol = env.tol if tol is None else tol
    max_iter = env.max_iter if max_iter is None else max_iter
    lam = env.damping if damping is None else damping
    if not (0.0 < lam <= 1.0):
        raise ConfigurationError("damping must lie in (0, 1]")
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("tol must be positive and max_iter at least 1")

    kpis = env.baseline
    trace = []
    converged = False
    result = None
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        result = inner(scenario.with_kpis(kpis))
        raw = environment_response(env, np.asarray(result.sizes))
        nxt = (1.0 - lam) * kpis + lam * raw
        step = residual(nxt, kpis)
        trace.append(step)
        kpis = nxt
        if step < tol:
            converged = True
            break
    meta = dict(result.meta)
    meta.update(
        solver="closed-loop",
        inner=result.meta.get("solver"),
        iterations=iterations,
        converged=converged,
        residuals=trace,
        kpis=kpis,
    )
    return SolveResult(result.sizes, result.outcome, result.scheme, meta)
