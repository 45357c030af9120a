"""Size optimisation for a fixed scheme.

The default profit model is piecewise linear: revenue is linear up to the
customer base and expenditure is affine in size, while shared-mode pool
constraints reduce to per-slice rows (max <= cap is row-wise cap). The size
step is therefore solved exactly as a linear program, followed by a
lexicographic polish so ties always resolve to the smallest size vector.
brute_force_oracle is an independent dense-grid enumerator kept free of any
LP machinery; tests cross-check the two routes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .model import (
    BudgetExceededError,
    ConfigurationError,
    InfeasibleScenarioError,
    ResourcePool,
    SliceSpec,
    VnfScheme,
    FEASIBILITY_TOL,
    SHARED,
    build_allocation,
    check_feasible,
    evaluate,
    min_size,
    unit_demand,
)

# Activation overhead makes profit discontinuous at size 0; solvers branch
# over the active set for slices that could stay off. Guard the blow-up.
_MAX_ACTIVATION_BRANCHES = 4096

DEFAULT_ORACLE_BUDGET = 2_000_000


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Solver output: sizes, their evaluated outcome, the scheme used and
    solver metadata (id, iterations, traces)."""

    sizes: tuple
    outcome: object
    scheme: VnfScheme
    meta: dict = field(default_factory=dict)

    @property
    def total_profit(self) -> float:
        return self.outcome.total_profit


def validate_weights(weights, n_slices: int) -> np.ndarray:
    arr = np.asarray(weights, dtype=float)
    if arr.shape != (n_slices,):
        raise ConfigurationError(f"weights must have length {n_slices}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ConfigurationError("weights must be finite and strictly positive")
    return arr


def size_bounds(specs: Sequence[SliceSpec], scheme: VnfScheme):
    """Per-slice [lo, hi] search box: lo from reservations, hi at the
    customer base (profit never improves past it under the default model)."""
    lo = np.array([min_size(spec, scheme) for spec in specs])
    if np.any(np.isinf(lo)):
        bad = [specs[i].id for i in np.where(np.isinf(lo))[0]]
        raise InfeasibleScenarioError(
            f"slices {bad} reserve resources their demand map never produces"
        )
    hi = np.array([max(spec.customer_size, l) for spec, l in zip(specs, lo)])
    return lo, hi


def _lp_rows(unit: np.ndarray, overhead: np.ndarray, active: np.ndarray,
             pool: ResourcePool, sharing) -> tuple:
    """Build A_ub, b_ub for pool constraints over active slices only.

    Returns None when constant overhead alone already breaks a capacity.
    """
    m, n = unit.shape
    rows, rhs = [], []
    act = np.where(active)[0]
    for j in range(n):
        if sharing[j] == SHARED:
            for i in act:
                cap = pool.capacity[j] - overhead[i, j]
                if cap < -FEASIBILITY_TOL:
                    return None
                if unit[i, j] > 0:
                    coef = np.zeros(m)
                    coef[i] = unit[i, j]
                    rows.append(coef)
                    rhs.append(cap)
        else:
            cap = pool.capacity[j] - overhead[act, j].sum()
            if cap < -FEASIBILITY_TOL:
                return None
            coef = np.zeros(m)
            coef[act] = unit[act, j]
            if np.any(coef > 0):
                rows.append(coef)
                rhs.append(cap)
    if not rows:
        return np.zeros((0, m)), np.zeros(0)
    return np.vstack(rows), np.array(rhs)


def _lex_polish(obj: np.ndarray, a_ub, b_ub, bounds, best_x, best_val):
    """Among optima of obj, pick the lexicographically smallest point by
    minimising one coordinate at a time subject to near-optimality."""
    m = len(best_x)
    slack = 1e-9 * max(1.0, abs(best_val))
    a_opt = np.vstack([a_ub, -obj]) if a_ub.size else (-obj).reshape(1, -1)
    b_opt = np.append(b_ub, -(best_val - slack))
    x = np.array(best_x, dtype=float)
    fixed = list(bounds)
    nit = 0
    for i in range(m):
        c = np.zeros(m)
        c[i] = 1.0
        res = linprog(c, A_ub=a_opt, b_ub=b_opt, bounds=fixed, method="highs")
        if not res.success:
            break  # keep the unpolished optimum rather than fail
        nit += int(res.nit)
        x = res.x
        fixed[i] = (x[i], x[i])
    return x, nit


def solve_sizes(specs: Sequence[SliceSpec], scheme: VnfScheme, pool: ResourcePool,
                weights=None) -> tuple:
    """Exact size vector maximising the (weighted) profit sum for a fixed
    scheme. Returns (sizes, iterations). Raises InfeasibleScenarioError when
    reservations cannot be met inside the pool."""
    m = len(specs)
    if m == 0:
        raise ConfigurationError("scenario must contain at least one slice")
    if weights is None:
        w = np.ones(m)
    else:
        w = validate_weights(weights, m)
    # Normalising by the max makes scaled weight vectors bit-identical inputs,
    # so the argmax is exactly invariant under positive scaling.
    w = w / w.max()

    unit = np.stack([unit_demand(spec, scheme) for spec in specs])
    overhead = scheme.overhead
    lo, hi = size_bounds(specs, scheme)
    margins = np.array(
        [spec.price - float(np.dot(unit[i], pool.unit_cost)) for i, spec in enumerate(specs)]
    )
    obj = w * margins

    # Slices that may legitimately stay off and carry overhead create an
    # activation choice; enumerate it, everything else is one LP.
    free = [i for i in range(m) if lo[i] == 0 and overhead[i].any()]
    if len(free) > 12 or 2 ** len(free) > _MAX_ACTIVATION_BRANCHES:
        raise BudgetExceededError(
            "too many overhead activation branches", 2 ** len(free), _MAX_ACTIVATION_BRANCHES
        )

    best = None
    nit_total = 0
    for pattern in itertools.product((True, False), repeat=len(free)):
        active = np.ones(m, dtype=bool)
        for flag, i in zip(pattern, free):
            active[i] = flag
        built = _lp_rows(unit, overhead, active, pool, scheme.sharing)
        if built is None:
            continue
        a_ub, b_ub = built
        bounds = [
            (lo[i], hi[i]) if active[i] else (0.0, 0.0) for i in range(m)
        ]
        res = linprog(-obj, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status == 2:
            continue
        if not res.success:
            raise RuntimeError(f"size LP failed: {res.message}")
        nit_total += int(res.nit)
        x, nit = _lex_polish(obj, a_ub, b_ub, bounds, res.x, float(obj @ res.x))
        nit_total += nit
        x = np.clip(x, [b[0] for b in bounds], [b[1] for b in bounds])
        x[np.abs(x) < 1e-12] = 0.0
        # Rank branches by the true (step-function) weighted profit.
        revs = np.array([spec.price * min(s, spec.customer_size) for spec, s in zip(specs, x)])
        alloc = build_allocation(specs, scheme, x)
        true_val = float(np.dot(w, revs - alloc.resources @ pool.unit_cost))
        if best is None or true_val > best[0] + 1e-12:
            best = (true_val, x)
    if best is None:
        alloc = build_allocation(specs, scheme, lo)
        _, violations = check_feasible(alloc, scheme, pool, specs)
        raise InfeasibleScenarioError(
            "minimum reservations exceed the pool capacity", violations
        )
    return best[1], nit_total


def _result(scenario, sizes, scheme, solver_id, iterations, **extra) -> SolveResult:
    outcome = evaluate(scenario, sizes, scheme)
    meta = {"solver": solver_id, "iterations": int(iterations)}
    meta.update(extra)
    return SolveResult(tuple(float(s) for s in sizes), outcome, scheme, meta)


def solve_objective_sum(scenario) -> SolveResult:
    """Maximise the plain profit sum over sizes for the base scheme."""
    sizes, nit = solve_sizes(scenario.specs, scenario.scheme, scenario.pool)
    return _result(scenario, sizes, scenario.scheme, "objective-sum", nit)


def solve_weighted_sum(scenario, weights) -> SolveResult:
    """Maximise a positively weighted profit sum; scaling all weights by a
    common factor leaves the argmax unchanged."""
    w = validate_weights(weights, len(scenario.specs))
    sizes, nit = solve_sizes(scenario.specs, scenario.scheme, scenario.pool, weights=w)
    res = _result(scenario, sizes, scenario.scheme, "weighted-sum", nit)
    res.meta["weights"] = tuple(float(x) for x in w)
    res.meta["weighted_objective"] = float(
        np.dot(w, res.outcome.profits)
    )
    return res


def oracle_gap_bound(scenario, grid_step: float) -> float:
    """Worst-case optimum underestimate of the grid oracle: one step of the
    summed profit slopes."""
    total = 0.0
    for spec in scenario.specs:
        u = unit_demand(spec, scenario.scheme)
        total += abs(spec.price) + float(np.dot(u, scenario.pool.unit_cost))
    return grid_step * total


def brute_force_oracle(scenario, grid_step: float, weights=None,
                       budget: int = DEFAULT_ORACLE_BUDGET) -> SolveResult:
    """Dense-grid reference optimiser, independent of the LP route.

    Evaluates every point of {0, step, 2 step, ...}^M inside per-axis upper
    bounds and returns the feasible maximiser, ties resolved to the
    lexicographically smallest size vector. Refuses (with the required
    budget) rather than run unbounded enumerations.
    """
    if not (math.isfinite(grid_step) and grid_step > 0):
        raise ConfigurationError("grid_step must be positive")
    specs, scheme, pool = scenario.specs, scenario.scheme, scenario.pool
    m = len(specs)
    if weights is None:
        w = np.ones(m)
    else:
        w = validate_weights(weights, m)
    w = w / w.max()

    unit = np.stack([unit_demand(spec, scheme) for spec in specs])
    lo, hi = size_bounds(specs, scheme)
    axes = []
    n_points = 1
    for i, spec in enumerate(specs):
        implied = math.inf
        for j in range(pool.n_resources):
            if unit[i, j] > 0:
                implied = min(implied, (pool.capacity[j] - scheme.overhead[i, j]) / unit[i, j])
        ub = max(spec.customer_size, lo[i], 0.0 if math.isinf(implied) else implied)
        count = int(math.floor(ub / grid_step + 1e-9)) + 1
        axes.append(np.arange(count) * grid_step)
        n_points *= count
    if n_points > budget:
        raise BudgetExceededError(
            f"grid of {n_points} points exceeds the oracle budget of {budget}",
            n_points, budget,
        )

    grids = np.meshgrid(*axes, indexing="ij")
    sizes = np.stack([g.ravel() for g in grids])  # (M, P), C order is lex order
    active = sizes > 0

    feasible = np.ones(sizes.shape[1], dtype=bool)
    rows = np.empty((m, pool.n_resources, sizes.shape[1]))
    for i in range(m):
        for j in range(pool.n_resources):
            rows[i, j] = sizes[i] * unit[i, j] + active[i] * scheme.overhead[i, j]
    for j in range(pool.n_resources):
        usage = rows[:, j, :].max(axis=0) if scheme.sharing[j] == SHARED else rows[:, j, :].sum(axis=0)
        feasible &= usage <= pool.capacity[j] + FEASIBILITY_TOL * max(1.0, pool.capacity[j])
    for i, spec in enumerate(specs):
        for j in range(pool.n_resources):
            floor = spec.min_resources[j]
            if floor > 0:
                feasible &= rows[i, j] >= floor - FEASIBILITY_TOL * max(1.0, floor)

    if not feasible.any():
        raise InfeasibleScenarioError("no grid point satisfies the constraints")

    value = np.zeros(sizes.shape[1])
    for i, spec in enumerate(specs):
        rev = spec.price * np.minimum(sizes[i], spec.customer_size)
        exp = np.tensordot(pool.unit_cost, rows[i], axes=(0, 0))
        value += w[i] * (rev - exp)
    value[~feasible] = -np.inf
    pick = int(np.argmax(value))  # first max = lex smallest in C order
    best = sizes[:, pick]
    return _result(
        scenario, best, scheme, "oracle", n_points,
        grid_step=float(grid_step), points=int(n_points),
    )
