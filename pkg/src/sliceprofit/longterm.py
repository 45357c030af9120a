"""Long-term operation: periodic re-optimisation against drifting demand.

Scenario parameters (customer base, price, KPI scale) follow a discrete
trace over a horizon. The allocation is re-solved every `period` epochs and
held in between; held configurations are evaluated against each epoch's true
parameters, losing the revenue of violating slices when drift makes them
infeasible while their expenditure persists. Each re-solve costs a
reconfiguration fee, giving the classic freshness/cost trade-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .model import (
    FEASIBILITY_TOL,
    ConfigurationError,
    InfeasibleScenarioError,
    check_feasible,
    slice_breakdown,
)
from .orthogonal import solve_objective_sum


@dataclass(frozen=True, eq=False)
class DemandTrace:
    """Per-epoch parameter series keyed by slice id; missing keys mean the
    parameter stays at its scenario value."""

    horizon: int
    customer_size: dict
    price: dict
    kpi_scale: dict

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("trace horizon must be at least 1")
        for name in ("customer_size", "price", "kpi_scale"):
            series = getattr(self, name)
            for slice_id, values in series.items():
                vals = tuple(float(v) for v in values)
                if len(vals) != self.horizon:
                    raise ConfigurationError(
                        f"trace {name}[{slice_id}] must have {self.horizon} entries"
                    )
                if any(not math.isfinite(v) or v < 0 for v in vals):
                    raise ConfigurationError(
                        f"trace {name}[{slice_id}] must be finite and non-negative"
                    )
                series[slice_id] = vals


@dataclass(frozen=True)
class ReconfigCostModel:
    cost_per_update: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.cost_per_update) and self.cost_per_update >= 0):
            raise ConfigurationError("cost_per_update must be non-negative")


@dataclass(frozen=True, eq=False)
class HorizonResult:
    profits: tuple          # realized total per epoch
    update_count: int
    update_epochs: tuple
    failed_epochs: tuple    # epochs covered by a failed re-solve
    violation_epochs: tuple # epochs where the held config went infeasible


def epoch_scenario(scenario, trace: DemandTrace, t: int):
    """Scenario with epoch-t parameters applied."""
    if not (0 <= t < trace.horizon):
        raise ConfigurationError("epoch index outside the trace horizon")
    new_specs = []
    for spec in scenario.specs:
        c = trace.customer_size.get(spec.id, (None,) * trace.horizon)[t]
        p = trace.price.get(spec.id, (None,) * trace.horizon)[t]
        scale = trace.kpi_scale.get(spec.id, (None,) * trace.horizon)[t]
        kpi = spec.kpi if scale is None else spec.kpi * scale
        new_specs.append(
            replace(
                spec,
                kpi=kpi,
                customer_size=spec.customer_size if c is None else c,
                price=spec.price if p is None else p,
            )
        )
    return scenario.with_specs(tuple(new_specs))


def _realized(scenario_t, sizes) -> tuple:
    """(epoch profit, feasible) of a held size vector. Violating slices earn
    nothing but still pay for what they consume; a slice violates by sitting
    on an over-capacity resource or missing its own reservation."""
    specs, scheme, pool = scenario_t.specs, scenario_t.scheme, scenario_t.pool
    revs, exps, alloc = slice_breakdown(specs, scheme, pool, sizes)
    feasible, violations = check_feasible(alloc, scheme, pool, specs)
    if feasible:
        return float(np.sum(revs - exps)), True
    over = {v.resource for v in violations if v.kind == "pool"}
    violators = {v.slice for v in violations if v.kind == "minimum"}
    for i in range(len(specs)):
        if any(alloc.resources[i, j] > FEASIBILITY_TOL for j in over):
            violators.add(i)
    revs = revs.copy()
    for i in violators:
        revs[i] = 0.0
    return float(np.sum(revs - exps)), False


def simulate_horizon(scenario, trace: DemandTrace, period: int,
                     inner_solver: Optional[Callable] = None) -> HorizonResult:
    """Re-solve at epochs 0, period, 2*period, ... and hold in between."""
    if period < 1 or period > trace.horizon:
        raise ConfigurationError("period must lie in [1, horizon]")
    inner = inner_solver if inner_solver is not None else solve_objective_sum
    profits = []
    updates = []
    failed = []
    violating = []
    sizes = None
    solve_ok = False
    for t in range(trace.horizon):
        scn_t = epoch_scenario(scenario, trace, t)
        if t % period == 0:
            updates.append(t)
            try:
                sizes = inner(scn_t).sizes
                solve_ok = True
            except InfeasibleScenarioError:
                sizes = None
                solve_ok = False
        if not solve_ok:
            failed.append(t)
            profits.append(0.0)
            continue
        value, feas = _realized(scn_t, sizes)
        if not feas:
            violating.append(t)
        profits.append(value)
    return HorizonResult(
        profits=tuple(profits),
        update_count=len(updates),
        update_epochs=tuple(updates),
        failed_epochs=tuple(failed),
        violation_epochs=tuple(violating),
    )


def evaluate_period(scenario, trace: DemandTrace, period: int,
                    cost: ReconfigCostModel,
                    inner_solver: Optional[Callable] = None) -> float:
    """Net horizon profit for one update period: realized sum minus
    ceil(T / period) reconfiguration fees."""
    sim = simulate_horizon(scenario, trace, period, inner_solver)
    assert sim.update_count == math.ceil(trace.horizon / period)
    return float(sum(sim.profits) - sim.update_count * cost.cost_per_update)


def optimize_period(scenario, trace: DemandTrace, candidates: Sequence[int],
                    cost: ReconfigCostModel,
                    inner_solver: Optional[Callable] = None):
    """Best update period among the candidates (ties to the smallest) plus
    the full evaluation table."""
    periods = sorted(set(int(p) for p in candidates))
    if not periods:
        raise ConfigurationError("candidate period list must not be empty")
    for p in periods:
        if p < 1 or p > trace.horizon:
            raise ConfigurationError("candidate periods must lie in [1, horizon]")
    table = []
    best = None
    for p in periods:
        sim = simulate_horizon(scenario, trace, p, inner_solver)
        realized = float(sum(sim.profits))
        net = realized - sim.update_count * cost.cost_per_update
        table.append(
            {
                "period": p,
                "realized_total": realized,
                "update_count": sim.update_count,
                "net_total": net,
            }
        )
        if best is None or net > best[1]:
            best = (p, net)
    return best[0], table
