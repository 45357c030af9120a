"""Resource market between slice operators.

Operators own resource pools and slice portfolios. A price-driven market
lets them lease capacity to each other: each round every operator best-
responds to posted prices with a net lease vector from its declared grid,
and prices rise with excess demand until the market clears. The outcome can
be checked for Nash stability on the same grids and compared against the
cooperative benchmark where one owner allocates the merged pool centrally.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    DEDICATED,
    BudgetExceededError,
    ConfigurationError,
    InfeasibleScenarioError,
    ResourcePool,
    VnfScheme,
    build_allocation,
    pool_usage,
    slice_breakdown,
)
from .orthogonal import solve_sizes
from . import multiplex


@dataclass(frozen=True, eq=False)
class Operator:
    """One market participant: private pool, portfolio and scheme."""

    id: str
    pool: ResourcePool
    specs: tuple
    scheme: VnfScheme


@dataclass(frozen=True, eq=False)
class OperatorPartition:
    """Scenario-level assignment of slices and pool shares to an operator."""

    id: str
    slice_ids: tuple
    capacity: np.ndarray
    unit_cost: np.ndarray


@dataclass(frozen=True, eq=False)
class MarketConfig:
    """Traded resource indices, tatonnement parameters and per-operator
    lease grids: grids[op_id][resource_index] is an array of candidate net
    leases (positive = lease in). Every grid must contain 0 so staying out
    of the market is always available."""

    traded: tuple
    eta: float
    price0: np.ndarray
    tol: float = 1e-3
    max_rounds: int = 100
    grids: dict = field(default_factory=dict)

    def __post_init__(self):
        traded = tuple(int(j) for j in self.traded)
        if not traded or len(set(traded)) != len(traded):
            raise ConfigurationError("traded resources must be a non-empty unique list")
        price0 = np.asarray(self.price0, dtype=float)
        if price0.shape != (len(traded),):
            raise ConfigurationError("price0 must give one price per traded resource")
        if np.any(price0 < 0) or not np.all(np.isfinite(price0)):
            raise ConfigurationError("price0 must be finite and non-negative")
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ConfigurationError("eta must be non-negative")
        if self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.max_rounds < 1:
            raise ConfigurationError("max_rounds must be at least 1")
        object.__setattr__(self, "traded", traded)
        object.__setattr__(self, "price0", price0)


@dataclass(frozen=True, eq=False)
class BestResponse:
    net_lease: np.ndarray  # aligned with market.traded
    internal_profit: float
    objective: float
    sizes: tuple


@dataclass(frozen=True, eq=False)
class TradeOutcome:
    prices: np.ndarray
    net_lease: dict       # op id -> executed net lease (aligned with traded)
    profits: dict         # op id -> internal + lease income - lease payment
    internal: dict
    income: dict
    payment: dict
    no_trade: dict        # op id -> profit when abstaining
    converged: bool
    rounds: int
    trace: tuple          # (prices, excess demand) per round


@dataclass(frozen=True, eq=False)
class NashVerdict:
    is_nash: bool
    best_deviation: Optional[tuple]  # (op id, net lease tuple, gain)


@dataclass(frozen=True, eq=False)
class SubOperatorResult:
    result: object        # SolveResult of the centralized solve
    split: dict           # sub id -> summed profit of its slices


def _internal(operator: Operator, extra) -> Optional[tuple]:
    """Operator's optimal internal allocation with `extra` added to the
    capacity of the traded resources. Returns (total, sizes) or None."""
    capacity = operator.pool.capacity + extra
    if np.any(capacity < 0):
        return None
    # ResourcePool insists on positive capacity; a fully leased-out resource
    # keeps an epsilon so the pool stays constructible.
    capacity = np.maximum(capacity, 1e-12)
    pool = ResourcePool(capacity, operator.pool.unit_cost)
    try:
        sizes, _ = solve_sizes(operator.specs, operator.scheme, pool)
    except InfeasibleScenarioError:
        return None
    r, e, _ = slice_breakdown(operator.specs, operator.scheme, pool, sizes)
    return float(np.sum(r - e)), tuple(float(s) for s in sizes)


def default_grid(operator: Operator, market: MarketConfig, points: int = 11) -> dict:
    """Fallback lease grid: +-idle capacity at the standalone optimum."""
    base = _internal(operator, np.zeros(operator.pool.n_resources))
    if base is None:
        return {j: np.array([0.0]) for j in market.traded}
    _, sizes = base
    alloc = build_allocation(operator.specs, operator.scheme, np.asarray(sizes))
    usage = pool_usage(alloc, operator.scheme)
    grids = {}
    for j in market.traded:
        idle = max(float(operator.pool.capacity[j] - usage[j]), 0.0)
        # a saturated pool reads as idle up to solver boundary noise; don't
        # turn that into a tradable sliver
        if idle < 1e-6 * max(1.0, float(operator.pool.capacity[j])):
            idle = 0.0
        pts = np.linspace(-idle, idle, points) if idle > 0 else np.array([0.0])
        pts[np.abs(pts) < 1e-12] = 0.0
        grids[j] = pts
    return grids


def _grid_for(operator: Operator, market: MarketConfig) -> list:
    grids = market.grids.get(operator.id)
    if grids is None:
        grids = default_grid(operator, market)
    axes = []
    for j in market.traded:
        axis = np.asarray(grids[j], dtype=float)
        if not np.any(np.abs(axis) < 1e-12):
            raise ConfigurationError(
                f"lease grid of operator {operator.id} must contain 0"
            )
        axes.append(axis)
    return axes


def best_response(operator: Operator, prices, market: MarketConfig) -> BestResponse:
    """Best net lease vector on the operator's grid at posted prices.

    Maximises internal profit minus lease cost; ties resolve to the
    smallest-norm, then lexicographically smallest vector. Candidates that
    would lease out below the operator's reservation needs are internally
    infeasible and dropped; if nothing is feasible the operator stays out.
    """
    prices = np.asarray(prices, dtype=float)
    axes = _grid_for(operator, market)
    extra_template = np.zeros(operator.pool.n_resources)
    best = None
    for combo in itertools.product(*axes):
        d = np.array(combo)
        extra = extra_template.copy()
        extra[list(market.traded)] = d
        if np.any(operator.pool.capacity + extra < -1e-12):
            continue  # cannot lease out more than the pool holds
        solved = _internal(operator, extra)
        if solved is None:
            continue
        total, sizes = solved
        objective = total - float(np.dot(prices, d))
        key = (-objective, float(np.dot(d, d)), tuple(d))
        if best is None or key < best[0]:
            best = (key, d, total, objective, sizes)
    if best is None:
        zero = np.zeros(len(market.traded))
        return BestResponse(zero, -math.inf, -math.inf, ())
    _, d, total, objective, sizes = best
    return BestResponse(d, total, objective, sizes)


def _ration(responses: dict, traded) -> dict:
    """Scale the long side pro-rata so executed leases net to zero, with the
    last participant absorbing float residue exactly."""
    executed = {op: resp.net_lease.astype(float).copy() for op, resp in responses.items()}
    ids = sorted(executed)
    for idx in range(len(traded)):
        buys = sum(max(executed[o][idx], 0.0) for o in ids)
        sells = sum(max(-executed[o][idx], 0.0) for o in ids)
        if buys == 0.0 or sells == 0.0:
            for o in ids:
                executed[o][idx] = 0.0
            continue
        if buys > sells:
            factor = sells / buys
            for o in ids:
                if executed[o][idx] > 0:
                    executed[o][idx] *= factor
        elif sells > buys:
            factor = buys / sells
            for o in ids:
                if executed[o][idx] < 0:
                    executed[o][idx] *= factor
        residue = sum(executed[o][idx] for o in ids)
        if residue != 0.0:
            side = [o for o in ids if executed[o][idx] < 0] or ids
            executed[side[-1]][idx] -= residue
    return executed


def run_market(operators: Sequence[Operator], market: MarketConfig) -> TradeOutcome:
    """Tatonnement: prices rise with excess demand until |z| <= tol, then
    trades execute at the final prices with pro-rata rationing."""
    ops = sorted(operators, key=lambda o: o.id)
    if len({o.id for o in ops}) != len(ops):
        raise ConfigurationError("operator ids must be unique")
    prices = market.price0.astype(float).copy()
    trace = []
    converged = False
    rounds = 0
    responses = {}
    for _ in range(market.max_rounds):
        rounds += 1
        responses = {o.id: best_response(o, prices, market) for o in ops}
        z = np.sum([responses[o.id].net_lease for o in ops], axis=0)
        trace.append((prices.copy(), z.copy()))
        if float(np.max(np.abs(z))) <= market.tol:
            converged = True
            break
        prices = np.maximum(0.0, prices + market.eta * z)

    executed = _ration(responses, market.traded)
    internal, income, payment, profits = {}, {}, {}, {}
    no_trade = {}
    sellers = [o for o in sorted(executed) if np.any(executed[o] < 0)]
    payments_total = np.zeros(len(market.traded))
    for o in ops:
        d = executed[o.id]
        extra = np.zeros(o.pool.n_resources)
        extra[list(market.traded)] = d
        solved = _internal(o, extra)
        internal[o.id] = solved[0] if solved else 0.0
        payment[o.id] = float(np.dot(prices, np.maximum(d, 0.0)))
        payments_total += prices * np.maximum(d, 0.0)
        base = _internal(o, np.zeros(o.pool.n_resources))
        no_trade[o.id] = base[0] if base else 0.0
    incomes_assigned = np.zeros(len(market.traded))
    for o in ops:
        d = executed[o.id]
        if o.id in sellers and o.id == sellers[-1]:
            income[o.id] = float(np.sum(payments_total - incomes_assigned))
        else:
            vec = prices * np.maximum(-d, 0.0)
            incomes_assigned += vec
            income[o.id] = float(np.sum(vec))
    for o in ops:
        profits[o.id] = internal[o.id] + income[o.id] - payment[o.id]
    return TradeOutcome(
        prices=prices,
        net_lease={o: executed[o] for o in executed},
        profits=profits,
        internal=internal,
        income=income,
        payment=payment,
        no_trade=no_trade,
        converged=converged,
        rounds=rounds,
        trace=tuple(trace),
    )


def verify_nash(operators: Sequence[Operator], outcome: TradeOutcome,
                market: MarketConfig, tolerance: float = 1e-9,
                budget: int = 100_000) -> NashVerdict:
    """Search each operator's grid for a profitable unilateral deviation at
    the outcome's prices. Refuses when the grids exceed the budget."""
    ops = sorted(operators, key=lambda o: o.id)
    required = 0
    axes_by_op = {}
    for o in ops:
        axes = _grid_for(o, market)
        axes_by_op[o.id] = axes
        required += int(np.prod([len(a) for a in axes]))
    if required > budget:
        raise BudgetExceededError(
            f"Nash check needs {required} evaluations, budget is {budget}",
            required, budget,
        )
    best_dev = None
    for o in ops:
        current = outcome.profits[o.id]
        for combo in itertools.product(*axes_by_op[o.id]):
            d = np.array(combo)
            extra = np.zeros(o.pool.n_resources)
            extra[list(market.traded)] = d
            if np.any(o.pool.capacity + extra < -1e-12):
                continue
            solved = _internal(o, extra)
            if solved is None:
                continue
            payoff = solved[0] - float(np.dot(outcome.prices, d))
            gain = payoff - current
            if gain > tolerance and (best_dev is None or gain > best_dev[2]):
                best_dev = (o.id, tuple(float(x) for x in d), float(gain))
    return NashVerdict(is_nash=best_dev is None, best_deviation=best_dev)


def pareto_dominates(profits_a: Sequence[float], profits_b: Sequence[float]) -> bool:
    """True when a is at least b everywhere and better somewhere."""
    a = tuple(float(x) for x in profits_a)
    b = tuple(float(x) for x in profits_b)
    if len(a) != len(b):
        raise ConfigurationError("profit vectors must have equal length")
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def solve_suboperator(main_pool: ResourcePool, sub_portfolios: Sequence[Operator],
                      sharing: Optional[Sequence[str]] = None,
                      sharing_eligible: Sequence[int] = (),
                      cap: Optional[int] = None) -> SubOperatorResult:
    """Cooperative benchmark: merge every sub-operator's portfolio into one
    scenario over the main pool, solve centrally and report the per-sub
    profit split (no transfer design, just the raw split)."""
    all_ids = [spec.id for op in sub_portfolios for spec in op.specs]
    if len(set(all_ids)) != len(all_ids):
        raise ConfigurationError("sub-operator slice ids must be globally unique")
    demand = np.concatenate([op.scheme.demand for op in sub_portfolios])
    overhead = np.concatenate([op.scheme.overhead for op in sub_portfolios])
    if sharing is None:
        sharing = (DEDICATED,) * main_pool.n_resources
    merged_scheme = VnfScheme(tuple(all_ids), demand, overhead, tuple(sharing))
    specs = tuple(spec for op in sub_portfolios for spec in op.specs)

    from .scenario import Scenario  # local import: scenario depends on game types

    merged = Scenario(
        name="suboperator",
        resource_names=tuple(f"r{j}" for j in range(main_pool.n_resources)),
        kpi_names=tuple(f"k{l}" for l in range(demand.shape[2])),
        pool=main_pool,
        specs=specs,
        scheme=merged_scheme,
        sharing_eligible=tuple(sharing_eligible),
    )
    result = multiplex.solve_exhaustive(merged, cap)
    split = {}
    idx = 0
    for op in sub_portfolios:
        total = 0.0
        for _ in op.specs:
            total += result.outcome.profits[idx]
            idx += 1
        split[op.id] = float(total)
    return SubOperatorResult(result=result, split=split)


def build_operators(scenario) -> list:
    """Materialise Operator objects from a scenario's partition block."""
    if not scenario.operators:
        raise ConfigurationError("scenario declares no operators block")
    ops = []
    for part in scenario.operators:
        specs = tuple(s for s in scenario.specs if s.id in part.slice_ids)
        scheme = scenario.scheme.subset([s.id for s in specs])
        pool = ResourcePool(part.capacity, part.unit_cost)
        ops.append(Operator(id=part.id, pool=pool, specs=specs, scheme=scheme))
    return ops
