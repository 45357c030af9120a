"""Core profit model for network slices.

A slice serves a customer group with a KPI requirement vector. Its size
(served customer share) together with the per-slice demand matrix maps KPIs
to resource demand; resource demand priced at the pool's unit costs gives
expenditure, price times served customers gives revenue, and profit is the
difference. Everything here is a pure function over value objects; solvers
live in separate modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

DEDICATED = "dedicated"
SHARED = "shared"

# Solver results sit on constraint boundaries up to LP precision, so capacity
# and reservation checks allow this much slack (absolute + relative).
FEASIBILITY_TOL = 1e-9

# Smallest size treated as "active" when minimum reservations are satisfied
# purely by activation overhead.
_TINY_SIZE = 1e-9


class ConfigurationError(ValueError):
    """Malformed or dimensionally inconsistent model inputs."""


class InfeasibleScenarioError(Exception):
    """No allocation satisfies the pool and reservation constraints."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        super().__init__(message)
        self.violations = tuple(violations)


class BudgetExceededError(Exception):
    """An enumeration would exceed its configured evaluation budget."""

    def __init__(self, message: str, required: int, budget: int):
        super().__init__(message)
        self.required = required
        self.budget = budget


def _as_vector(values, name: str, length: Optional[int] = None, nonneg: bool = True) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be a flat vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ConfigurationError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    if nonneg and np.any(arr < 0):
        raise ConfigurationError(f"{name} must be non-negative")
    return arr


@dataclass(frozen=True, eq=False)
class SliceSpec:
    """One slice: KPI requirement, customer base, price, reservations."""

    id: str
    kpi: np.ndarray
    customer_size: float
    price: float
    min_resources: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kpi", _as_vector(self.kpi, f"slice {self.id} kpi"))
        object.__setattr__(
            self, "min_resources", _as_vector(self.min_resources, f"slice {self.id} min_resources")
        )
        if not (math.isfinite(self.customer_size) and self.customer_size >= 0):
            raise ConfigurationError(f"slice {self.id} customer_size must be >= 0")
        if not (math.isfinite(self.price) and self.price >= 0):
            raise ConfigurationError(f"slice {self.id} price must be >= 0")


@dataclass(frozen=True, eq=False)
class ResourcePool:
    """Infrastructure resources: capacities and unit costs."""

    capacity: np.ndarray
    unit_cost: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "capacity", _as_vector(self.capacity, "pool capacity"))
        object.__setattr__(self, "unit_cost", _as_vector(self.unit_cost, "pool unit_cost"))
        if self.unit_cost.shape != self.capacity.shape:
            raise ConfigurationError("pool capacity and unit_cost must have equal length")
        if np.any(self.capacity <= 0):
            raise ConfigurationError("pool capacity must be strictly positive")

    @property
    def n_resources(self) -> int:
        return self.capacity.shape[0]


@dataclass(frozen=True, eq=False)
class VnfScheme:
    """Function implementation scheme: per-slice demand maps, activation
    overheads and per-resource sharing modes.

    demand has shape (M, N, L): demand[i] maps slice i's KPI vector to
    per-size-unit resource use. overhead has shape (M, N) and is paid only
    by active slices (size > 0). sharing holds one mode per resource.
    """

    slice_ids: tuple
    demand: np.ndarray
    overhead: np.ndarray
    sharing: tuple

    def __post_init__(self):
        ids = tuple(self.slice_ids)
        object.__setattr__(self, "slice_ids", ids)
        demand = np.asarray(self.demand, dtype=float)
        overhead = np.asarray(self.overhead, dtype=float)
        if demand.ndim != 3 or demand.shape[0] != len(ids):
            raise ConfigurationError("scheme demand must have shape (M, N, L)")
        if overhead.shape != demand.shape[:2]:
            raise ConfigurationError("scheme overhead must have shape (M, N)")
        if not np.all(np.isfinite(demand)) or np.any(demand < 0):
            raise ConfigurationError("scheme demand must be finite and non-negative")
        if not np.all(np.isfinite(overhead)) or np.any(overhead < 0):
            raise ConfigurationError("scheme overhead must be finite and non-negative")
        sharing = tuple(self.sharing)
        if len(sharing) != demand.shape[1]:
            raise ConfigurationError("scheme sharing must list one mode per resource")
        for mode in sharing:
            if mode not in (DEDICATED, SHARED):
                raise ConfigurationError(f"unknown sharing mode {mode!r}")
        if len(set(ids)) != len(ids):
            raise ConfigurationError("scheme slice_ids must be unique")
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "overhead", overhead)
        object.__setattr__(self, "sharing", sharing)

    @property
    def n_slices(self) -> int:
        return self.demand.shape[0]

    @property
    def n_resources(self) -> int:
        return self.demand.shape[1]

    def index_of(self, slice_id: str) -> int:
        try:
            return self.slice_ids.index(slice_id)
        except ValueError:
            raise ConfigurationError(f"scheme does not cover slice {slice_id!r}") from None

    def shared_mask(self) -> np.ndarray:
        return np.array([m == SHARED for m in self.sharing])

    def with_sharing(self, sharing: Sequence[str]) -> "VnfScheme":
        return VnfScheme(self.slice_ids, self.demand, self.overhead, tuple(sharing))

    def subset(self, slice_ids: Sequence[str]) -> "VnfScheme":
        idx = [self.index_of(s) for s in slice_ids]
        return VnfScheme(tuple(slice_ids), self.demand[idx], self.overhead[idx], self.sharing)


@dataclass(frozen=True, eq=False)
class Allocation:
    """Sizes plus the per-slice resource rows they induce."""

    sizes: np.ndarray
    resources: np.ndarray


@dataclass(frozen=True)
class Violation:
    """One failed feasibility component. kind is 'pool' or 'minimum'."""

    kind: str
    resource: int
    amount: float
    slice: Optional[int] = None


@dataclass(frozen=True)
class Outcome:
    """Per-slice profits and feasibility of one allocation."""

    profits: tuple
    total_profit: float
    feasible: bool
    violations: tuple


def unit_demand(spec: SliceSpec, scheme: VnfScheme) -> np.ndarray:
    """Per-size-unit resource demand for one slice under a scheme."""
    i = scheme.index_of(spec.id)
    mat = scheme.demand[i]
    if mat.shape[1] != spec.kpi.shape[0]:
        raise ConfigurationError(
            f"slice {spec.id}: demand matrix expects {mat.shape[1]} KPIs, got {spec.kpi.shape[0]}"
        )
    return mat @ spec.kpi


def resource_demand(spec: SliceSpec, size: float, scheme: VnfScheme) -> np.ndarray:
    """Resources consumed by one slice at the given size.

    Demand scales linearly with size; activation overhead applies only when
    the slice is active (size > 0).
    """
    if not math.isfinite(size) or size < 0:
        raise ValueError(f"size must be a non-negative number, got {size}")
    i = scheme.index_of(spec.id)
    base = size * unit_demand(spec, scheme)
    if size > 0:
        base = base + scheme.overhead[i]
    return base


def expenditure(demand: np.ndarray, pool: ResourcePool) -> float:
    """Cost of a resource vector at the pool's unit costs."""
    demand = _as_vector(demand, "resource demand", length=pool.n_resources)
    return float(np.dot(demand, pool.unit_cost))


def revenue(spec: SliceSpec, size: float) -> float:
    """Price times served customers; saturates at the customer base."""
    if not math.isfinite(size) or size < 0:
        raise ValueError(f"size must be a non-negative number, got {size}")
    return spec.price * min(size, spec.customer_size)


def profit(spec: SliceSpec, size: float, scheme: VnfScheme, pool: ResourcePool) -> float:
    """Slice profit: revenue minus expenditure at the given size."""
    return revenue(spec, size) - expenditure(resource_demand(spec, size, scheme), pool)


def build_allocation(specs: Sequence[SliceSpec], scheme: VnfScheme, sizes) -> Allocation:
    sizes = _as_vector(sizes, "sizes", length=len(specs))
    rows = np.stack([resource_demand(spec, s, scheme) for spec, s in zip(specs, sizes)])
    return Allocation(sizes=sizes, resources=rows)


def pool_usage(alloc: Allocation, scheme: VnfScheme) -> np.ndarray:
    """Aggregate per-resource usage: sum over slices for dedicated
    resources, max over slices for time-shared ones."""
    rows = alloc.resources
    if rows.shape[1] != scheme.n_resources:
        raise ConfigurationError("allocation and scheme disagree on resource count")
    usage = rows.sum(axis=0)
    shared = scheme.shared_mask()
    if shared.any() and rows.shape[0] > 0:
        usage[shared] = rows[:, shared].max(axis=0)
    return usage


def check_feasible(
    alloc: Allocation,
    scheme: VnfScheme,
    pool: ResourcePool,
    specs: Sequence[SliceSpec],
) -> tuple:
    """Return (feasible, violations) for pool capacity and per-slice
    minimum reservations. Violation amounts are the raw excess/deficit."""
    violations = []
    usage = pool_usage(alloc, scheme)
    for j in range(pool.n_resources):
        slack = FEASIBILITY_TOL * max(1.0, pool.capacity[j])
        if usage[j] > pool.capacity[j] + slack:
            violations.append(Violation("pool", j, float(usage[j] - pool.capacity[j])))
    for i, spec in enumerate(specs):
        if spec.min_resources.shape[0] != pool.n_resources:
            raise ConfigurationError(f"slice {spec.id} min_resources length mismatch")
        for j in range(pool.n_resources):
            floor = spec.min_resources[j]
            slack = FEASIBILITY_TOL * max(1.0, floor)
            if alloc.resources[i, j] < floor - slack:
                violations.append(
                    Violation("minimum", j, float(floor - alloc.resources[i, j]), slice=i)
                )
    return (not violations, tuple(violations))


def slice_breakdown(specs, scheme: VnfScheme, pool: ResourcePool, sizes):
    """Per-slice (revenue, expenditure) arrays for the given sizes."""
    alloc = build_allocation(specs, scheme, sizes)
    revs = np.array([revenue(spec, s) for spec, s in zip(specs, alloc.sizes)])
    exps = alloc.resources @ pool.unit_cost
    return revs, exps, alloc


def evaluate(scenario, sizes, scheme: Optional[VnfScheme] = None) -> Outcome:
    """Full outcome (per-slice profits, total, feasibility) for a size
    vector under the scenario's pool, defaulting to its base scheme."""
    scheme = scheme if scheme is not None else scenario.scheme
    specs = scenario.specs
    revs, exps, alloc = slice_breakdown(specs, scheme, scenario.pool, sizes)
    profits = tuple(float(r - e) for r, e in zip(revs, exps))
    feasible, violations = check_feasible(alloc, scheme, scenario.pool, specs)
    return Outcome(
        profits=profits,
        total_profit=float(sum(profits)),
        feasible=feasible,
        violations=violations,
    )


def min_size(spec: SliceSpec, scheme: VnfScheme) -> float:
    """Smallest size whose resource row meets the slice's reservations.

    Returns math.inf when no size can (reservation on a resource the slice
    never consumes).
    """
    floors = spec.min_resources
    if np.all(floors <= 0):
        return 0.0
    i = scheme.index_of(spec.id)
    u = unit_demand(spec, scheme)
    b = scheme.overhead[i]
    lo = 0.0
    for j in range(floors.shape[0]):
        need = floors[j] - b[j]
        if need <= 0:
            continue
        if u[j] <= 0:
            return math.inf
        lo = max(lo, need / u[j])
    # Reservations covered purely by overhead still require activation.
    return max(lo, _TINY_SIZE)
