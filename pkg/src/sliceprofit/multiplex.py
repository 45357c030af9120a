"""Slice multiplexing: choosing sharing modes jointly with sizes.

Candidate schemes differ only in the sharing mode of the eligible resources;
the search couples a discrete scheme choice with the continuous size
problem. Three routes are provided: exhaustive scheme sweep (reference),
block-coordinate descent alternating sizes and scheme, and a multi-objective
genetic search over (scheme, sizes) returning a Pareto front of per-slice
profit vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    FEASIBILITY_TOL,
    ConfigurationError,
    InfeasibleScenarioError,
    DEDICATED,
    SHARED,
    VnfScheme,
    build_allocation,
    check_feasible,
    evaluate,
    unit_demand,
)
from .orthogonal import SolveResult, size_bounds, solve_sizes


@dataclass(frozen=True, eq=False)
class SchemeCandidateSet:
    """Ordered scheme candidates; the first always has every eligible
    resource dedicated."""

    schemes: tuple
    cap: int


@dataclass(frozen=True)
class FrontPoint:
    sizes: tuple
    scheme_index: int
    profits: tuple


@dataclass(frozen=True, eq=False)
class ParetoFront:
    points: tuple

    def best_total(self) -> float:
        if not self.points:
            return -math.inf
        return max(sum(p.profits) for p in self.points)


@dataclass(frozen=True)
class GaParams:
    population: int = 40
    generations: int = 100
    crossover: float = 0.9
    mutation: float = 0.1
    tournament: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ConfigurationError("population must be even and at least 4")
        for name in ("crossover", "mutation"):
            rate = getattr(self, name)
            if not (0.0 <= rate <= 1.0):
                raise ConfigurationError(f"{name} rate must lie in [0, 1]")
        if self.tournament < 1 or self.tournament > self.population:
            raise ConfigurationError("tournament size must lie in [1, population]")
        if self.generations < 0:
            raise ConfigurationError("generations must be non-negative")


def enumerate_candidates(scenario, cap: Optional[int] = None) -> SchemeCandidateSet:
    """All sharing-mode assignments over the eligible resources, in
    lexicographic order with dedicated before shared, truncated to cap."""
    eligible = tuple(scenario.sharing_eligible)
    total = 2 ** len(eligible)
    if cap is None:
        cap = total
    if cap < 1:
        raise ConfigurationError("candidate cap must be at least 1")
    base = list(scenario.scheme.sharing)
    for j in eligible:
        base[j] = DEDICATED
    schemes = []
    for code in range(min(cap, total)):
        sharing = list(base)
        for pos, j in enumerate(eligible):
            if code >> (len(eligible) - 1 - pos) & 1:
                sharing[j] = SHARED
        schemes.append(scenario.scheme.with_sharing(sharing))
    return SchemeCandidateSet(schemes=tuple(schemes), cap=cap)


def solve_exhaustive(scenario, cap: Optional[int] = None) -> SolveResult:
    """Solve sizes for every candidate scheme and keep the best total,
    ties going to the earliest scheme in enumeration order."""
    candidates = enumerate_candidates(scenario, cap)
    best = None
    per_scheme = []
    nit = 0
    for idx, scheme in enumerate(candidates.schemes):
        try:
            sizes, it = solve_sizes(scenario.specs, scheme, scenario.pool)
        except InfeasibleScenarioError:
            per_scheme.append(None)
            continue
        nit += it
        outcome = evaluate(scenario, sizes, scheme)
        per_scheme.append(outcome.total_profit)
        if best is None or outcome.total_profit > best[0]:
            best = (outcome.total_profit, idx, sizes, scheme, outcome)
    if best is None:
        raise InfeasibleScenarioError("every candidate scheme is infeasible")
    _, idx, sizes, scheme, outcome = best
    return SolveResult(
        tuple(float(s) for s in sizes), outcome, scheme,
        {"solver": "exhaustive", "iterations": nit,
         "scheme_index": idx, "per_scheme": per_scheme},
    )


def _scheme_step(scenario, candidates, sizes):
    """Best candidate at fixed sizes: maximal profit, ties resolved toward
    more shared resources (never shrinks the next size step's feasible
    region), then enumeration order."""
    best = None
    for idx, scheme in enumerate(candidates.schemes):
        alloc = build_allocation(scenario.specs, scheme, sizes)
        feasible, _ = check_feasible(alloc, scheme, scenario.pool, scenario.specs)
        if not feasible:
            continue
        total = evaluate(scenario, sizes, scheme).total_profit
        shared = sum(1 for m in scheme.sharing if m == SHARED)
        key = (total, shared, -idx)
        if best is None or key > best[0]:
            best = (key, idx, scheme)
    return best


def solve_bcd(scenario, init_scheme: Optional[VnfScheme] = None,
              max_rounds: int = 20, cap: Optional[int] = None) -> SolveResult:
    """Alternate exact size solves with a discrete scheme re-selection.

    The inner solver is deterministic, so once a scheme step keeps the
    scheme the next round cannot change anything and the loop stops. The
    per-round profit trace is non-decreasing.
    """
    if max_rounds < 0:
        raise ConfigurationError("max_rounds must be non-negative")
    candidates = enumerate_candidates(scenario, cap)
    if init_scheme is None:
        scheme_idx = 0
    else:
        matches = [i for i, s in enumerate(candidates.schemes)
                   if s.sharing == tuple(init_scheme.sharing)]
        if not matches:
            raise ConfigurationError("init_scheme is not in the candidate set")
        scheme_idx = matches[0]
    scheme = candidates.schemes[scheme_idx]

    lo, _ = size_bounds(scenario.specs, scheme)
    sizes = lo
    trace = []
    converged = False
    rounds = 0
    nit = 0
    for _ in range(max_rounds):
        rounds += 1
        sizes, it = solve_sizes(scenario.specs, scheme, scenario.pool)
        nit += it
        trace.append(evaluate(scenario, sizes, scheme).total_profit)
        step = _scheme_step(scenario, candidates, sizes)
        if step is None:  # current point is feasible under its own scheme
            raise RuntimeError("scheme step lost feasibility")
        _, new_idx, new_scheme = step
        if new_idx == scheme_idx:
            converged = True
            break
        scheme_idx, scheme = new_idx, new_scheme
    outcome = evaluate(scenario, sizes, scheme)
    return SolveResult(
        tuple(float(s) for s in sizes), outcome, scheme,
        {"solver": "bcd", "iterations": nit, "rounds": rounds,
         "converged": converged, "scheme_index": scheme_idx, "trace": trace},
    )


def _profit_vectors(points) -> np.ndarray:
    rows = []
    for p in points:
        w = p.profits if isinstance(p, FrontPoint) else tuple(p)
        rows.append(tuple(float(x) for x in w))
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise ConfigurationError("profit vectors must all have the same length")
    return rows


def pareto_filter(points: Sequence):
    """Nondominated subset of the input, stable order, first duplicate
    kept. Idempotent."""
    rows = _profit_vectors(points)
    kept = []
    kept_rows = []
    for point, w in zip(points, rows):
        dominated = False
        for other in kept_rows:
            if other == w or (
                all(o >= x for o, x in zip(other, w))
                and any(o > x for o, x in zip(other, w))
            ):
                dominated = True
                break
        if dominated:
            continue
        survivors = []
        survivor_rows = []
        for q, qw in zip(kept, kept_rows):
            if all(x >= o for x, o in zip(w, qw)) and any(x > o for x, o in zip(w, qw)):
                continue
            survivors.append(q)
            survivor_rows.append(qw)
        kept = survivors + [point]
        kept_rows = survivor_rows + [w]
    return kept


def nondominated_sort(objectives: np.ndarray) -> list:
    """Front index per row for a maximisation problem."""
    objectives = np.asarray(objectives, dtype=float)
    n = objectives.shape[0]
    ge = np.all(objectives[:, None, :] >= objectives[None, :, :], axis=2)
    gt = np.any(objectives[:, None, :] > objectives[None, :, :], axis=2)
    dom = ge & gt  # dom[a, b]: a dominates b
    counts = dom.sum(axis=0)
    ranks = np.zeros(n, dtype=int)
    front = [i for i in range(n) if counts[i] == 0]
    level = 0
    while front:
        nxt = []
        for i in front:
            ranks[i] = level
            for j in np.nonzero(dom[i])[0]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        front = sorted(nxt)
        level += 1
    return list(ranks)


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    n, k = objectives.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(k):
        order = np.argsort(objectives[:, j], kind="stable")
        lo, hi = objectives[order[0], j], objectives[order[-1], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi - lo <= 0:
            continue
        for pos in range(1, n - 1):
            gap = objectives[order[pos + 1], j] - objectives[order[pos - 1], j]
            dist[order[pos]] += gap / (hi - lo)
    return dist


class _Individual:
    __slots__ = ("scheme_idx", "sizes", "profits")

    def __init__(self, scheme_idx, sizes, profits):
        self.scheme_idx = scheme_idx
        self.sizes = sizes
        self.profits = profits


class _FastCheck:
    """Vectorised mirror of build_allocation + check_feasible for one fixed
    scheme; exactness against the model route is covered by a property test."""

    def __init__(self, specs, scheme, pool):
        self.unit = np.stack([unit_demand(spec, scheme) for spec in specs])
        self.overhead = np.asarray(scheme.overhead, dtype=float)
        self.shared = scheme.shared_mask()
        self.cap = pool.capacity + FEASIBILITY_TOL * np.maximum(1.0, pool.capacity)
        mins = np.stack([spec.min_resources for spec in specs])
        self.floor = mins - FEASIBILITY_TOL * np.maximum(1.0, mins)

    def __call__(self, sizes) -> bool:
        rows = sizes[:, None] * self.unit + (sizes > 0)[:, None] * self.overhead
        usage = rows.sum(axis=0)
        if self.shared.any():
            usage[self.shared] = rows[:, self.shared].max(axis=0)
        return bool(np.all(usage <= self.cap) and np.all(rows >= self.floor))


def _repair(feasible, lo, sizes):
    """Pull an infeasible size vector back toward the reservation floor by
    uniform scaling; usage is monotone in size so bisection applies."""
    if feasible(sizes):
        return sizes
    span = sizes - lo
    a, b = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (a + b)
        if feasible(lo + mid * span):
            a = mid
        else:
            b = mid
    return lo + a * span


def _rng(seed: int, generation: int, index: int) -> np.random.Generator:
    # Fixed per-individual stream: results cannot depend on evaluation order.
    return np.random.default_rng(np.random.SeedSequence([seed, generation, index]))


def _evaluate_ind(scenario, candidates, checkers, lo, hi, scheme_idx, sizes):
    scheme = candidates.schemes[scheme_idx]
    sizes = np.clip(sizes, lo, hi)
    sizes = _repair(checkers[scheme_idx], lo, sizes)
    outcome = evaluate(scenario, sizes, scheme)
    return _Individual(scheme_idx, sizes, np.array(outcome.profits))


class _Archive:
    """Nondominated set with first-duplicate-kept, insertion-ordered."""

    def __init__(self, width: int):
        self.rows = np.empty((0, width))
        self.items: list = []

    def add(self, ind) -> None:
        w = ind.profits
        if self.items:
            ge = self.rows >= w
            eq = ge.all(axis=1) & (self.rows <= w).all(axis=1)
            dominated = ge.all(axis=1) & (self.rows > w).any(axis=1)
            if bool((eq | dominated).any()):
                return
            le = self.rows <= w
            beaten = le.all(axis=1) & (self.rows < w).any(axis=1)
            if bool(beaten.any()):
                keep = ~beaten
                self.rows = self.rows[keep]
                self.items = [it for it, k in zip(self.items, keep) if k]
        self.rows = np.vstack([self.rows, w[None, :]])
        self.items.append(ind)


def solve_ga(scenario, params: Optional[GaParams] = None,
             cap: Optional[int] = None) -> ParetoFront:
    """Elitist multi-objective genetic search over (scheme index, sizes).

    Deterministic for a given seed: every random draw comes from a stream
    keyed by (seed, generation, individual index). Infeasible offspring are
    repaired by uniform down-scaling toward the reservation floor. Returns
    the nondominated archive, sorted by first objective descending.
    """
    params = params or GaParams()
    candidates = enumerate_candidates(scenario, cap)
    n_schemes = len(candidates.schemes)
    lo, hi = size_bounds(scenario.specs, candidates.schemes[0])
    base_alloc = build_allocation(scenario.specs, candidates.schemes[0], lo)
    feas, violations = check_feasible(
        base_alloc, candidates.schemes[0], scenario.pool, scenario.specs
    )
    if not feas:
        raise InfeasibleScenarioError(
            "minimum reservations exceed the pool capacity", violations
        )
    span = hi - lo
    m = len(scenario.specs)
    checkers = [
        _FastCheck(scenario.specs, scheme, scenario.pool)
        for scheme in candidates.schemes
    ]

    archive = _Archive(m)
    pop = []
    for i in range(params.population):
        rng = _rng(params.seed, 0, i)
        scheme_idx = int(rng.integers(n_schemes))
        sizes = lo + rng.random(m) * span
        ind = _evaluate_ind(scenario, candidates, checkers, lo, hi, scheme_idx, sizes)
        pop.append(ind)
        archive.add(ind)

    for gen in range(1, params.generations + 1):
        objs = np.stack([ind.profits for ind in pop])
        ranks = np.array(nondominated_sort(objs))
        crowd = np.zeros(len(pop))
        for level in np.unique(ranks):
            members = np.where(ranks == level)[0]
            crowd[members] = crowding_distance(objs[members])

        def better(a, b):
            if ranks[a] != ranks[b]:
                return a if ranks[a] < ranks[b] else b
            if crowd[a] != crowd[b]:
                return a if crowd[a] > crowd[b] else b
            return min(a, b)

        offspring = []
        for j in range(params.population):
            rng = _rng(params.seed, gen, j)
            picks = rng.integers(len(pop), size=(2, params.tournament))
            parents = []
            for row in picks:
                winner = int(row[0])
                for cand in row[1:]:
                    winner = better(winner, int(cand))
                parents.append(pop[winner])
            p1, p2 = parents
            sizes = p1.sizes.copy()
            scheme_idx = p1.scheme_idx
            if rng.random() < params.crossover:
                mask = rng.random(m) < 0.5
                sizes = np.where(mask, p1.sizes, p2.sizes)
                scheme_idx = p1.scheme_idx if rng.random() < 0.5 else p2.scheme_idx
            mutate = rng.random(m) < params.mutation
            if mutate.any():
                noise = rng.normal(0.0, 0.15, size=m) * span
                sizes = np.where(mutate, sizes + noise, sizes)
            if rng.random() < params.mutation and n_schemes > 1:
                scheme_idx = int(rng.integers(n_schemes))
            ind = _evaluate_ind(scenario, candidates, checkers, lo, hi, scheme_idx, sizes)
            offspring.append(ind)
            archive.add(ind)

        combined = pop + offspring
        objs = np.stack([ind.profits for ind in combined])
        ranks = np.array(nondominated_sort(objs))
        crowd = np.zeros(len(combined))
        for level in np.unique(ranks):
            members = np.where(ranks == level)[0]
            crowd[members] = crowding_distance(objs[members])
        order = sorted(
            range(len(combined)), key=lambda i: (ranks[i], -crowd[i], i)
        )
        pop = [combined[i] for i in order[: params.population]]

    points = [
        FrontPoint(
            sizes=tuple(float(s) for s in ind.sizes),
            scheme_index=ind.scheme_idx,
            profits=tuple(float(x) for x in ind.profits),
        )
        for ind in archive.items
    ]
    points.sort(key=lambda p: (
        tuple(-x for x in p.profits), p.scheme_index, p.sizes
    ))
    return ParetoFront(points=tuple(points))


def multiplexing_gain(scenario, cap: Optional[int] = None) -> float:
    """Total profit gained by the best sharing assignment over keeping every
    eligible resource dedicated. Zero when nothing is eligible."""
    candidates = enumerate_candidates(scenario, cap)
    if len(candidates.schemes) == 1:
        return 0.0
    baseline_sizes, _ = solve_sizes(scenario.specs, candidates.schemes[0], scenario.pool)
    baseline = evaluate(scenario, baseline_sizes, candidates.schemes[0]).total_profit
    best = solve_exhaustive(scenario, cap).outcome.total_profit
    return best - baseline
