"""Scheme search: exhaustive sweep, coordinate descent, GA front."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sliceprofit import (
    ConfigurationError,
    FrontPoint,
    GaParams,
    InfeasibleScenarioError,
    build_allocation,
    check_feasible,
    crowding_distance,
    enumerate_candidates,
    evaluate,
    multiplexing_gain,
    nondominated_sort,
    pareto_filter,
    scenario_from_dict,
    size_bounds,
    solve_bcd,
    solve_exhaustive,
    solve_ga,
    solve_objective_sum,
)
from sliceprofit.multiplex import _FastCheck

from conftest import make_scenario, random_scenario


def three_resource_doc():
    doc = make_scenario().to_dict()
    doc["resources"].append({"name": "storage", "capacity": 9, "unit_cost": 0.2})
    for s in doc["slices"]:
        s["demand_matrix"].append([0.5, 0.5])
        s["min_resources"].append(0)
        s["overhead"].append(0)
    return doc


def rescue_scenario():
    # reservations that overflow a dedicated pool but fit a time-shared one
    return scenario_from_dict({
        "name": "rescue",
        "resources": [{"name": "bw", "capacity": 10, "unit_cost": 0.5}],
        "kpis": ["rate"],
        "slices": [
            {"id": "A", "kpi": [2], "customer_size": 5, "price": 2.0,
             "min_resources": [8], "demand_matrix": [[1]], "overhead": [0]},
            {"id": "B", "kpi": [1], "customer_size": 8, "price": 1.0,
             "min_resources": [7], "demand_matrix": [[1]], "overhead": [0]},
        ],
        "sharing_eligible": ["bw"],
    })


class TestEnumerateCandidates:
    def test_nothing_eligible(self, s2):
        cands = enumerate_candidates(s2)
        assert len(cands.schemes) == 1
        assert cands.schemes[0].sharing == s2.scheme.sharing

    def test_single_eligible(self, s2m):
        cands = enumerate_candidates(s2m)
        assert [s.sharing for s in cands.schemes] == [
            ("dedicated", "dedicated"), ("shared", "dedicated"),
        ]

    def test_two_eligible_order(self):
        scenario = make_scenario(sharing_eligible=["bandwidth", "compute"])
        cands = enumerate_candidates(scenario)
        assert [s.sharing for s in cands.schemes] == [
            ("dedicated", "dedicated"),
            ("dedicated", "shared"),
            ("shared", "dedicated"),
            ("shared", "shared"),
        ]

    def test_cap_truncates(self):
        doc = three_resource_doc()
        doc["sharing_eligible"] = ["bandwidth", "compute", "storage"]
        cands = enumerate_candidates(scenario_from_dict(doc), cap=5)
        assert len(cands.schemes) == 5
        assert cands.schemes[0].sharing == ("dedicated",) * 3

    def test_cap_must_be_positive(self, s2m):
        with pytest.raises(ConfigurationError):
            enumerate_candidates(s2m, cap=0)

    def test_non_eligible_modes_preserved(self):
        scenario = make_scenario(
            sharing={"compute": "shared"}, sharing_eligible=["bandwidth"]
        )
        cands = enumerate_candidates(scenario)
        assert [s.sharing for s in cands.schemes] == [
            ("dedicated", "shared"), ("shared", "shared"),
        ]


class TestSolveExhaustive:
    def test_s2m_prefers_bandwidth_sharing(self, s2m):
        res = solve_exhaustive(s2m)
        assert res.meta["scheme_index"] == 1
        assert res.scheme.sharing == ("shared", "dedicated")
        assert res.sizes == pytest.approx((4.0, 4.0), abs=1e-6)
        assert res.total_profit == pytest.approx(4.0, abs=1e-6)

    def test_tie_goes_to_all_dedicated(self):
        doc = make_scenario().to_dict()
        doc["resources"][0]["capacity"] = 20
        doc["resources"][1]["capacity"] = 24
        doc["sharing_eligible"] = ["bandwidth"]
        res = solve_exhaustive(scenario_from_dict(doc))
        # slack capacity makes sharing worthless; the earliest candidate wins
        assert res.meta["scheme_index"] == 0
        a, b = res.meta["per_scheme"]
        assert a == b

    def test_sharing_rescues_feasibility(self):
        res = solve_exhaustive(rescue_scenario())
        assert res.meta["per_scheme"][0] is None
        assert res.meta["scheme_index"] == 1
        assert res.sizes == pytest.approx((5.0, 8.0), abs=1e-6)
        assert res.total_profit == pytest.approx(9.0, abs=1e-6)

    def test_all_candidates_infeasible(self):
        doc = make_scenario().to_dict()
        doc["slices"][0]["min_resources"] = [0, 7]
        doc["slices"][1]["min_resources"] = [0, 7]
        doc["sharing_eligible"] = ["bandwidth"]
        with pytest.raises(InfeasibleScenarioError):
            solve_exhaustive(scenario_from_dict(doc))

    def test_matches_single_scheme_solver(self, s2):
        assert solve_exhaustive(s2).sizes == solve_objective_sum(s2).sizes


class TestSolveBcd:
    def test_s2m_two_round_ascent(self, s2m):
        res = solve_bcd(s2m)
        assert res.meta["converged"]
        assert res.meta["rounds"] == 2
        trace = res.meta["trace"]
        assert trace == pytest.approx([11 / 3, 4.0], abs=1e-6)
        assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
        assert res.total_profit == pytest.approx(
            solve_exhaustive(s2m).total_profit, abs=0.02
        )

    def test_shared_init_converges_immediately(self, s2m):
        init = s2m.scheme.with_sharing(("shared", "dedicated"))
        res = solve_bcd(s2m, init_scheme=init)
        assert res.meta["rounds"] == 1
        assert res.meta["converged"]
        assert res.total_profit == pytest.approx(4.0, abs=1e-6)

    def test_zero_rounds_returns_floor_point(self, s2m):
        res = solve_bcd(s2m, max_rounds=0)
        assert res.sizes == (0.0, 0.0)
        assert res.meta["trace"] == []
        assert not res.meta["converged"]

    def test_negative_rounds_rejected(self, s2m):
        with pytest.raises(ConfigurationError):
            solve_bcd(s2m, max_rounds=-1)

    def test_unknown_init_scheme_rejected(self, s2m):
        init = s2m.scheme.with_sharing(("shared", "shared"))
        with pytest.raises(ConfigurationError):
            solve_bcd(s2m, init_scheme=init)

    def test_no_eligible_resources_is_plain_solve(self, s2):
        res = solve_bcd(s2)
        assert res.meta["rounds"] == 1 and res.meta["converged"]
        assert res.sizes == solve_objective_sum(s2).sizes

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_trace_never_decreases(self, seed):
        scenario = random_scenario(np.random.default_rng(seed))
        res = solve_bcd(scenario)
        trace = res.meta["trace"]
        assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
        assert res.outcome.feasible


class TestParetoFilter:
    def test_drops_dominated(self):
        kept = pareto_filter([(1, 2), (2, 1), (1, 1)])
        assert kept == [(1, 2), (2, 1)]

    def test_keeps_first_duplicate(self):
        a, b = (1.0, 2.0), (1.0, 2.0)
        kept = pareto_filter([a, b])
        assert len(kept) == 1 and kept[0] is a

    def test_idempotent(self):
        points = [(3, 0), (0, 3), (2, 2), (1, 1), (2, 2)]
        once = pareto_filter(points)
        assert pareto_filter(once) == once

    def test_later_point_evicts_dominated_earlier(self):
        kept = pareto_filter([(1, 1), (2, 2)])
        assert kept == [(2, 2)]

    def test_front_points_pass_through(self):
        points = [
            FrontPoint((1.0,), 0, (1.0, 2.0)),
            FrontPoint((2.0,), 0, (0.5, 0.5)),
        ]
        kept = pareto_filter(points)
        assert kept == [points[0]]

    def test_ragged_vectors_rejected(self):
        with pytest.raises(ConfigurationError):
            pareto_filter([(1, 2), (1, 2, 3)])

    def test_empty(self):
        assert pareto_filter([]) == []


def brute_ranks(objectives):
    """Quadratic reference ranking, peeled front by front."""
    objectives = [tuple(row) for row in objectives]
    remaining = set(range(len(objectives)))
    ranks = [None] * len(objectives)
    level = 0
    while remaining:
        front = []
        for i in remaining:
            dominated = False
            for j in remaining:
                if i == j:
                    continue
                a, b = objectives[j], objectives[i]
                if all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b)):
                    dominated = True
                    break
            if not dominated:
                front.append(i)
        for i in front:
            ranks[i] = level
            remaining.discard(i)
        level += 1
    return ranks


class TestNondominatedSort:
    def test_small_example(self):
        ranks = nondominated_sort(np.array([[2, 2], [1, 1], [2, 1], [1, 2]]))
        assert ranks == [0, 2, 1, 1]

    def test_duplicates_share_rank(self):
        assert nondominated_sort(np.array([[1.0, 1.0], [1.0, 1.0]])) == [0, 0]

    def test_single_row(self):
        assert nondominated_sort(np.array([[5.0, 1.0]])) == [0]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 3))
    def test_matches_quadratic_reference(self, seed, n, k):
        rng = np.random.default_rng(seed)
        objs = rng.integers(0, 4, size=(n, k)).astype(float)
        assert nondominated_sort(objs) == brute_ranks(objs)


class TestCrowdingDistance:
    def test_two_points_infinite(self):
        dist = crowding_distance(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert np.all(np.isinf(dist))

    def test_boundary_infinite_interior_summed(self):
        dist = crowding_distance(np.array([[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]]))
        assert np.isinf(dist[0]) and np.isinf(dist[2])
        assert dist[1] == pytest.approx(2.0)

    def test_constant_column_ignored(self):
        dist = crowding_distance(np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]))
        assert np.isfinite(dist[1]) and dist[1] == pytest.approx(1.0)
        assert not np.any(np.isnan(dist))


class TestFastCheckMirrorsModel:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000), st.integers(0, 5))
    def test_agrees_with_model_route(self, seed, scale_case):
        rng = np.random.default_rng(seed)
        scenario = random_scenario(rng)
        cands = enumerate_candidates(scenario)
        scheme = cands.schemes[int(rng.integers(len(cands.schemes)))]
        fast = _FastCheck(scenario.specs, scheme, scenario.pool)
        lo, hi = size_bounds(scenario.specs, scheme)
        scale = (0.0, 0.3, 0.7, 1.0, 1.3, 2.0)[scale_case]
        sizes = lo + scale * rng.random(len(lo)) * np.maximum(hi - lo, 1e-6)
        alloc = build_allocation(scenario.specs, scheme, sizes)
        expected, _ = check_feasible(alloc, scheme, scenario.pool, scenario.specs)
        assert fast(sizes) == expected

    def test_boundary_point_agrees(self, s2):
        fast = _FastCheck(s2.specs, s2.scheme, s2.pool)
        sizes = np.array([8 / 3, 14 / 3])
        alloc = build_allocation(s2.specs, s2.scheme, sizes)
        assert fast(sizes) == check_feasible(alloc, s2.scheme, s2.pool, s2.specs)[0]


SMALL_GA = GaParams(population=16, generations=20, seed=0)


class TestSolveGa:
    def test_single_slice_front_is_the_optimum(self):
        doc = make_scenario().to_dict()
        doc["slices"] = doc["slices"][:1]
        scenario = scenario_from_dict(doc)
        front = solve_ga(scenario, SMALL_GA)
        assert len(front.points) == 1
        opt = solve_objective_sum(scenario).total_profit
        # the exact solver may sit ~1e-9 relative under the true optimum
        # after its smallest-sizes polish, so allow that much crossover
        assert front.best_total() <= opt + 1e-6
        assert front.best_total() == pytest.approx(opt, abs=0.05)

    def test_s2m_front_quality(self, s2m):
        front = solve_ga(s2m)
        assert front.best_total() >= 4.0 * 0.99

    def test_same_seed_is_identical(self, s2m):
        a = solve_ga(s2m, SMALL_GA)
        b = solve_ga(s2m, SMALL_GA)
        assert a.points == b.points

    def test_points_feasible_and_mutually_nondominated(self, s2m):
        front = solve_ga(s2m, SMALL_GA)
        cands = enumerate_candidates(s2m)
        for p in front.points:
            out = evaluate(s2m, p.sizes, cands.schemes[p.scheme_index])
            assert out.feasible
            assert out.profits == pytest.approx(p.profits, abs=1e-12)
        for i, p in enumerate(front.points):
            for q in front.points[i + 1:]:
                p_dom = all(x >= y for x, y in zip(p.profits, q.profits)) and p.profits != q.profits
                q_dom = all(y >= x for x, y in zip(p.profits, q.profits)) and p.profits != q.profits
                assert not p_dom and not q_dom

    def test_zero_generations_still_returns_a_front(self, s2m):
        front = solve_ga(s2m, GaParams(population=8, generations=0, seed=3))
        assert front.points
        for p in front.points:
            assert len(p.profits) == 2

    def test_param_validation(self):
        with pytest.raises(ConfigurationError):
            GaParams(population=7)
        with pytest.raises(ConfigurationError):
            GaParams(population=2)
        with pytest.raises(ConfigurationError):
            GaParams(crossover=1.5)
        with pytest.raises(ConfigurationError):
            GaParams(mutation=-0.1)
        with pytest.raises(ConfigurationError):
            GaParams(tournament=0)
        with pytest.raises(ConfigurationError):
            GaParams(generations=-1)

    def test_infeasible_scenario_raises(self):
        doc = make_scenario().to_dict()
        doc["slices"][0]["min_resources"] = [0, 7]
        doc["slices"][1]["min_resources"] = [0, 7]
        with pytest.raises(InfeasibleScenarioError):
            solve_ga(scenario_from_dict(doc), SMALL_GA)


class TestMultiplexingGain:
    def test_zero_when_nothing_eligible(self, s2):
        assert multiplexing_gain(s2) == 0.0

    def test_s2m_gain(self, s2m):
        assert multiplexing_gain(s2m) == pytest.approx(1 / 3, abs=0.02)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_never_negative(self, seed):
        scenario = random_scenario(np.random.default_rng(seed))
        assert multiplexing_gain(scenario) >= 0.0
