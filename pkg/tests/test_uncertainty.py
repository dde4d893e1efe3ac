import json
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lineplan import formulations as fm
from lineplan.errors import (Infeasible, MissingProbabilities, TooManyPairs, UnsupportedMeasure,
                             ValidationError)
from lineplan.milp import Status
from lineplan.network import Instance, Line, LineConcept, LinePool, Link
from lineplan.uncertainty import (DemandUncertainty, ScenarioEvaluator, build_multiperiod_model,
                                  dump_uncertainty, expected_eval, load_uncertainty,
                                  robust_cost_model_box, worst_case_eval)

import gen
from conftest import three_line_pool, three_station_instance

P, Q = ("s1", "s2"), ("s2", "s3")
ST = ("s1", "s3")


def optimum(art):
    sol = fm.solve(art)
    assert sol.status == Status.OPTIMAL
    return sol.objective_value


class TestDemandUncertainty:
    def test_gamma_membership_example(self):
        u = DemandUncertainty.gamma({P: 8, Q: 15}, {P: 10, Q: 20}, 25)
        assert not u.contains({P: 10, Q: 20})
        assert u.contains({P: 8, Q: 15}) and u.contains({P: 10, Q: 15})
        assert not u.contains({P: 9, Q: 17})
        assert not u.contains({P: 7, Q: 15})

    def test_invariants(self):
        with pytest.raises(ValidationError):
            DemandUncertainty.box({P: 5}, {P: 4})
        with pytest.raises(ValidationError):
            DemandUncertainty.gamma({P: 8, Q: 15}, {P: 10, Q: 20}, 22)
        with pytest.raises(ValidationError):
            DemandUncertainty.discrete([{P: 1}, {P: 2}], [0.5, 0.6])
        DemandUncertainty.discrete([{P: 1}, {P: 2}, {P: 3}], [0.1, 0.2, 0.7])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 50), st.floats(0, 50)), min_size=1, max_size=4),
           st.floats(0, 200), st.lists(st.floats(0, 60), min_size=4, max_size=4))
    def test_gamma_membership_is_box_and_budget(self, bounds, slack, point):
        pairs = [(f"o{i}", f"d{i}") for i in range(len(bounds))]
        lower = {p: min(b) for p, b in zip(pairs, bounds)}
        upper = {p: max(b) for p, b in zip(pairs, bounds)}
        budget = sum(lower.values()) + slack
        u = DemandUncertainty.gamma(lower, upper, budget)
        x = dict(zip(pairs, point))
        in_box = all(lower[p] <= x[p] <= upper[p] for p in pairs)
        in_budget = sum(Fraction(x[p]) for p in pairs) <= Fraction(budget)
        assert u.contains(x) == (in_box and in_budget)

    def test_json_round_trip(self, tmp_path):
        for u in (DemandUncertainty.box({ST: 100}, {ST: 140}),
                  DemandUncertainty.gamma({P: 8, Q: 15}, {P: 10, Q: 20}, 25),
                  DemandUncertainty.discrete([{P: 1.0}, {Q: 2.0}], [0.25, 0.75])):
            f = tmp_path / "u.json"
            f.write_text(json.dumps(dump_uncertainty(u)))
            assert load_uncertainty(f) == u

    def test_malformed_file(self, tmp_path):
        f = tmp_path / "u.json"
        f.write_text('{"kind": "box", "pairs": [{"origin": "a"}]}')
        with pytest.raises(ValidationError):
            load_uncertainty(f)


class TestRobustCostModel:
    def test_collapsed_box_equals_nominal(self, inst, pool):
        u = DemandUncertainty.box(inst.od, inst.od)
        assert optimum(robust_cost_model_box(inst, pool, u)) == pytest.approx(
            optimum(fm.cost_model_from_demand(inst, pool)))

    def test_doubling_upper_bounds(self):
        inst = three_station_instance(lower=0, upper=None)
        pool = three_line_pool(inst)
        nominal = optimum(fm.cost_model_from_demand(inst, pool))
        doubled = {p: 2 * v for p, v in inst.od.items()}
        assert fm.demand_lower_bounds(inst, doubled) == {"a1": 3, "a2": 3}
        robust = optimum(robust_cost_model_box(inst, pool, DemandUncertainty.box(inst.od, doubled)))
        L = fm.demand_lower_bounds(inst, doubled)
        expected, _ = gen.brute_force_cost(inst, pool, L, {}, 5)
        assert robust == pytest.approx(expected) and robust >= nominal

    def test_upper_bound_beyond_link_capacity(self):
        inst = Instance(("a", "b"), (Link("x", "a", "b", 1.0, 0, 2),), {("a", "b"): 50.0})
        pool = LinePool.build(inst, [Line("l", ("x",), 1.0)])
        u = DemandUncertainty.box({("a", "b"): 50.0}, {("a", "b"): 250.0})  # needs 3 > U=2 trips
        assert fm.solve(robust_cost_model_box(inst, pool, u)).status == Status.INFEASIBLE


class TestWorstCase:
    def test_discrete_nominal(self, inst, pool, concept):
        u = DemandUncertainty.discrete([inst.od])
        res = worst_case_eval(inst, pool, concept, u)
        ev = ScenarioEvaluator(inst, pool, concept, [ST]).evaluate(inst.od)
        assert res.worst == ev

    def test_fixture_box(self, inst, pool):
        # two trips of l3 give 120 places on both links
        c = LineConcept({"l3": 2})
        res = worst_case_eval(inst, pool, c, DemandUncertainty.box({ST: 100}, {ST: 140}))
        assert res.scenario == {ST: 140.0}
        assert res.worst.max_deficit == pytest.approx(20)
        assert res.exact and res.evaluated == 2

    def test_too_many_pairs(self, inst, pool, concept):
        pairs = [(f"x{i}", "y") for i in range(21)]
        u = DemandUncertainty.box({p: 0 for p in pairs}, {p: 1 for p in pairs})
        with pytest.raises(TooManyPairs):
            worst_case_eval(inst, pool, concept, u)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000), st.booleans())
    def test_worst_dominates_members(self, seed, use_gamma):
        rng = random.Random(seed)
        inst = gen.random_connected(rng, rng.randint(3, 5), rng.randint(0, 2))
        nominal = gen.random_od(rng, inst, rng.randint(1, 4))
        inst = inst.with_od(nominal)
        pool = gen.random_pool(rng, inst, 3, cover_links=True)
        concept = LineConcept({l.id: rng.randint(0, 2) for l in pool})
        lower = {p: 0.5 * v for p, v in nominal.items()}
        upper = {p: 1.5 * v for p, v in nominal.items()}
        if use_gamma:
            u = DemandUncertainty.gamma(lower, upper, sum(nominal.values()))
        else:
            u = DemandUncertainty.box(lower, upper)
        res = worst_case_eval(inst, pool, concept, u)
        x = res.scenario
        assert all(lower[p] - 1e-9 <= x[p] <= upper[p] + 1e-9 for p in u.pairs)
        if use_gamma:
            assert sum(x.values()) <= u.budget + 1e-9
        ev = ScenarioEvaluator(inst, pool, concept, u.pairs)
        for _ in range(20):
            x = {p: rng.uniform(lower[p], upper[p]) for p in u.pairs}
            if u.contains(x):
                assert ev.evaluate(x).objective <= res.objective + 1e-6


class TestExpected:
    def test_single_scenario(self, inst, pool, concept):
        res = expected_eval(inst, pool, concept, DemandUncertainty.discrete([inst.od], [1.0]))
        ev = ScenarioEvaluator(inst, pool, concept, [ST]).evaluate(inst.od)
        assert res.expected == ev.objective

    def test_symmetric_objectives(self, inst, pool, concept):
        u = DemandUncertainty.discrete([{ST: 1.0}, {ST: 2.0}], [0.5, 0.5])
        res = expected_eval(inst, pool, concept, u, evaluator=lambda s: 7.0 if s[ST] == 1.0 else -7.0)
        assert res.expected == 0

    def test_three_scenarios_hand_computed(self, inst, pool):
        # demand surrogates (10,20), (9,17), (8,15) on (s1,s2) and (s2,s3); l3 has room for all,
        # so every scenario costs 10 minutes per passenger
        u = DemandUncertainty.discrete([{P: 10, Q: 20}, {P: 9, Q: 17}, {P: 8, Q: 15}], [0.2, 0.5, 0.3])
        res = expected_eval(inst, pool, LineConcept({"l3": 1}), u)
        assert [o for _, _, o in res.table] == [300, 260, 230]
        assert res.expected == pytest.approx(0.2 * 300 + 0.5 * 260 + 0.3 * 230)

    def test_missing_probabilities(self, inst, pool, concept):
        with pytest.raises(MissingProbabilities):
            expected_eval(inst, pool, concept, DemandUncertainty.discrete([inst.od]))


class TestMultiPeriod:
    def test_identical_seasons(self, inst, pool):
        single = optimum(fm.cost_model_from_demand(inst, pool))
        for bound in (0, 3, math.inf):
            art = build_multiperiod_model(inst, pool, [inst.od, inst.od], bound=bound)
            sol = fm.solve(art)
            assert sol.objective_value == pytest.approx(2 * single)
            assert fm.decode_concept(art, sol, season=0) == fm.decode_concept(art, sol, season=1)

    def test_disjoint_binding_links_common_concept(self, inst, pool):
        seasons = [{P: 300.0}, {Q: 300.0}]
        art = build_multiperiod_model(inst, pool, seasons, bound=0)
        sol = fm.solve(art)
        c0, c1 = (fm.decode_concept(art, sol, season=j) for j in range(2))
        assert c0 == c1
        L = {a: max(fm.demand_lower_bounds(inst, s)[a] for s in seasons) for a in ("a1", "a2")}
        expected, _ = gen.brute_force_cost(inst, pool, L, {"a1": 4, "a2": 4}, 4)
        assert sol.objective_value == pytest.approx(2 * expected)

    def test_unbounded_coupling_is_independent(self, inst, pool):
        seasons, weights = [{P: 300.0}, {Q: 300.0}, inst.od], [0.5, 0.25, 0.25]
        art = build_multiperiod_model(inst, pool, seasons, weights=weights)
        independent = sum(w * optimum(fm.cost_model_from_demand(inst, pool, od))
                          for w, od in zip(weights, seasons))
        assert optimum(art) == pytest.approx(independent, abs=1e-6)

    def test_line_set_delta(self, inst, pool):
        seasons = [{P: 300.0}, {Q: 300.0}]
        art = build_multiperiod_model(inst, pool, seasons, measure="line_set_delta", bound=0)
        sol = fm.solve(art)
        c0, c1 = (fm.decode_concept(art, sol, season=j) for j in range(2))
        assert set(c0.selected) == set(c1.selected)

    def test_errors(self, inst, pool):
        with pytest.raises(UnsupportedMeasure):
            build_multiperiod_model(inst, pool, [inst.od, inst.od], measure="transport_distance", bound=1)
        with pytest.raises(ValidationError):
            build_multiperiod_model(inst, pool, [inst.od])

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 100_000), st.sampled_from(["freq_norm", "line_set_delta"]))
    def test_objective_non_increasing_in_bound(self, seed, measure):
        rng = random.Random(seed)
        inst = gen.random_connected(rng, rng.randint(3, 4), rng.randint(0, 1))
        pool = gen.random_pool(rng, inst, 4, cover_links=True)
        seasons = [gen.random_od(rng, inst, 2, 20, 250) for _ in range(rng.randint(2, 3))]
        values = [optimum(build_multiperiod_model(inst, pool, seasons, measure=measure, bound=b))
                  for b in (0, 1, 2, 4, math.inf)]
        assert all(b <= a + 1e-6 for a, b in zip(values, values[1:]))
