import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lineplan.errors import Infeasible, InvalidParameter, LevelMismatch
from lineplan.network import Instance, Line, LineConcept, LinePool, Link
from lineplan.routing import (FixedPenalty, FrequencyBased, Timetable, assign_trips, build_cgn,
                              expected_wait_unsynchronized, half_headway, loads_from_routes,
                              regular_timetable, route_line_level, route_link_level,
                              save_arc_loads, save_routes, shortest_paths_ptn, traffic_loads)

import gen
from conftest import three_line_pool, three_station_instance


def square():
    links = (Link("a", "v1", "v2", 1), Link("b", "v2", "v3", 1),
             Link("c", "v3", "v4", 1), Link("d", "v4", "v1", 1))
    return Instance(("v1", "v2", "v3", "v4"), links, {("v1", "v3"): 10.0})


class TestShortestPaths:
    def test_fixture(self, inst):
        paths, missing = shortest_paths_ptn(inst)
        assert paths[("s1", "s3")].links == ("a1", "a2") and not missing

    def test_lexicographic_tie(self):
        paths, _ = shortest_paths_ptn(square())
        # both routes have length 2; v1-v2-v3 < v1-v4-v3
        assert paths[("v1", "v3")].stations == ("v1", "v2", "v3")

    def test_disconnected_pair_collected(self):
        inst = Instance(("a", "b", "c"), (Link("x", "a", "b", 1),), {("a", "c"): 3.0, ("a", "b"): 1.0})
        paths, missing = shortest_paths_ptn(inst)
        assert list(paths) == [("a", "b")] and missing == [("a", "c")]


class TestTrafficLoads:
    def test_fixture(self, inst):
        paths, _ = shortest_paths_ptn(inst)
        assert traffic_loads(paths, inst.od) == {"a1": 120, "a2": 120}

    def test_no_demand(self):
        inst = three_station_instance(od=0)
        assert sum(traffic_loads(shortest_paths_ptn(inst)[0], inst.od, inst).values()) == 0

    def test_loads_add(self, inst):
        inst = inst.with_od({("s1", "s3"): 5.0, ("s2", "s3"): 7.0})
        paths, _ = shortest_paths_ptn(inst)
        assert traffic_loads(paths, inst.od) == {"a1": 5.0, "a2": 12.0}


class TestCgn:
    def test_fixture_counts(self, inst, pool):
        cgn = build_cgn(inst, pool)
        assert len(cgn.line_nodes) == 7
        at_s2 = [(a.tail[1], a.head[1]) for a in cgn.arcs_of_kind("transfer") if a.tail[0] == "s2"]
        assert sorted(at_s2) == sorted((x, y) for x in ("l1", "l2", "l3") for y in ("l1", "l2", "l3") if x != y)
        assert len(cgn.arcs_of_kind("driving")) == 2 * (1 + 1 + 2)
        assert len(cgn.nodes) == 7 + 2

    def test_frequency_transfer_label(self, inst, pool, concept):
        cgn = build_cgn(inst, pool, FrequencyBased(concept))
        into_l2 = {a.time for a in cgn.arcs_of_kind("transfer") if a.head[1] == "l2"}
        assert into_l2 == {15.0}

    def test_fixed_penalty(self, inst, pool):
        cgn = build_cgn(inst, pool, FixedPenalty(5))
        assert {a.time for a in cgn.arcs_of_kind("transfer")} == {5.0}

    def test_hybrid_rule(self):
        c = LineConcept({"slow": 4, "fast": 12})
        model = FrequencyBased(c, hybrid=True)
        assert model.minutes("slow", 60) == 5.0
        assert model.minutes("fast", 60) == 2.5

    def test_adaption_labels(self, inst, pool, concept):
        cgn = build_cgn(inst, pool, adaption_model=FrequencyBased(concept))
        assert {a.head[1]: a.time for a in cgn.arcs_of_kind("boarding")} == {"l1": 30.0, "l3": 30.0}

    def test_zero_frequency_line_rejected(self, inst, pool):
        with pytest.raises(InvalidParameter):
            build_cgn(inst, pool, FrequencyBased(LineConcept({"l1": 1, "l3": 1})))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000))
    def test_zero_penalty_matches_ptn(self, seed):
        rng = random.Random(seed)
        inst = gen.random_connected(rng, rng.randint(2, 6), rng.randint(0, 3))
        inst = inst.with_od(gen.random_od(rng, inst, 4))
        pool = gen.random_pool(rng, inst, 3, cover_links=True)
        routing = route_line_level(build_cgn(inst, pool, FixedPenalty(0)))
        paths, _ = shortest_paths_ptn(inst)
        for pair, group in routing.routes.items():
            assert group[0].travel_time == pytest.approx(paths[pair].length)


class TestLineRouting:
    def test_ignore_capacity(self, inst, pool):
        routing = route_line_level(build_cgn(inst, pool))
        [route] = routing.routes[("s1", "s3")]
        assert route.lines == ("l3", "l3") and route.passengers == 120

    def test_enforce_capacity_split(self, inst, pool, concept):
        routing = route_line_level(build_cgn(inst, pool), capacities=concept)
        assert routing.arc_loads == pytest.approx(
            {("a1", "l1"): 60, ("a2", "l2"): 60, ("a1", "l3"): 60, ("a2", "l3"): 60})
        assert sum(r.passengers for r in routing.routes[("s1", "s3")]) == pytest.approx(120)

    def test_non_binding_capacity(self, pool):
        inst = three_station_instance(od=10.0)
        cgn = build_cgn(inst, pool)
        big = LineConcept({"l1": 4, "l2": 4, "l3": 4})
        assert route_line_level(cgn, capacities=big).arc_loads == route_line_level(cgn).arc_loads

    def test_insufficient_capacity(self, inst, pool):
        with pytest.raises(Infeasible):
            route_line_level(build_cgn(inst, pool), capacities=LineConcept({"l3": 1}))

    def test_export(self, inst, pool, concept, tmp_path):
        routing = route_line_level(build_cgn(inst, pool), capacities=concept)
        save_routes(routing, tmp_path / "r.csv")
        save_arc_loads(routing, tmp_path / "l.csv")
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert rows[0] == "origin,destination,level,path,passengers" and len(rows) == 3
        assert (tmp_path / "l.csv").read_text().splitlines()[0] == "link,line,load"


class TestTrips:
    def test_fixture_overload_on_first_feasible_trip(self, inst, pool, concept):
        line = route_line_level(build_cgn(inst, pool), capacities=concept)
        tt = regular_timetable(inst, pool, concept)
        assert tt.offsets["l2"] == (0.0, 30.0)
        trip = assign_trips(line, tt, concept)
        # the l1 trip departs s1 at 0 and reaches s2 at 10; l2 departs s2 at 0 and 30
        assert trip.arc_loads[("a2", "l2", 2)] == pytest.approx(60)
        assert ("a2", "l2", 1) not in trip.arc_loads

    def test_single_trip_carries_group(self, inst, pool):
        c = LineConcept({"l3": 3})
        line = route_line_level(build_cgn(inst, pool, lines=["l3"]))
        trip = assign_trips(line, regular_timetable(inst, pool, c), c)
        assert trip.arc_loads == {("a1", "l3", 1): 120.0, ("a2", "l3", 1): 120.0}

    def test_boundary_boarding_inclusive(self):
        links = (Link("x", "u", "v", 30.0), Link("y", "v", "w", 5.0))
        inst = Instance(("u", "v", "w"), links, {("u", "w"): 10.0})
        pool = LinePool.build(inst, [Line("A", ("x",)), Line("B", ("y",))])
        c = LineConcept({"A": 1, "B": 2})
        tt = regular_timetable(inst, pool, c)
        assert tt.offsets["B"] == (0.0, 30.0)
        line = route_line_level(build_cgn(inst, pool))
        trip = assign_trips(line, tt, c)
        # arrival at v at exactly 30 boards the trip leaving at 30 (trip 2), no waiting
        assert trip.arc_loads[("y", "B", 2)] == 10.0
        assert trip.routes[("u", "w")][0].transfer == 0.0

    def test_level_mismatch(self, inst, pool, concept):
        with pytest.raises(LevelMismatch):
            assign_trips(route_link_level(inst), regular_timetable(inst, pool, concept))

    def test_timetable_invariants(self):
        with pytest.raises(Exception):
            Timetable(60.0, {"l": (0.0, 60.0)}, {"l": (0.0, 1.0)}, {"l": ("a", "b")})

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 100_000))
    def test_aggregation_consistency(self, seed):
        rng = random.Random(seed)
        inst = gen.random_connected(rng, rng.randint(2, 6), rng.randint(0, 3))
        inst = inst.with_od(gen.random_od(rng, inst, 4))
        pool = gen.random_pool(rng, inst, 4, cover_links=True)
        concept = LineConcept({l.id: rng.randint(1, 4) for l in pool})
        line = route_line_level(build_cgn(inst, pool))
        trip = assign_trips(line, regular_timetable(inst, pool, concept), concept,
                            ready_time=rng.uniform(0, 60))
        for pair, d in inst.od.items():
            assert sum(r.passengers for r in trip.routes[pair]) == pytest.approx(d)
        assert all(v >= 0 for v in trip.arc_loads.values())
        assert trip.loads_at("line") == pytest.approx(line.arc_loads)
        link_from_trip = trip.loads_at("link")
        link_from_line = line.loads_at("link")
        assert link_from_trip == pytest.approx(link_from_line)


class TestWaitingFormulas:
    @pytest.mark.parametrize("k,T,expected", [(1, 60, 30.0), (3, 60, 15.0)])
    def test_unsynchronized(self, k, T, expected):
        assert expected_wait_unsynchronized(k, T) == expected

    def test_invalid_k(self):
        with pytest.raises(InvalidParameter):
            expected_wait_unsynchronized(0, 60)

    def test_half_headway(self):
        assert half_headway(2, 60) == 15.0
        with pytest.raises(InvalidParameter):
            half_headway(0, 60)
