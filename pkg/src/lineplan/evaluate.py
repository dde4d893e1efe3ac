"""Indicators and post-hoc analyses of a line concept."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Optional, Union

from . import milp
from .errors import InvalidParameter, LevelMismatch, PoolMismatch
from .network import Instance, LineConcept, LinePool
from .routing import LEVELS, RoutingResult, all_pairs_distances, shortest_paths_ptn

_TOL = 1e-9


# ---------------------------------------------------------------- indicators

@dataclass
class IndicatorReport:
    variable_cost: float
    fixed_cost: float
    vehicle_estimate: float
    vehicles_per_line: dict[str, int]
    vehicle_estimate_ceiling: int
    time_components: dict[str, float]
    coverage: float
    direct_travelers: float
    total_demand: float
    routed_passengers: float
    revenue: Optional[float] = None
    profit: Optional[float] = None

    @property
    def total_cost(self) -> float:
        return self.variable_cost + self.fixed_cost

    def to_dict(self) -> dict:
        return asdict(self)


def _is_direct(route, selected_links: list[frozenset]) -> bool:
    if route.lines and route.lines[0] is not None:
        return route.transfers == 0
    used = set(route.links)
    return any(used <= links for links in selected_links)


def indicators(instance: Instance, pool: LinePool, concept: LineConcept,
               routing: Optional[RoutingResult] = None,
               fare_per_unit: Optional[float] = None,
               subsidy_per_passenger: float = 0.0) -> IndicatorReport:
    """Cost, vehicle, travel time, coverage and direct traveller indicators.

    Revenue is enabled by ``fare_per_unit`` (money per unit of shortest-path
    length between origin and destination) plus an optional subsidy per
    transported passenger; profit is revenue minus total cost.
    """
    concept.check_against(pool)
    T = instance.period_T
    variable = sum(pool[l].cost_per_trip * f for l, f in concept.frequencies.items())
    fixed = sum(pool[l].fixed_cost for l in concept.selected)
    per_line = {l: pool[l].round_trip_time * concept.f(l) / T for l in concept.selected}
    vehicles = sum(per_line.values())
    ceilings = {l: math.ceil(v - _TOL) for l, v in per_line.items()}

    total = instance.total_demand
    times = {k: 0.0 for k in ("driving", "waiting", "transfer", "adaption")}
    routed = direct = 0.0
    revenue = None
    if routing is not None:
        times.update(routing.total_time_components)
        routed = routing.routed_passengers
        selected_links = [pool[l].links for l in concept.selected]
        direct = sum(r.passengers for g in routing.routes.values() for r in g
                     if _is_direct(r, selected_links))
        if fare_per_unit is not None:
            paths, _ = shortest_paths_ptn(instance, {od: 1.0 for od in routing.routes})
            revenue = 0.0
            for od, group in routing.routes.items():
                pax = sum(r.passengers for r in group)
                revenue += pax * (fare_per_unit * paths[od].length + subsidy_per_passenger)
    coverage = routed / total if total > 0 else 0.0
    profit = None if revenue is None else revenue - variable - fixed
    return IndicatorReport(variable, fixed, vehicles, ceilings, sum(ceilings.values()), times,
                           min(1.0, coverage), direct, total, routed, revenue, profit)


# ----------------------------------------------------------------- capacity

@dataclass(frozen=True)
class Violation:
    key: tuple
    load: float
    capacity: float

    @property
    def deficit(self) -> float:
        return self.load - self.capacity


@dataclass
class CapacityReport:
    level: str
    violations: list[Violation]
    slack: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "feasible": self.feasible,
            "violations": [{"arc": list(v.key), "load": v.load, "capacity": v.capacity,
                            "deficit": v.deficit} for v in self.violations],
        }


def _as_key(k) -> tuple:
    return k if isinstance(k, tuple) else (k,)


def check_capacity(pool: LinePool, concept: LineConcept, routing: RoutingResult,
                   level: Optional[str] = None) -> CapacityReport:
    """Compare loads with capacity on link, line or trip level.

    link: sum of f_l Q_l over lines on the link; line: f_l Q_l per (link,
    line); trip: Q_l per (link, line, trip). Finer routings are aggregated.
    """
    level = level or routing.level
    if level not in LEVELS:
        raise InvalidParameter(f"unknown level {level!r}")
    if LEVELS.index(level) > LEVELS.index(routing.level):
        raise LevelMismatch(f"{routing.level}-level routing cannot be checked on {level} level")
    loads = routing.loads_at(level)
    caps: dict = {}
    if level == "link":
        for link_id, lines in pool.lines_on_link.items():
            caps[link_id] = sum(concept.f(l.id) * l.capacity for l in lines)
    elif level == "line":
        for line in pool:
            for a in line.link_path:
                caps[(a, line.id)] = concept.f(line.id) * line.capacity
    else:
        for line in pool:
            for a in line.link_path:
                for trip in range(1, concept.f(line.id) + 1):
                    caps[(a, line.id, trip)] = line.capacity
    violations = []
    slack = {}
    for key in sorted(set(loads) | set(caps), key=lambda k: tuple(map(str, _as_key(k)))):
        load = loads.get(key, 0.0)
        cap = caps.get(key, 0.0)
        slack[key] = cap - load
        if load - cap > _TOL * max(1.0, cap):
            violations.append(Violation(_as_key(key), load, cap))
    return CapacityReport(level, violations, slack)


# ------------------------------------------------------------ link failures

@dataclass(frozen=True)
class LinkFailureResult:
    link: str
    unserved: float
    detoured: float
    added_minutes: float
    index: float


@dataclass
class FailureScanReport:
    policy: str
    unserved_penalty: float
    results: list[LinkFailureResult]

    @property
    def worst(self) -> Optional[LinkFailureResult]:
        if not self.results:
            return None
        return max(self.results, key=lambda r: r.index)  # first maximum in link-id order

    @property
    def worst_index(self) -> float:
        return self.worst.index if self.results else 0.0

    @property
    def mean_index(self) -> float:
        return sum(r.index for r in self.results) / len(self.results) if self.results else 0.0

    def to_dict(self) -> dict:
        worst = self.worst
        return {
            "policy": self.policy,
            "unserved_penalty": self.unserved_penalty,
            "worst_link": worst.link if worst else None,
            "worst_index": self.worst_index,
            "mean_index": self.mean_index,
            "links": [asdict(r) for r in self.results],
        }


Policy = Union[str, tuple]  # "reroute" | ("bridge", slowdown)


def link_failure_scan(instance: Instance, pool: Optional[LinePool] = None,
                      concept: Optional[LineConcept] = None, policy: Policy = "reroute",
                      unserved_penalty: Optional[float] = None) -> FailureScanReport:
    """Fail every link in turn and re-route passengers on shortest paths.

    Passengers may use links served by the concept (all links without one).
    ``reroute`` removes the failed link, ``("bridge", s)`` multiplies its
    driving time by ``s``. The per-link index is added passenger minutes plus
    ``unserved_penalty`` per passenger left without a path; the default
    penalty is three times the longest shortest path before the failure.
    """
    if policy == "reroute":
        slowdown = None
        name = "reroute"
    elif isinstance(policy, tuple) and policy[0] == "bridge":
        slowdown = float(policy[1])
        if slowdown < 1:
            raise InvalidParameter("bridge slowdown factor must be >= 1")
        name = f"bridge({slowdown:g})"
    else:
        raise InvalidParameter(f"unknown policy {policy!r}")
    if concept is not None and pool is not None:
        served = {a for l in concept.selected for a in pool[l].link_path}
    else:
        served = {a.id for a in instance.links}
    base, _missing = shortest_paths_ptn(instance, links=served)
    if unserved_penalty is None:
        dists = all_pairs_distances(instance, served)
        diameter = max((d for row in dists.values() for d in row.values()), default=0.0)
        unserved_penalty = 3.0 * diameter
    results = []
    for link in sorted(instance.links, key=lambda a: a.id):
        affected = {od: instance.od[od] for od, p in base.items() if link.id in p.links}
        unserved = detoured = added = 0.0
        if affected:
            if slowdown is None:
                paths, missing = shortest_paths_ptn(instance, affected, served - {link.id})
            else:
                slowed = [a if a.id != link.id else replace(a, length_time=a.length_time * slowdown)
                          for a in instance.links]
                paths, missing = shortest_paths_ptn(instance.with_links(slowed), affected, served)
            for od in missing:
                unserved += affected[od]
            for od, p in paths.items():
                delta = p.length - base[od].length
                if delta > _TOL:
                    detoured += affected[od]
                    added += delta * affected[od]
        results.append(LinkFailureResult(link.id, unserved, detoured, added,
                                         added + unserved_penalty * unserved))
    return FailureScanReport(name, unserved_penalty, results)


# --------------------------------------------------------------- mode split

def mode_split(transit_time: float, alternative_time: float,
               model: Union[str, tuple] = "all_or_nothing") -> float:
    """Share of demand choosing transit.

    ``"all_or_nothing"``: 1 iff transit is strictly faster. ``("logit", theta)``:
    exp(-theta t_transit) / (exp(-theta t_transit) + exp(-theta t_alt)).
    """
    if transit_time <= 0 or alternative_time <= 0:
        raise InvalidParameter("travel times must be positive")
    if model == "all_or_nothing":
        return 1.0 if transit_time < alternative_time else 0.0
    if isinstance(model, tuple) and model[0] == "logit":
        theta = float(model[1])
        if theta <= 0:
            raise InvalidParameter("logit scale theta must be positive")
        z = theta * (transit_time - alternative_time)
        if z > 0:
            e = math.exp(-z)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(z))
    raise InvalidParameter(f"unknown mode choice model {model!r}")


# ------------------------------------------------------------ dissimilarity

def jaccard_distance(a: frozenset, b: frozenset) -> float:
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)


def _transport_distance(f1: list[int], f2: list[int], ground: list[list[float]]) -> float:
    m1, m2 = sum(f1), sum(f2)
    mass = max(m1, m2)
    if mass == 0:
        return 0.0
    model = milp.MilpModel("transport")
    n = len(f1)
    for i in range(n):
        for j in range(n):
            if f1[i] and f2[j]:
                model.add_var(f"x[{i}][{j}]", 0.0, math.inf, obj=ground[i][j])
    names = {v.name for v in model.variables}
    for i in range(n):
        row = {f"x[{i}][{j}]": 1.0 for j in range(n) if f"x[{i}][{j}]" in names}
        if row:
            model.add_constr(row, "<=", f1[i])
    for j in range(n):
        col = {f"x[{i}][{j}]": 1.0 for i in range(n) if f"x[{i}][{j}]" in names}
        if col:
            model.add_constr(col, "<=", f2[j])
    if names:
        model.add_constr({name: 1.0 for name in names}, "==", min(m1, m2))
    sol = milp.solve_lp_relaxation(model)
    moved = sol.objective_value if names else 0.0
    return (moved + abs(m1 - m2)) / mass


def concept_dissimilarity(c1: LineConcept, c2: LineConcept, pool: LinePool,
                          measure: Union[str, tuple] = "freq_norm") -> float:
    """Distance between two line concepts on the same pool.

    ``("freq_norm", p)`` (``"freq_norm"`` means p=1): p-norm of the frequency
    difference. ``"line_set_delta"``: lines added or removed.
    ``"transport_distance"``: cheapest way to move the frequency mass of c1
    onto c2 with Jaccard distance of link sets as unit cost, unmatched mass
    at cost 1, divided by the larger total frequency.
    """
    for c in (c1, c2):
        unknown = set(c.frequencies) - set(pool.ids)
        if unknown:
            raise PoolMismatch(f"concept references lines outside the pool: {sorted(unknown)}")
    v1, v2 = c1.vector(pool), c2.vector(pool)
    if measure == "freq_norm" or (isinstance(measure, tuple) and measure[0] == "freq_norm"):
        p = 1 if isinstance(measure, str) else measure[1]
        diffs = [abs(a - b) for a, b in zip(v1, v2)]
        if p == math.inf or p == "inf":
            return float(max(diffs, default=0))
        p = float(p)
        if p < 1:
            raise InvalidParameter("norm order must be >= 1")
        return float(sum(d ** p for d in diffs) ** (1.0 / p))
    if measure == "line_set_delta":
        return float(sum(1 for a, b in zip(v1, v2) if (a > 0) != (b > 0)))
    if measure == "transport_distance":
        lines = pool.lines
        ground = [[jaccard_distance(a.links, b.links) for b in lines] for a in lines]
        return _transport_distance(v1, v2, ground)
    raise InvalidParameter(f"unknown dissimilarity measure {measure!r}")


# ------------------------------------------------------------- square root

def sqrt_frequency(demand: float, wait_value: float, trip_cost: float, period: float) -> float:
    """Frequency minimizing trip_cost * f + wait_value * demand * period / (2 f).

    The optimum sqrt(w d T / (2 c)) grows with the square root of demand.
    """
    for name, v in (("demand", demand), ("wait_value", wait_value),
                    ("trip_cost", trip_cost), ("period", period)):
        if not v > 0:
            raise InvalidParameter(f"{name} must be positive")
    return math.sqrt(wait_value * demand * period / (2.0 * trip_cost))
