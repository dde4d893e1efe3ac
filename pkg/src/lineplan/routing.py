"""Passenger routes on link, line and trip level.

Link level routes are shortest paths in the PTN. Line level routes are paths
in the change-and-go network (CGN), either plain shortest paths or a
capacity-aware minimum travel time multicommodity flow. Trip level routes
come from propagating line level routes through a periodic timetable.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Optional, Sequence, Union

from .errors import Infeasible, InvalidParameter, LevelMismatch, NoPathError, ValidationError
from .network import Instance, LineConcept, LinePool, ODPair
from . import milp

LEVELS = ("link", "line", "trip")
ORIGIN = "^"
DEST = "$"

_TIE = 9  # decimals used when comparing path lengths for ties


# ----------------------------------------------------------------------- routes

@dataclass(frozen=True)
class Route:
    """One passenger group travelling along one path.

    ``lines`` and ``trips`` run parallel to ``links``; they are ``None`` on
    levels that do not resolve them. Time fields are per passenger, minutes.
    """

    stations: tuple[str, ...]
    links: tuple[str, ...]
    passengers: float
    lines: tuple[Optional[str], ...] = ()
    trips: tuple[Optional[int], ...] = ()
    driving: float = 0.0
    waiting: float = 0.0
    transfer: float = 0.0
    adaption: float = 0.0

    @property
    def travel_time(self) -> float:
        return self.driving + self.waiting + self.transfer + self.adaption

    @property
    def transfers(self) -> int:
        if not self.lines or self.lines[0] is None:
            return 0
        return sum(1 for a, b in zip(self.lines, self.lines[1:]) if a != b)

    def legs(self) -> list[tuple[str, int, int]]:
        """Maximal same-line segments as (line, first link index, end index)."""
        out = []
        start = 0
        for i in range(1, len(self.links) + 1):
            if i == len(self.links) or self.lines[i] != self.lines[start]:
                out.append((self.lines[start], start, i))
                start = i
        return out

    def describe(self) -> str:
        parts = [self.stations[0]]
        for i, a in enumerate(self.links):
            tag = a
            if self.lines and self.lines[i] is not None:
                tag += f":{self.lines[i]}"
            if self.trips and self.trips[i] is not None:
                tag += f":trip_{self.trips[i]}"
            parts.append(f"[{tag}]")
            parts.append(self.stations[i + 1])
        return "-".join(parts)


def _arc_key(level: str, route: Route, i: int):
    if level == "link":
        return route.links[i]
    if level == "line":
        return (route.links[i], route.lines[i])
    return (route.links[i], route.lines[i], route.trips[i])


def loads_from_routes(routes: Mapping[ODPair, Sequence[Route]], level: str) -> dict:
    loads: dict = defaultdict(float)
    for group in routes.values():
        for r in group:
            for i in range(len(r.links)):
                loads[_arc_key(level, r, i)] += r.passengers
    return dict(loads)


@dataclass
class RoutingResult:
    level: str
    routes: dict[ODPair, list[Route]]
    arc_loads: dict = field(default_factory=dict)
    total_time_components: dict[str, float] = field(default_factory=dict)
    unrouted: dict[ODPair, float] = field(default_factory=dict)

    @classmethod
    def from_routes(cls, level: str, routes: Mapping[ODPair, list[Route]],
                    unrouted: Optional[Mapping[ODPair, float]] = None) -> "RoutingResult":
        if level not in LEVELS:
            raise InvalidParameter(f"unknown level {level!r}")
        totals = {k: 0.0 for k in ("driving", "waiting", "transfer", "adaption")}
        for group in routes.values():
            for r in group:
                for k in totals:
                    totals[k] += getattr(r, k) * r.passengers
        return cls(level, {od: list(g) for od, g in routes.items()},
                   loads_from_routes(routes, level), totals, dict(unrouted or {}))

    @property
    def routed_passengers(self) -> float:
        return sum(r.passengers for g in self.routes.values() for r in g)

    def loads_at(self, level: str) -> dict:
        """Arc loads aggregated to ``level`` (which must not be finer than ours)."""
        if LEVELS.index(level) > LEVELS.index(self.level):
            raise LevelMismatch(f"cannot refine {self.level}-level loads to {level} level")
        return loads_from_routes(self.routes, level)


def save_routes(result: RoutingResult, path) -> None:
    """Write ``origin,destination,level,path,passengers``, one row per route."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "destination", "level", "path", "passengers"])
        for (s, t), group in result.routes.items():
            for r in group:
                w.writerow([s, t, result.level, r.describe(), repr(round(float(r.passengers), 6))])


def save_arc_loads(result: RoutingResult, path) -> None:
    """Write the arc loads of ``result`` with one column per key component."""
    cols = {"link": ["link"], "line": ["link", "line"], "trip": ["link", "line", "trip"]}[result.level]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["load"])
        for key in sorted(result.arc_loads, key=lambda k: tuple(map(str, k)) if isinstance(k, tuple) else (k,)):
            parts = list(key) if isinstance(key, tuple) else [key]
            w.writerow(parts + [repr(round(float(result.arc_loads[key]), 6))])


# ------------------------------------------------------------- shortest paths

def _lex_dijkstra(adj: Mapping[Hashable, Sequence[tuple]], source, targets=None):
    """Shortest paths from ``source`` with lexicographically smallest node sequence on ties.

    ``adj[v]`` is a sequence of (head, weight, arc). Returns {node: (dist, nodes, arcs)}.
    Weights must be non-negative.
    """
    best: dict = {}
    heap = [(0.0, (source,), 0.0, ())]
    remaining = set(targets) if targets is not None else None
    while heap:
        key, nodes, dist, arcs = heapq.heappop(heap)
        v = nodes[-1]
        if v in best:
            continue
        best[v] = (dist, nodes, arcs)
        if remaining is not None:
            remaining.discard(v)
            if not remaining:
                break
        for head, w, arc in adj.get(v, ()):
            if head in best:
                continue
            nd = dist + w
            heapq.heappush(heap, (round(nd, _TIE), nodes + (head,), nd, arcs + (arc,)))
    return best


@dataclass(frozen=True)
class PtnPath:
    stations: tuple[str, ...]
    links: tuple[str, ...]
    length: float


def _ptn_adjacency(instance: Instance, allowed: Optional[Iterable[str]] = None):
    allowed = None if allowed is None else set(allowed)
    adj: dict[str, list] = {v: [] for v in instance.stations}
    for link in instance.links:
        if allowed is not None and link.id not in allowed:
            continue
        adj[link.source].append((link.target, link.length_time, link.id))
        adj[link.target].append((link.source, link.length_time, link.id))
    return adj


def shortest_paths_ptn(instance: Instance, od: Optional[Mapping[ODPair, float]] = None,
                       links: Optional[Iterable[str]] = None):
    """Shortest PTN path per OD pair.

    Returns ``(paths, missing)``; disconnected pairs are collected in
    ``missing`` rather than raised. ``links`` restricts the usable links.
    """
    od = instance.od if od is None else od
    adj = _ptn_adjacency(instance, links)
    by_origin: dict[str, list[str]] = defaultdict(list)
    for s, t in od:
        by_origin[s].append(t)
    paths: dict[ODPair, PtnPath] = {}
    missing: list[ODPair] = []
    for s, targets in by_origin.items():
        best = _lex_dijkstra(adj, s, targets)
        for t in targets:
            if t in best:
                dist, nodes, arcs = best[t]
                paths[(s, t)] = PtnPath(nodes, arcs, dist)
            else:
                missing.append((s, t))
    return {pair: paths[pair] for pair in od if pair in paths}, missing


def all_pairs_distances(instance: Instance, links: Optional[Iterable[str]] = None) -> dict:
    adj = _ptn_adjacency(instance, links)
    return {s: {t: v[0] for t, v in _lex_dijkstra(adj, s).items()} for s in instance.stations}


def traffic_loads(paths: Mapping[ODPair, PtnPath], od: Mapping[ODPair, float],
                  instance: Optional[Instance] = None) -> dict[str, float]:
    """Passengers per link when every OD pair travels on its given path."""
    loads: dict[str, float] = {}
    if instance is not None:
        loads = {link.id: 0.0 for link in instance.links}
    for pair, value in od.items():
        for a in paths[pair].links:
            loads[a] = loads.get(a, 0.0) + value
    return loads


def _waiting(stations: Sequence[str], boarded_at: set, dwell) -> float:
    if not dwell:
        return 0.0
    total = 0.0
    for v in stations[1:-1]:
        if v not in boarded_at:
            total += dwell.get(v, 0.0) if isinstance(dwell, Mapping) else float(dwell)
    return total


def route_link_level(instance: Instance, od: Optional[Mapping[ODPair, float]] = None,
                     links: Optional[Iterable[str]] = None, dwell=None) -> RoutingResult:
    """Route every OD pair on its shortest PTN path (no line information)."""
    od = instance.od if od is None else od
    paths, missing = shortest_paths_ptn(instance, od, links)
    routes = {}
    for pair, p in paths.items():
        routes[pair] = [Route(p.stations, p.links, od[pair], lines=(None,) * len(p.links),
                              driving=p.length, waiting=_waiting(p.stations, set(), dwell))]
    return RoutingResult.from_routes("link", routes, {pair: od[pair] for pair in missing})


# ------------------------------------------------------------------------ CGN

@dataclass(frozen=True)
class FixedPenalty:
    minutes: float = 5.0


@dataclass(frozen=True)
class FrequencyBased:
    """T/(2 f) estimate; with ``hybrid`` low-frequency lines get a flat value instead."""

    concept: LineConcept
    hybrid: bool = False
    threshold_per_hour: float = 6.0
    low_frequency_minutes: float = 5.0

    def minutes(self, line_id: str, period: float) -> float:
        f = self.concept.f(line_id)
        if f <= 0:
            raise InvalidParameter(f"line {line_id} has frequency 0 in a frequency-based model")
        if self.hybrid and f * 60.0 / period <= self.threshold_per_hour:
            return self.low_frequency_minutes
        return half_headway(f, period)


def half_headway(f: int, period: float) -> float:
    """Expected transfer/adaption time T/(2f) for a regular line."""
    if f < 1:
        raise InvalidParameter("frequency must be at least 1")
    return period / (2.0 * f)


def expected_wait_unsynchronized(k: int, period: float) -> float:
    """Expected wait T/(k+1) for ``k`` periodic but unsynchronized departures."""
    if k < 1:
        raise InvalidParameter("k must be at least 1")
    return period / (k + 1)


TransferModel = Union[FixedPenalty, FrequencyBased]

CgnNode = tuple[str, str]


@dataclass(frozen=True)
class CgnArc:
    tail: CgnNode
    head: CgnNode
    kind: str  # driving | transfer | boarding | alighting
    time: float
    link: Optional[str] = None
    line: Optional[str] = None


@dataclass
class Cgn:
    instance: Instance
    pool: LinePool
    lines: tuple[str, ...]
    nodes: tuple[CgnNode, ...]
    arcs: tuple[CgnArc, ...]

    @property
    def line_nodes(self) -> list[CgnNode]:
        return [n for n in self.nodes if n[1] not in (ORIGIN, DEST)]

    def arcs_of_kind(self, kind: str) -> list[CgnArc]:
        return [a for a in self.arcs if a.kind == kind]

    def adjacency(self, origin: Optional[str] = None, dest: Optional[str] = None):
        """Adjacency for routing one OD pair: only its own virtual arcs are kept."""
        adj: dict = defaultdict(list)
        for arc in self.arcs:
            if arc.kind == "boarding" and arc.tail[0] != origin:
                continue
            if arc.kind == "alighting" and arc.head[0] != dest:
                continue
            adj[arc.tail].append((arc.head, arc.time, arc))
        return adj


def build_cgn(instance: Instance, pool: LinePool, transfer_model: TransferModel = FixedPenalty(),
              adaption_model: Optional[FrequencyBased] = None,
              lines: Optional[Iterable[str]] = None,
              od: Optional[Mapping[ODPair, float]] = None) -> Cgn:
    """Change-and-go network over ``lines`` (default: the whole pool).

    Driving arcs carry the link driving time in both directions, transfer
    arcs into line l carry the transfer estimate of l, boarding arcs from a
    virtual origin carry the adaption estimate (0 without a model) and
    alighting arcs are free.
    """
    line_ids = list(pool.ids if lines is None else lines)
    od = instance.od if od is None else od
    T = instance.period_T
    nodes: list[CgnNode] = []
    arcs: list[CgnArc] = []
    at_station: dict[str, list[str]] = defaultdict(list)
    for lid in line_ids:
        line = pool[lid]
        for v in line.stations:
            nodes.append((v, lid))
            at_station[v].append(lid)
        for i, a in enumerate(line.link_path):
            u, v = line.stations[i], line.stations[i + 1]
            length = instance.link_by_id[a].length_time
            arcs.append(CgnArc((u, lid), (v, lid), "driving", length, a, lid))
            arcs.append(CgnArc((v, lid), (u, lid), "driving", length, a, lid))

    def transfer_time(lid):
        if isinstance(transfer_model, FixedPenalty):
            return float(transfer_model.minutes)
        return transfer_model.minutes(lid, T)

    def adaption_time(lid):
        return 0.0 if adaption_model is None else adaption_model.minutes(lid, T)

    into = {lid: transfer_time(lid) for lid in line_ids}
    board = {lid: adaption_time(lid) for lid in line_ids}
    for v in instance.stations:
        here = at_station.get(v, [])
        for l1 in here:
            for l2 in here:
                if l1 != l2:
                    arcs.append(CgnArc((v, l1), (v, l2), "transfer", into[l2], None, l2))
    origins = sorted({s for s, _ in od})
    dests = sorted({t for _, t in od})
    for s in origins:
        nodes.append((s, ORIGIN))
        for lid in at_station.get(s, []):
            arcs.append(CgnArc((s, ORIGIN), (s, lid), "boarding", board[lid], None, lid))
    for t in dests:
        nodes.append((t, DEST))
        for lid in at_station.get(t, []):
            arcs.append(CgnArc((t, lid), (t, DEST), "alighting", 0.0, None, lid))
    return Cgn(instance, pool, tuple(line_ids), tuple(nodes), tuple(arcs))


def route_from_cgn_arcs(arcs: Sequence[CgnArc], passengers: float, dwell=None) -> Route:
    stations: list[str] = []
    links, lines = [], []
    driving = transfer = adaption = 0.0
    boarded_at: set[str] = set()
    for arc in arcs:
        if arc.kind == "driving":
            if not stations:
                stations.append(arc.tail[0])
            stations.append(arc.head[0])
            links.append(arc.link)
            lines.append(arc.line)
            driving += arc.time
        elif arc.kind == "transfer":
            transfer += arc.time
            boarded_at.add(arc.tail[0])
        elif arc.kind == "boarding":
            adaption += arc.time
    waiting = _waiting(stations, boarded_at, dwell)
    return Route(tuple(stations), tuple(links), passengers, tuple(lines), (None,) * len(links),
                 driving=driving, waiting=waiting, transfer=transfer, adaption=adaption)


def decompose_flow(arc_flow: Mapping[Hashable, float], tails: Mapping, heads: Mapping,
                   source, sink, tol: float = 1e-9) -> list[tuple[list, float]]:
    """Split an s-t flow into paths; circulations are cancelled. Deterministic order."""
    flow = {a: x for a, x in arc_flow.items() if x > tol}
    out_arcs: dict = defaultdict(list)
    for a in flow:
        out_arcs[tails[a]].append(a)
    for v in out_arcs:
        out_arcs[v].sort(key=lambda a: (-flow[a], str(a)))
    paths = []
    while True:
        v = source
        walk: list = []
        pos = {source: 0}
        while v != sink:
            nxt = next((a for a in out_arcs.get(v, ()) if flow.get(a, 0.0) > tol), None)
            if nxt is None:
                break
            walk.append(nxt)
            v = heads[nxt]
            if v in pos:  # cycle: cancel it and restart
                cycle = walk[pos[v]:]
                amount = min(flow[a] for a in cycle)
                for a in cycle:
                    flow[a] -= amount
                walk = walk[:pos[v]]
                for key in [n for n, p in pos.items() if p > pos[v]]:
                    del pos[key]
                continue
            pos[v] = len(walk)
        if v != sink or not walk:
            break
        amount = min(flow[a] for a in walk)
        for a in walk:
            flow[a] -= amount
        paths.append((walk, amount))
    return paths


def route_line_level(cgn: Cgn, od: Optional[Mapping[ODPair, float]] = None,
                     capacities: Optional[LineConcept] = None, dwell=None) -> RoutingResult:
    """Line-level routing in the CGN.

    Without ``capacities`` every OD pair takes its shortest CGN path. With a
    concept, a minimum total travel time flow is computed subject to
    ``f_l * Q_l`` passengers per line and link (both directions together).
    """
    instance = cgn.instance
    od = instance.od if od is None else od
    if capacities is None:
        routes, missing = {}, {}
        by_origin: dict[str, list[str]] = defaultdict(list)
        for s, t in od:
            by_origin[s].append(t)
        for s, targets in by_origin.items():
            for t in targets:
                best = _lex_dijkstra(cgn.adjacency(s, t), (s, ORIGIN), [(t, DEST)])
                if (t, DEST) not in best:
                    missing[(s, t)] = od[(s, t)]
                    continue
                _, _, arcs = best[(t, DEST)]
                routes[(s, t)] = [route_from_cgn_arcs(arcs, od[(s, t)], dwell)]
        routes = {pair: routes[pair] for pair in od if pair in routes}
        return RoutingResult.from_routes("line", routes, missing)
    return _capacitated_line_routing(cgn, od, capacities, dwell)


def _capacitated_line_routing(cgn: Cgn, od, concept: LineConcept, dwell) -> RoutingResult:
    model = milp.MilpModel("line-routing")
    arcs = cgn.arcs
    tails = {i: a.tail for i, a in enumerate(arcs)}
    heads = {i: a.head for i, a in enumerate(arcs)}
    usage: dict[tuple[str, str], dict[str, float]] = defaultdict(dict)
    var_of: dict[ODPair, dict[int, str]] = {}
    missing = {}
    for k, (s, t) in enumerate(od):
        best = _lex_dijkstra(cgn.adjacency(s, t), (s, ORIGIN), [(t, DEST)])
        if (t, DEST) not in best:
            missing[(s, t)] = od[(s, t)]
            continue
        vars_k = {}
        balance: dict = defaultdict(dict)
        for i, arc in enumerate(arcs):
            if arc.kind == "boarding" and arc.tail[0] != s:
                continue
            if arc.kind == "alighting" and arc.head[0] != t:
                continue
            name = f"x[{k}][{i}]"
            model.add_var(name, 0.0, math.inf, obj=arc.time)
            vars_k[i] = name
            balance[arc.tail][name] = balance[arc.tail].get(name, 0.0) + 1.0
            balance[arc.head][name] = balance[arc.head].get(name, 0.0) - 1.0
            if arc.kind == "driving":
                usage[(arc.link, arc.line)][name] = 1.0
        for node, coefs in balance.items():
            rhs = od[(s, t)] if node == (s, ORIGIN) else (-od[(s, t)] if node == (t, DEST) else 0.0)
            model.add_constr(coefs, "==", rhs, name=f"flow[{k}][{node}]")
        var_of[(s, t)] = vars_k
    for (a, lid), coefs in usage.items():
        line = cgn.pool[lid]
        model.add_constr(coefs, "<=", concept.f(lid) * line.capacity, name=f"cap[{a},{lid}]")
    sol = milp.solve_lp_relaxation(model)
    if sol.status is not milp.Status.OPTIMAL:
        raise Infeasible("line capacities are insufficient for the demand")
    routes = {}
    for pair, vars_k in var_of.items():
        flow = {i: sol.values[name] for i, name in vars_k.items()}
        paths = decompose_flow(flow, tails, heads, (pair[0], ORIGIN), (pair[1], DEST))
        routes[pair] = [route_from_cgn_arcs([arcs[i] for i in walk], amount, dwell)
                        for walk, amount in paths]
    return RoutingResult.from_routes("line", routes, missing)


# ------------------------------------------------------------------ timetable

@dataclass(frozen=True)
class Timetable:
    """Departure offsets of each line's trips at its first station.

    Trip ``j`` (1-based) of line ``l`` leaves the first station at
    ``offsets[l][j-1]`` and the last station (reverse direction) at the same
    offset. ``cumulative[l][i]`` is the running time from the first station
    to station ``i`` including dwell at intermediate stops.
    """

    period: float
    offsets: Mapping[str, tuple[float, ...]]
    cumulative: Mapping[str, tuple[float, ...]]
    stations: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        for lid, offs in self.offsets.items():
            if any(not (0 <= o < self.period) for o in offs):
                raise ValidationError(f"timetable offsets of {lid} must lie in [0, T)")
            if list(offs) != sorted(offs):
                raise ValidationError(f"timetable offsets of {lid} must be sorted")

    def check_concept(self, concept: LineConcept):
        for lid in concept.selected:
            if len(self.offsets.get(lid, ())) != concept.f(lid):
                raise ValidationError(f"timetable trip count of {lid} differs from its frequency")


def _cumulative(instance: Instance, pool: LinePool, lid: str, dwell) -> tuple[float, ...]:
    line = pool[lid]
    cum = [0.0]
    for i, a in enumerate(line.link_path):
        stop = 0.0
        if i > 0 and dwell:
            v = line.stations[i]
            stop = dwell.get(v, 0.0) if isinstance(dwell, Mapping) else float(dwell)
        cum.append(cum[-1] + stop + instance.link_by_id[a].length_time)
    return tuple(cum)


def regular_timetable(instance: Instance, pool: LinePool, concept: LineConcept,
                      dwell=None, anchors: Optional[Mapping[str, float]] = None) -> Timetable:
    """Regular headways T/f with offsets j*T/f rounded to 0.1 minute, anchored at 0."""
    T = instance.period_T
    offsets, cumulative, stations = {}, {}, {}
    for lid in concept.selected:
        stations[lid] = pool[lid].stations
        f = concept.f(lid)
        start = (anchors or {}).get(lid, 0.0)
        offs = sorted(round((start + j * T / f) % T, 1) % T for j in range(f))
        offsets[lid] = tuple(offs)
        cumulative[lid] = _cumulative(instance, pool, lid, dwell)
    return Timetable(T, offsets, cumulative, stations)


def _next_departure(timetable: Timetable, lid: str, shift: float, ready: float):
    """Earliest (time, trip) with departure >= ready; ties go to the lower trip number."""
    T = timetable.period
    best = None
    for j, o in enumerate(timetable.offsets[lid]):
        d = o + shift
        k = math.ceil((ready - d) / T - 1e-9)
        cand = d + k * T
        if best is None or cand < best[0] - 1e-9:
            best = (cand, j + 1)
    return best


def assign_trips(line_routes: RoutingResult, timetable: Timetable,
                 concept: Optional[LineConcept] = None,
                 ready_time: Union[float, Mapping[ODPair, float]] = 0.0) -> RoutingResult:
    """Propagate line-level route groups through the timetable.

    Each group boards the earliest trip departing at or after its arrival at
    the boarding station (period-wrapped) and stays together.
    """
    if line_routes.level != "line":
        raise LevelMismatch("assign_trips needs line-level routes")
    if concept is not None:
        timetable.check_concept(concept)
    routes = {}
    for pair, group in line_routes.routes.items():
        start = ready_time.get(pair, 0.0) if isinstance(ready_time, Mapping) else float(ready_time)
        out = []
        for r in group:
            t = start
            trips: list[int] = [0] * len(r.links)
            adaption = transfer = 0.0
            for n, (lid, i0, i1) in enumerate(r.legs()):
                if lid not in timetable.offsets or not timetable.offsets[lid]:
                    raise ValidationError(f"line {lid} has no trips in the timetable")
                cum = timetable.cumulative[lid]
                line_seq = timetable.stations[lid]
                a, b = line_seq.index(r.stations[i0]), line_seq.index(r.stations[i1])
                if b > a:
                    shift, along = cum[a], cum[b] - cum[a]
                else:
                    shift, along = cum[-1] - cum[a], cum[a] - cum[b]
                dep, trip = _next_departure(timetable, lid, shift, t)
                if n == 0:
                    adaption = dep - t
                else:
                    transfer += dep - t
                for i in range(i0, i1):
                    trips[i] = trip
                t = dep + along
            out.append(Route(r.stations, r.links, r.passengers, r.lines, tuple(trips),
                             driving=r.driving, waiting=r.waiting, transfer=transfer,
                             adaption=adaption))
        routes[pair] = out
    return RoutingResult.from_routes("trip", routes, line_routes.unrouted)
