"""Line planning models as :class:`~lineplan.milp.MilpModel` instances.

Every builder returns :class:`FormulationArtifacts`, which maps semantic keys
to model variable names so that solutions can be decoded into line concepts
and passenger routings:

    ("f", line)            frequency of a line
    ("y", line)            line selected (binary)
    ("alpha", line)        frequency multiplier for a system frequency
    ("z", line, phi)       line runs with frequency phi (binary)
    ("x", od, arc)         passengers of an OD pair on an arc
    ("d", od, line)        direct travellers of an OD pair on a line
"""

from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from . import milp
from .errors import InvalidParameter, NoPathError, ValidationError
from .network import Instance, LineConcept, LinePool, ODPair
from .routing import (DEST, ORIGIN, Cgn, FixedPenalty, Route, RoutingResult, build_cgn,
                      decompose_flow, route_from_cgn_arcs, shortest_paths_ptn, traffic_loads)

Objective = Union[str, tuple]  # "cost" | "travel_time" | ("weighted", lam)


@dataclass
class FormulationArtifacts:
    model: milp.MilpModel
    var_index: dict = field(default_factory=dict)
    instance: Optional[Instance] = None
    pool: Optional[LinePool] = None
    kind: str = ""
    extras: dict = field(default_factory=dict)

    def var(self, *key) -> str:
        return self.var_index[key]

    def freq_keys(self) -> list[tuple]:
        return [k for k in self.var_index if k[0] == "f"]

    def copy(self) -> "FormulationArtifacts":
        return FormulationArtifacts(self.model.copy(), dict(self.var_index), self.instance,
                                    self.pool, self.kind, dict(self.extras))


def solve(art: FormulationArtifacts, **opts) -> milp.MilpSolution:
    return milp.solve_milp(art.model, **opts)


def decode_concept(art: FormulationArtifacts, sol: milp.MilpSolution,
                   season: Optional[int] = None) -> LineConcept:
    freqs = {}
    for key, name in art.var_index.items():
        if key[0] != "f":
            continue
        if season is None and len(key) == 2:
            freqs[key[1]] = int(round(sol.values[name]))
        elif season is not None and len(key) == 3 and key[1] == season:
            freqs[key[2]] = int(round(sol.values[name]))
    if not freqs:
        # selection-only models: y_l stands for frequency 1
        for key, name in art.var_index.items():
            if key[0] == "y" and len(key) == 2:
                freqs[key[1]] = int(round(sol.values[name]))
    return LineConcept(freqs)


# ------------------------------------------------------------------ bounds

def traffic_lower_bounds(loads: Mapping[str, float], capacity: float,
                         links: Optional[Iterable[str]] = None) -> dict[str, int]:
    """Minimum number of vehicles per link: ceil(load / capacity)."""
    if not capacity > 0:
        raise InvalidParameter("vehicle capacity must be positive")
    out = {a: 0 for a in (links or ())}
    for a, d in loads.items():
        if d < 0:
            raise InvalidParameter(f"negative load on link {a}")
        # guard against 120.00000000001-style noise from summed floats
        out[a] = max(0, math.ceil(d / capacity - 1e-9))
    return out


def _link_bounds(instance: Instance, lower, upper):
    L = {a.id: a.lower_freq for a in instance.links}
    U = {a.id: a.upper_freq for a in instance.links}
    if lower is not None:
        L.update({a: int(v) for a, v in lower.items()})
    if upper is not None:
        U.update({a: (None if v is None or (isinstance(v, float) and math.isinf(v)) else int(v))
                  for a, v in upper.items()})
    return L, U


def frequency_upper_bound(line, L: Mapping[str, int], U: Mapping[str, Optional[int]],
                          demand: float = 0.0) -> int:
    """Largest useful frequency of a line.

    Any finite link bound U_a on the line caps f_l. Without one, more than
    max(L_a) trips (or enough trips to carry all ``demand``) never helps.
    """
    finite = [U[a] for a in line.link_path if U.get(a) is not None]
    if finite:
        return int(min(finite))
    need = max((L.get(a, 0) for a in line.link_path), default=0)
    if demand > 0:
        need = max(need, math.ceil(demand / line.capacity - 1e-9))
    return int(need)


def _add_link_frequency_rows(model, instance, pool, fvars: Mapping[str, str], L, U, tag=""):
    for link in instance.links:
        coefs = {fvars[l.id]: 1.0 for l in pool.lines_on_link.get(link.id, []) if l.id in fvars}
        lo, hi = L[link.id], U[link.id]
        if lo > 0:
            model.add_constr(coefs, ">=", lo, name=f"lower{tag}[{link.id}]")
        if hi is not None:
            model.add_constr(coefs, "<=", hi, name=f"upper{tag}[{link.id}]")


# --------------------------------------------------------------- cost model

def build_cost_model(instance: Instance, pool: LinePool,
                     lower: Optional[Mapping[str, int]] = None,
                     upper: Optional[Mapping[str, Optional[int]]] = None,
                     with_fixed_cost: bool = False) -> FormulationArtifacts:
    """Minimum cost frequencies subject to L_a <= sum of f_l over lines on a <= U_a.

    ``lower``/``upper`` override the link bounds stored in the instance. With
    ``with_fixed_cost`` a binary y_l per line adds its fixed cost when f_l > 0.
    """
    L, U = _link_bounds(instance, lower, upper)
    model = milp.MilpModel("cost")
    art = FormulationArtifacts(model, {}, instance, pool, "cost")
    fvars = {}
    for line in pool:
        ub = frequency_upper_bound(line, L, U)
        name = f"f[{line.id}]"
        model.add_var(name, 0, ub, integer=True, obj=line.cost_per_trip)
        fvars[line.id] = name
        art.var_index[("f", line.id)] = name
        if with_fixed_cost:
            y = f"y[{line.id}]"
            model.add_var(y, 0, 1, integer=True, obj=line.fixed_cost)
            art.var_index[("y", line.id)] = y
            model.add_constr({name: 1.0, y: -float(max(ub, 1))}, "<=", 0, name=f"link_y[{line.id}]")
    _add_link_frequency_rows(model, instance, pool, fvars, L, U)
    art.extras.update(lower=L, upper=U)
    return art


def demand_lower_bounds(instance: Instance, od: Optional[Mapping[ODPair, float]] = None,
                        capacity: Optional[float] = None) -> dict[str, int]:
    """L_a from shortest-path traffic loads, never below the link's own lower_freq."""
    od = instance.od if od is None else od
    paths, missing = shortest_paths_ptn(instance, od)
    if missing:
        raise NoPathError(missing)
    loads = traffic_loads(paths, od, instance)
    L = traffic_lower_bounds(loads, capacity or instance.default_capacity_C)
    return {a.id: max(a.lower_freq, L.get(a.id, 0)) for a in instance.links}


def cost_model_from_demand(instance: Instance, pool: LinePool,
                           od: Optional[Mapping[ODPair, float]] = None,
                           capacity: Optional[float] = None, **kw) -> FormulationArtifacts:
    return build_cost_model(instance, pool, lower=demand_lower_bounds(instance, od, capacity), **kw)


# ------------------------------------------------------- frequency modeling

def apply_system_frequency(art: FormulationArtifacts, i: int) -> FormulationArtifacts:
    """Restrict every frequency to a multiple of the system frequency ``i``."""
    if int(i) != i or i < 2:
        raise InvalidParameter("system frequency must be an integer >= 2")
    out = art.copy()
    m = out.model
    for key in art.freq_keys():
        fname = art.var_index[key]
        ub = m.var(fname).ub
        aname = "alpha" + fname[1:]
        m.add_var(aname, 0, math.floor(ub / i), integer=True)
        m.add_constr({fname: 1.0, aname: -float(i)}, "==", 0, name=f"sysfreq{fname[1:]}")
        out.var_index[("alpha",) + key[1:]] = aname
    return out


def apply_frequency_indicators(art: FormulationArtifacts, allowed: Iterable[int]) -> FormulationArtifacts:
    """Allow each line only a frequency from ``allowed`` (or 0).

    f_l is tied to sum(phi * z_l^phi) over binaries with at most one set.
    """
    phis = sorted({int(p) for p in allowed})
    if any(p <= 0 for p in phis):
        raise InvalidParameter("allowed frequencies must be positive integers")
    out = art.copy()
    m = out.model
    for key in art.freq_keys():
        fname = art.var_index[key]
        ub = m.var(fname).ub
        coefs = {fname: 1.0}
        pick = {}
        for phi in phis:
            if phi > ub:
                continue
            zname = f"z{fname[1:]}[{phi}]"
            m.add_var(zname, 0, 1, integer=True)
            coefs[zname] = -float(phi)
            pick[zname] = 1.0
            out.var_index[("z",) + key[1:] + (phi,)] = zname
        m.add_constr(coefs, "==", 0, name=f"phi{fname[1:]}")
        if pick:
            m.add_constr(pick, "<=", 1, name=f"one_phi{fname[1:]}")
    return out


# -------------------------------------------------------------- flow models

def _plain_dijkstra(adj, source) -> dict:
    dist = {source: 0.0}
    heap = [(0.0, 0, source)]
    seq = 0
    while heap:
        d, _, v = heapq.heappop(heap)
        if d > dist.get(v, math.inf):
            continue
        for head, w in adj.get(v, ()):
            nd = d + w
            if nd < dist.get(head, math.inf) - 1e-12:
                dist[head] = nd
                seq += 1
                heapq.heappush(heap, (nd, seq, head))
    return dist


def _routing_arcs(instance: Instance, pool: LinePool, level: str, transfer_penalty: float):
    """Arcs as (tail, head, time, link, line, kind) for the routing network of a level."""
    if level == "link":
        arcs = []
        for a in instance.links:
            arcs.append((a.source, a.target, a.length_time, a.id, None, "driving"))
            arcs.append((a.target, a.source, a.length_time, a.id, None, "driving"))
        return arcs, None
    if level == "line":
        if len(pool) == 0:
            raise ValidationError("line-level model needs a non-empty pool")
        cgn = build_cgn(instance, pool, FixedPenalty(transfer_penalty))
        return [(c.tail, c.head, c.time, c.link, c.line, c.kind) for c in cgn.arcs], cgn
    raise InvalidParameter(f"flow models support levels 'link' and 'line', not {level!r}")


def _objective_weights(objective: Objective) -> tuple[float, float]:
    """(cost weight, travel time weight)."""
    if objective == "cost":
        return 1.0, 0.0
    if objective == "travel_time":
        return 0.0, 1.0
    if isinstance(objective, tuple) and len(objective) == 2 and objective[0] == "weighted":
        lam = float(objective[1])
        if lam < 0:
            raise InvalidParameter("weight must be non-negative")
        return 1.0, lam
    raise InvalidParameter(f"unknown objective {objective!r}")


def build_flow_model(instance: Instance, pool: LinePool, level: str = "link",
                     objective: Objective = "cost", transfer_penalty: float = 5.0,
                     lower: Optional[Mapping[str, int]] = None,
                     upper: Optional[Mapping[str, Optional[int]]] = None,
                     freq_bounds: Optional[Mapping[str, tuple[int, int]]] = None,
                     detour_bound: Optional[float] = None) -> FormulationArtifacts:
    """Frequencies plus planner-assigned multicommodity passenger flows.

    Link level: flows on the PTN with sum_l f_l Q_l >= passengers per link.
    Line level: flows on the CGN with f_l Q_l >= passengers per (link, line).
    Loads are counted over both directions of a link. ``objective`` is
    ``"cost"``, ``"travel_time"`` or ``("weighted", lam)`` meaning
    cost + lam * passenger minutes. ``detour_bound`` (beta) drops arcs that
    lie on no route within beta times the OD pair's shortest route and caps
    each pair's total travel time at beta times its shortest time.
    """
    w_cost, w_time = _objective_weights(objective)
    L, U = _link_bounds(instance, lower, upper)
    arcs, cgn = _routing_arcs(instance, pool, level, transfer_penalty)
    model = milp.MilpModel(f"flow-{level}")
    art = FormulationArtifacts(model, {}, instance, pool, f"flow-{level}")
    total = instance.total_demand

    fvars = {}
    for line in pool:
        lo, hi = 0, frequency_upper_bound(line, L, U, total)
        if freq_bounds and line.id in freq_bounds:
            lo, hi = freq_bounds[line.id]
        name = f"f[{line.id}]"
        model.add_var(name, lo, hi, integer=True, obj=w_cost * line.cost_per_trip)
        fvars[line.id] = name
        art.var_index[("f", line.id)] = name
    _add_link_frequency_rows(model, instance, pool, fvars, L, U)

    fwd: dict = defaultdict(list)
    bwd: dict = defaultdict(list)
    for idx, (tail, head, w, *_rest) in enumerate(arcs):
        fwd[tail].append((head, w))
        bwd[head].append((tail, w))

    def endpoints(s, t):
        return ((s, ORIGIN), (t, DEST)) if level == "line" else (s, t)

    usage: dict = defaultdict(dict)
    od_vars: dict[ODPair, dict[int, str]] = {}
    missing = []
    for k, ((s, t), demand) in enumerate(instance.od.items()):
        src, snk = endpoints(s, t)
        from_s = _plain_dijkstra(_restrict(fwd, level, s, t), src)
        if snk not in from_s:
            missing.append((s, t))
            continue
        to_t = _plain_dijkstra(_restrict(bwd, level, s, t, reverse=True), snk)
        shortest = from_s[snk]
        limit = None if detour_bound is None else detour_bound * shortest * (1 + 1e-9) + 1e-9
        balance: dict = defaultdict(dict)
        vars_k = {}
        time_row = {}
        for idx, (tail, head, w, link, lid, kind) in enumerate(arcs):
            if level == "line":
                if kind == "boarding" and tail[0] != s:
                    continue
                if kind == "alighting" and head[0] != t:
                    continue
            if tail not in from_s or head not in to_t:
                continue
            if limit is not None and from_s[tail] + w + to_t[head] > limit:
                continue
            name = f"x[{k}][{idx}]"
            model.add_var(name, 0.0, demand, obj=w_time * w)
            vars_k[idx] = name
            art.var_index[("x", (s, t), idx)] = name
            balance[tail][name] = 1.0
            balance[head][name] = balance[head].get(name, 0.0) - 1.0
            time_row[name] = w
            if kind == "driving":
                usage[link if level == "link" else (link, lid)][name] = -1.0
        for node, coefs in balance.items():
            rhs = demand if node == src else (-demand if node == snk else 0.0)
            model.add_constr(coefs, "==", rhs, name=f"flow[{k}][{node}]")
        if detour_bound is not None:
            model.add_constr(time_row, "<=", detour_bound * shortest * demand * (1 + 1e-9),
                             name=f"detour[{k}]")
        od_vars[(s, t)] = vars_k
    if missing:
        raise ValidationError(f"OD pairs disconnected in the {level}-level routing graph: {missing}")

    if level == "link":
        for link in instance.links:
            coefs = dict(usage.get(link.id, {}))
            for line in pool.lines_on_link.get(link.id, []):
                coefs[fvars[line.id]] = float(line.capacity)
            model.add_constr(coefs, ">=", 0, name=f"cap[{link.id}]")
    else:
        for line in pool:
            for a in line.link_path:
                coefs = dict(usage.get((a, line.id), {}))
                coefs[fvars[line.id]] = float(line.capacity)
                model.add_constr(coefs, ">=", 0, name=f"cap[{a},{line.id}]")

    art.extras.update(arcs=arcs, od_vars=od_vars, cgn=cgn, level=level, lower=L, upper=U)
    return art


def _restrict(adj, level, s, t, reverse=False):
    if level != "line":
        return adj
    out = {}
    for v, nbrs in adj.items():
        keep = []
        for u, w in nbrs:
            tail, head = (u, v) if reverse else (v, u)
            if tail[1] == ORIGIN and tail[0] != s:
                continue
            if head[1] == DEST and head[0] != t:
                continue
            keep.append((u, w))
        out[v] = keep
    return out


def decode_routing(art: FormulationArtifacts, sol: milp.MilpSolution, dwell=None) -> RoutingResult:
    """Routes of a solved flow model (flows split into paths)."""
    arcs = art.extras["arcs"]
    level = art.extras["level"]
    instance = art.instance
    tails = {i: a[0] for i, a in enumerate(arcs)}
    heads = {i: a[1] for i, a in enumerate(arcs)}
    cgn: Optional[Cgn] = art.extras.get("cgn")
    routes = {}
    for (s, t), vars_k in art.extras["od_vars"].items():
        flow = {i: sol.values[name] for i, name in vars_k.items()}
        if level == "line":
            paths = decompose_flow(flow, tails, heads, (s, ORIGIN), (t, DEST))
            routes[(s, t)] = [route_from_cgn_arcs([cgn.arcs[i] for i in walk], amount, dwell)
                              for walk, amount in paths]
        else:
            paths = decompose_flow(flow, tails, heads, s, t)
            group = []
            for walk, amount in paths:
                stations = (s,) + tuple(arcs[i][1] for i in walk)
                links = tuple(arcs[i][3] for i in walk)
                driving = sum(arcs[i][2] for i in walk)
                group.append(Route(stations, links, amount, (None,) * len(links), driving=driving))
            routes[(s, t)] = group
    return RoutingResult.from_routes(level, routes)


# ------------------------------------------------------ direct travellers

def direct_candidates(instance: Instance, pool: LinePool, detour_factor: float) -> dict[ODPair, list[str]]:
    """Lines serving an OD pair directly within ``detour_factor`` of its shortest distance."""
    paths, _ = shortest_paths_ptn(instance)
    out = {}
    for (s, t) in instance.od:
        if (s, t) not in paths:
            out[(s, t)] = []
            continue
        limit = detour_factor * paths[(s, t)].length * (1 + 1e-9) + 1e-9
        out[(s, t)] = [line.id for line in pool
                       if s in line.stations and t in line.stations
                       and line.along_distance(instance, s, t) <= limit]
    return out


def build_direct_traveler_model(instance: Instance, pool: LinePool, detour_factor: float = 1.0,
                                budget: Optional[float] = None,
                                frequency_constraints: bool = False,
                                allowed_lines: Optional[Iterable[str]] = None,
                                lower: Optional[Mapping[str, int]] = None,
                                upper: Optional[Mapping[str, Optional[int]]] = None) -> FormulationArtifacts:
    """Maximize passengers travelling without transfer and without a large detour.

    Line selection is limited by ``budget`` on sum(cost_per_trip + fixed_cost)
    of selected lines and/or, with ``frequency_constraints``, by link
    frequency bounds on integer frequencies coupled to the selection.
    """
    if detour_factor < 1:
        raise InvalidParameter("detour factor must be >= 1")
    allowed = set(pool.ids if allowed_lines is None else allowed_lines)
    model = milp.MilpModel("direct", sense="max")
    art = FormulationArtifacts(model, {}, instance, pool, "direct")
    yvars = {}
    for line in pool:
        name = f"y[{line.id}]"
        model.add_var(name, 0, 1 if line.id in allowed else 0, integer=True)
        yvars[line.id] = name
        art.var_index[("y", line.id)] = name
    if budget is not None:
        model.add_constr({yvars[l.id]: l.cost_per_trip + l.fixed_cost for l in pool}, "<=", budget,
                         name="budget")
    if frequency_constraints:
        L, U = _link_bounds(instance, lower, upper)
        fvars = {}
        for line in pool:
            ub = max(1, frequency_upper_bound(line, L, U))
            name = f"f[{line.id}]"
            model.add_var(name, 0, ub, integer=True)
            fvars[line.id] = name
            art.var_index[("f", line.id)] = name
            model.add_constr({name: 1.0, yvars[line.id]: -float(ub)}, "<=", 0, name=f"fy_ub[{line.id}]")
            model.add_constr({name: 1.0, yvars[line.id]: -1.0}, ">=", 0, name=f"fy_lb[{line.id}]")
        _add_link_frequency_rows(model, instance, pool, fvars, L, U)
    cands = direct_candidates(instance, pool, detour_factor)
    for k, ((s, t), demand) in enumerate(instance.od.items()):
        row = {}
        for lid in cands[(s, t)]:
            name = f"d[{k}][{lid}]"
            model.add_var(name, 0.0, demand, obj=1.0)
            art.var_index[("d", (s, t), lid)] = name
            model.add_constr({name: 1.0, yvars[lid]: -demand}, "<=", 0, name=f"dy[{k}][{lid}]")
            row[name] = 1.0
        if row:
            model.add_constr(row, "<=", demand, name=f"od[{k}]")
    art.extras["candidates"] = cands
    return art
