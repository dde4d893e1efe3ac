"""Infrastructure, demand, line pool and line concept types, plus CSV I/O.

The public transportation network (PTN) is undirected: every link is stored
once and may be traversed in both directions. A line is a simple path of
links and is operated with one frequency in both directions.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import NoPathError, ParseError, ValidationError

ODPair = tuple[str, str]

DEFAULT_PERIOD = 60.0
DEFAULT_CAPACITY = 100
# node labels reserved for virtual origin/destination nodes in the CGN
RESERVED_LINE_IDS = frozenset({"^", "$"})

_EPS = 1e-9


@dataclass(frozen=True)
class Link:
    id: str
    source: str
    target: str
    length_time: float
    lower_freq: int = 0
    upper_freq: Optional[int] = None  # None = unbounded

    def __post_init__(self):
        if not self.length_time > 0:
            raise ValidationError(f"link {self.id}: length_time must be positive")
        if self.lower_freq < 0:
            raise ValidationError(f"link {self.id}: negative lower_freq")
        if self.upper_freq is not None:
            if self.upper_freq <= 0:
                raise ValidationError(f"link {self.id}: upper_freq must be positive")
            if self.lower_freq > self.upper_freq:
                raise ValidationError(
                    f"link {self.id}: lower_freq {self.lower_freq} > upper_freq {self.upper_freq}")
        if self.source == self.target:
            raise ValidationError(f"link {self.id}: self-loop")

    def other_end(self, station: str) -> str:
        if station == self.source:
            return self.target
        if station == self.target:
            return self.source
        raise ValidationError(f"station {station} is not an endpoint of link {self.id}")


@dataclass(frozen=True)
class Instance:
    """PTN plus OD matrix, period length and default vehicle capacity."""

    stations: tuple[str, ...]
    links: tuple[Link, ...]
    od: Mapping[ODPair, float] = field(default_factory=dict)
    period_T: float = DEFAULT_PERIOD
    default_capacity_C: int = DEFAULT_CAPACITY

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "links", tuple(self.links))
        if len(set(self.stations)) != len(self.stations):
            raise ValidationError("duplicate station ids")
        known = set(self.stations)
        seen_links = set()
        for link in self.links:
            if link.id in seen_links:
                raise ValidationError(f"duplicate link id {link.id}")
            seen_links.add(link.id)
            for end in (link.source, link.target):
                if end not in known:
                    raise ValidationError(f"link {link.id}: unknown station {end}")
        od = {}
        for (s, t), value in self.od.items():
            if s == t:
                raise ValidationError(f"OD entry {s}->{t}: origin equals destination")
            if s not in known or t not in known:
                raise ValidationError(f"OD entry {s}->{t}: unknown station")
            if value < 0 or math.isnan(value):
                raise ValidationError(f"OD entry {s}->{t}: negative demand")
            if value > 0:
                od[(s, t)] = float(value)
        object.__setattr__(self, "od", od)
        if not self.period_T > 0:
            raise ValidationError("period_T must be positive")
        if int(self.default_capacity_C) != self.default_capacity_C or self.default_capacity_C <= 0:
            raise ValidationError("default_capacity_C must be a positive integer")

    @cached_property
    def link_by_id(self) -> dict[str, Link]:
        return {link.id: link for link in self.links}

    @cached_property
    def incident(self) -> dict[str, list[Link]]:
        """Links incident to each station, in input order."""
        out: dict[str, list[Link]] = {v: [] for v in self.stations}
        for link in self.links:
            out[link.source].append(link)
            out[link.target].append(link)
        return out

    @property
    def od_pairs(self) -> list[ODPair]:
        return list(self.od)

    @property
    def total_demand(self) -> float:
        return sum(self.od.values())

    def with_od(self, od: Mapping[ODPair, float]) -> "Instance":
        return replace(self, od=dict(od))

    def with_links(self, links: Iterable[Link]) -> "Instance":
        return replace(self, links=tuple(links))


@dataclass(frozen=True)
class Line:
    """A candidate line. ``stations`` is derived from ``link_path`` by :func:`resolve_line`."""

    id: str
    link_path: tuple[str, ...]
    cost_per_trip: float = 0.0
    fixed_cost: float = 0.0
    capacity: Optional[int] = None
    round_trip_time: Optional[float] = None
    stations: tuple[str, ...] = ()

    @property
    def links(self) -> frozenset[str]:
        return frozenset(self.link_path)

    def length(self, instance: Instance) -> float:
        return sum(instance.link_by_id[a].length_time for a in self.link_path)

    def along_distance(self, instance: Instance, u: str, v: str) -> float:
        """Driving time between two stations of the line, along the line."""
        i, j = self.stations.index(u), self.stations.index(v)
        lo, hi = min(i, j), max(i, j)
        return sum(instance.link_by_id[a].length_time for a in self.link_path[lo:hi])


def station_sequence(instance: Instance, link_path: Sequence[str]) -> tuple[str, ...]:
    """Station order visited by a contiguous link path.

    A single-link path is oriented source -> target. Raises ValidationError
    for unknown links, non-contiguous paths and repeated stations.
    """
    if not link_path:
        raise ValidationError("empty link path")
    try:
        links = [instance.link_by_id[a] for a in link_path]
    except KeyError as exc:
        raise ValidationError(f"unknown link {exc.args[0]}") from None
    first = links[0]
    if len(links) == 1:
        seq = [first.source, first.target]
    else:
        nxt = links[1]
        if first.target in (nxt.source, nxt.target):
            seq = [first.source, first.target]
        elif first.source in (nxt.source, nxt.target):
            seq = [first.target, first.source]
        else:
            raise ValidationError(f"links {first.id} and {nxt.id} are not contiguous")
        for link in links[1:]:
            cur = seq[-1]
            if cur not in (link.source, link.target):
                raise ValidationError(f"link {link.id} does not continue the path at {cur}")
            seq.append(link.other_end(cur))
    if len(set(seq)) != len(seq):
        raise ValidationError(f"path {'/'.join(link_path)} repeats a station")
    return tuple(seq)


def resolve_line(instance: Instance, line: Line) -> Line:
    if line.id in RESERVED_LINE_IDS or not line.id:
        raise ValidationError(f"line id {line.id!r} is reserved")
    try:
        stations = station_sequence(instance, line.link_path)
    except ValidationError as exc:
        raise ValidationError(f"line {line.id}: {exc}") from None
    if line.cost_per_trip < 0 or line.fixed_cost < 0:
        raise ValidationError(f"line {line.id}: negative cost")
    capacity = line.capacity if line.capacity is not None else instance.default_capacity_C
    if int(capacity) != capacity or capacity <= 0:
        raise ValidationError(f"line {line.id}: capacity must be a positive integer")
    rtt = line.round_trip_time
    if rtt is None:
        rtt = 2.0 * sum(instance.link_by_id[a].length_time for a in line.link_path)
    if not rtt > 0:
        raise ValidationError(f"line {line.id}: round_trip_time must be positive")
    return replace(line, link_path=tuple(line.link_path), stations=stations,
                   capacity=int(capacity), round_trip_time=float(rtt))


@dataclass(frozen=True)
class LinePool:
    lines: tuple[Line, ...]

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        ids = [line.id for line in self.lines]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate line ids in pool")

    @classmethod
    def build(cls, instance: Instance, lines: Iterable[Line]) -> "LinePool":
        return cls(tuple(resolve_line(instance, line) for line in lines))

    @cached_property
    def by_id(self) -> dict[str, Line]:
        return {line.id: line for line in self.lines}

    @cached_property
    def lines_on_link(self) -> dict[str, list[Line]]:
        out: dict[str, list[Line]] = {}
        for line in self.lines:
            for a in line.link_path:
                out.setdefault(a, []).append(line)
        return out

    @property
    def ids(self) -> list[str]:
        return [line.id for line in self.lines]

    def __len__(self):
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def __getitem__(self, line_id: str) -> Line:
        return self.by_id[line_id]


@dataclass(frozen=True)
class LineConcept:
    """Integer frequency per pool line; absent or zero means not selected."""

    frequencies: Mapping[str, int]

    def __post_init__(self):
        freqs = {}
        for line_id, f in self.frequencies.items():
            if int(f) != f or f < 0:
                raise ValidationError(f"line {line_id}: frequency must be a non-negative integer")
            freqs[line_id] = int(f)
        object.__setattr__(self, "frequencies", freqs)

    def f(self, line_id: str) -> int:
        return self.frequencies.get(line_id, 0)

    def y(self, line_id: str) -> int:
        return 1 if self.f(line_id) > 0 else 0

    @property
    def selected(self) -> list[str]:
        return [l for l, f in self.frequencies.items() if f > 0]

    def vector(self, pool: LinePool) -> list[int]:
        return [self.f(l) for l in pool.ids]

    def check_against(self, pool: LinePool) -> None:
        unknown = set(self.frequencies) - set(pool.ids)
        if unknown:
            raise ValidationError(f"concept references unknown lines: {sorted(unknown)}")

    def __eq__(self, other):
        if not isinstance(other, LineConcept):
            return NotImplemented
        keys = set(self.frequencies) | set(other.frequencies)
        return all(self.f(k) == other.f(k) for k in keys)

    def __hash__(self):
        return hash(tuple(sorted((k, v) for k, v in self.frequencies.items() if v)))


# --------------------------------------------------------------------------- I/O

NETWORK_HEADER = ["link_id", "from", "to", "length_time", "lower_freq", "upper_freq"]
OD_HEADER = ["origin", "destination", "passengers"]
POOL_HEADER = ["line_id", "link_ids", "cost_per_trip", "fixed_cost", "capacity", "round_trip_time"]
CONCEPT_HEADER = ["line_id", "frequency"]

_CONFIG_KEYS = {"period_T": float, "default_capacity_C": int}


def _rows(path, header: list[str], required: int):
    """Yield (line_no, cells) for data rows of a CSV file with the given header."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        got = [c.strip() for c in first]
        if got[:required] != header[:required] or got != header[:len(got)]:
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for cells in reader:
            line_no = reader.line_num
            if not cells or all(not c.strip() for c in cells):
                continue
            if cells[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in cells]
            if len(cells) < required or len(cells) > len(header):
                raise ParseError(path, line_no, f"expected {required}..{len(header)} fields, got {len(cells)}")
            cells += [""] * (len(header) - len(cells))
            yield line_no, cells


def _num(path, line_no, text, kind=float, name="value"):
    try:
        if kind is int:
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        value = float(text)
        if math.isnan(value) or math.isinf(value):
            raise ValueError
        return value
    except ValueError:
        raise ParseError(path, line_no, f"bad {name} {text!r}") from None


def _read_links(path) -> list[Link]:
    links = []
    for n, cells in _rows(path, NETWORK_HEADER, 4):
        lid, u, v, length, lower, upper = cells
        if not lid or not u or not v:
            raise ParseError(path, n, "empty id field")
        lo = _num(path, n, lower, int, "lower_freq") if lower else 0
        up = _num(path, n, upper, int, "upper_freq") if upper else None
        try:
            links.append(Link(lid, u, v, _num(path, n, length, float, "length_time"), lo, up))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{n}: {exc}") from None
    return links


def _read_od(path) -> dict[ODPair, float]:
    od: dict[ODPair, float] = {}
    for n, (s, t, pax) in _rows(path, OD_HEADER, 3):
        value = _num(path, n, pax, float, "passengers")
        if value == 0:
            raise ValidationError(f"{path}:{n}: zero OD entries must be omitted")
        if value < 0:
            raise ValidationError(f"{path}:{n}: negative demand")
        if s == t:
            raise ValidationError(f"{path}:{n}: OD entry {s}->{t} has origin equal to destination")
        if (s, t) in od:
            raise ValidationError(f"{path}:{n}: duplicate OD pair {s}->{t}")
        od[(s, t)] = value
    return od


def load_instance(network_file, od_file, config: Optional[Mapping[str, object]] = None) -> Instance:
    """Read a network CSV and an OD CSV into a validated :class:`Instance`.

    ``od_file`` may be None for an instance without demand.
    ``config`` may override ``period_T`` and ``default_capacity_C``.
    """
    params = {}
    for key, value in (config or {}).items():
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"unknown config key {key!r}")
        params[key] = _CONFIG_KEYS[key](value)
    links = _read_links(network_file)
    stations: dict[str, None] = {}
    for link in links:
        stations.setdefault(link.source)
        stations.setdefault(link.target)
    od = _read_od(od_file) if od_file is not None else {}
    for (s, t) in od:
        if s not in stations or t not in stations:
            raise ValidationError(f"{od_file}: OD pair {s}->{t} references an unknown station")
    return Instance(tuple(stations), tuple(links), od, **params)


def load_od(od_file, instance: Instance) -> dict[ODPair, float]:
    od = _read_od(od_file)
    return instance.with_od(od).od


def load_pool(pool_file, instance: Instance) -> LinePool:
    lines = []
    for n, cells in _rows(pool_file, POOL_HEADER, 4):
        lid, link_ids, cost, fixed, cap, rtt = cells
        path = tuple(a.strip() for a in link_ids.split(";") if a.strip())
        line = Line(
            id=lid,
            link_path=path,
            cost_per_trip=_num(pool_file, n, cost, float, "cost_per_trip"),
            fixed_cost=_num(pool_file, n, fixed, float, "fixed_cost"),
            capacity=_num(pool_file, n, cap, int, "capacity") if cap else None,
            round_trip_time=_num(pool_file, n, rtt, float, "round_trip_time") if rtt else None,
        )
        try:
            lines.append(resolve_line(instance, line))
        except ValidationError as exc:
            raise ValidationError(f"{pool_file}:{n}: {exc}") from None
    return LinePool(tuple(lines))


def load_concept(concept_file, pool: Optional[LinePool] = None) -> LineConcept:
    freqs = {}
    for n, (lid, f) in _rows(concept_file, CONCEPT_HEADER, 2):
        if lid in freqs:
            raise ValidationError(f"{concept_file}:{n}: duplicate line {lid}")
        value = _num(concept_file, n, f, int, "frequency")
        if value < 0:
            raise ValidationError(f"{concept_file}:{n}: negative frequency")
        freqs[lid] = value
    concept = LineConcept(freqs)
    if pool is not None:
        concept.check_against(pool)
    return concept


def _fmt(x: float) -> str:
    return repr(float(x))


def save_network(instance: Instance, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NETWORK_HEADER)
        for a in instance.links:
            w.writerow([a.id, a.source, a.target, _fmt(a.length_time), a.lower_freq,
                        "" if a.upper_freq is None else a.upper_freq])


def save_od(od: Mapping[ODPair, float], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OD_HEADER)
        for (s, t), value in od.items():
            w.writerow([s, t, _fmt(value)])


def save_pool(pool: LinePool, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POOL_HEADER)
        for line in pool:
            w.writerow([line.id, ";".join(line.link_path), _fmt(line.cost_per_trip),
                        _fmt(line.fixed_cost), "" if line.capacity is None else line.capacity,
                        "" if line.round_trip_time is None else _fmt(line.round_trip_time)])


def save_concept(concept: LineConcept, path, pool: Optional[LinePool] = None) -> None:
    ids = pool.ids if pool is not None else list(concept.frequencies)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONCEPT_HEADER)
        for lid in ids:
            w.writerow([lid, concept.f(lid)])


# ------------------------------------------------------------------ pool generation

def _distances_to(instance: Instance, target: str, allowed: Optional[set] = None) -> dict[str, float]:
    dist = {target: 0.0}
    heap = [(0.0, target)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for link in instance.incident[v]:
            if allowed is not None and link.id not in allowed:
                continue
            u = link.other_end(v)
            nd = d + link.length_time
            if nd < dist.get(u, math.inf):
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def bounded_simple_paths(instance: Instance, s: str, t: str, max_length: float):
    """All simple link paths s -> t of length <= max_length, as (length, stations, links).

    Depth-first search pruned with exact distances-to-target.
    """
    to_t = _distances_to(instance, t)
    if s not in to_t:
        return []
    limit = max_length * (1 + _EPS) + _EPS
    found = []
    stations = [s]
    links: list[str] = []
    on_path = {s}

    def dfs(v: str, acc: float):
        if v == t:
            found.append((acc, tuple(stations), tuple(links)))
            return
        for link in instance.incident[v]:
            u = link.other_end(v)
            if u in on_path or u not in to_t:
                continue
            nd = acc + link.length_time
            if nd + to_t[u] > limit:
                continue
            stations.append(u)
            links.append(link.id)
            on_path.add(u)
            dfs(u, nd)
            on_path.discard(u)
            stations.pop()
            links.pop()

    dfs(s, 0.0)
    return found


def generate_pool(instance: Instance, terminals: Iterable[ODPair], k: int = 1,
                  detour_factor: float = 1.0, cost_per_minute: float = 1.0,
                  fixed_cost: float = 0.0, capacity: Optional[int] = None) -> LinePool:
    """Build a line pool from up to ``k`` shortest loop-free paths per terminal pair.

    Only paths no longer than ``detour_factor`` times the shortest path are kept.
    Ties in length are broken by the lexicographic station sequence; lines
    covering an identical link set are generated once. Line cost per trip is
    ``cost_per_minute`` times the line's driving time.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    if detour_factor < 1:
        raise ValidationError("detour_factor must be >= 1")
    terminals = list(terminals)
    missing = []
    lines = []
    seen: set[frozenset] = set()
    for s, t in terminals:
        if s not in instance.incident or t not in instance.incident:
            raise ValidationError(f"terminal pair {s}->{t}: unknown station")
        shortest = _distances_to(instance, t).get(s)
        if shortest is None:
            missing.append((s, t))
            continue
        paths = bounded_simple_paths(instance, s, t, detour_factor * shortest)
        paths.sort(key=lambda p: (round(p[0], 9), p[1]))
        for i, (length, _, link_path) in enumerate(paths[:k]):
            key = frozenset(link_path)
            if key in seen:
                continue
            seen.add(key)
            lines.append(Line(
                id=f"{s}-{t}-{i + 1}",
                link_path=link_path,
                cost_per_trip=cost_per_minute * length,
                fixed_cost=fixed_cost,
                capacity=capacity,
            ))
    if missing:
        raise NoPathError(missing)
    return LinePool.build(instance, lines)
