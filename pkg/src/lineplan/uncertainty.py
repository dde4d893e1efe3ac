"""Demand uncertainty: robust and multi-period models, worst-case and expected evaluation.

Scenario evaluation routes passengers on shortest paths of the links the
concept serves, independently per scenario. Since those routes do not depend
on the demand, the evaluation objective

    passenger minutes + deficit_weight * capacity deficit + unserved_weight * unserved

is convex in the demand vector, so its maximum over a box or a budgeted box
is attained at a vertex of that polytope and vertex enumeration is exact.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import milp
from .errors import (MissingProbabilities, TooManyPairs, UnsupportedMeasure, ValidationError)
from .formulations import (FormulationArtifacts, build_cost_model, cost_model_from_demand,
                           demand_lower_bounds, frequency_upper_bound, _link_bounds,
                           _add_link_frequency_rows)
from .network import Instance, LineConcept, LinePool, ODPair
from .routing import all_pairs_distances, shortest_paths_ptn

MAX_VERTEX_PAIRS = 20
_CHUNK = 1 << 15


@dataclass(frozen=True)
class DemandUncertainty:
    kind: str  # "discrete" | "box" | "gamma"
    scenarios: tuple[dict, ...] = ()
    probabilities: Optional[tuple[float, ...]] = None
    lower: Mapping[ODPair, float] = field(default_factory=dict)
    upper: Mapping[ODPair, float] = field(default_factory=dict)
    budget: Optional[float] = None

    def __post_init__(self):
        if self.kind == "discrete":
            if not self.scenarios:
                raise ValidationError("discrete uncertainty needs at least one scenario")
            if self.probabilities is not None:
                probs = self.probabilities
                if len(probs) != len(self.scenarios):
                    raise ValidationError("one probability per scenario required")
                if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                    raise ValidationError("probabilities must be non-negative and sum to 1")
        elif self.kind in ("box", "gamma"):
            if set(self.lower) != set(self.upper):
                raise ValidationError("lower and upper bounds must cover the same OD pairs")
            for pair in self.lower:
                if self.lower[pair] < 0 or self.lower[pair] > self.upper[pair]:
                    raise ValidationError(f"bad bounds for {pair}: need 0 <= lower <= upper")
            if self.kind == "gamma":
                if self.budget is None:
                    raise ValidationError("gamma uncertainty needs a budget")
                if self.budget < sum(self.lower.values()) - 1e-9:
                    raise ValidationError("budget below the sum of lower bounds: empty set")
        else:
            raise ValidationError(f"unknown uncertainty kind {self.kind!r}")

    @classmethod
    def discrete(cls, scenarios: Sequence[Mapping[ODPair, float]],
                 probabilities: Optional[Sequence[float]] = None) -> "DemandUncertainty":
        return cls("discrete", tuple(dict(s) for s in scenarios),
                   None if probabilities is None else tuple(float(p) for p in probabilities))

    @classmethod
    def box(cls, lower: Mapping[ODPair, float], upper: Mapping[ODPair, float]) -> "DemandUncertainty":
        return cls("box", lower=dict(lower), upper=dict(upper))

    @classmethod
    def gamma(cls, lower, upper, budget: float) -> "DemandUncertainty":
        return cls("gamma", lower=dict(lower), upper=dict(upper), budget=float(budget))

    @property
    def pairs(self) -> list[ODPair]:
        if self.kind == "discrete":
            seen: dict = {}
            for s in self.scenarios:
                for pair in s:
                    seen.setdefault(pair)
            return list(seen)
        return list(self.lower)

    def contains(self, scenario: Mapping[ODPair, float]) -> bool:
        """Exact membership test (rational arithmetic for the budget)."""
        if self.kind == "discrete":
            norm = {k: v for k, v in scenario.items() if v}
            return any({k: v for k, v in s.items() if v} == norm for s in self.scenarios)
        if set(k for k, v in scenario.items() if v) - set(self.lower):
            return False
        for pair in self.lower:
            v = scenario.get(pair, 0.0)
            if not (self.lower[pair] <= v <= self.upper[pair]):
                return False
        if self.kind == "gamma":
            total = sum((Fraction(scenario.get(p, 0.0)) for p in self.lower), Fraction(0))
            return total <= Fraction(self.budget)
        return True


# ------------------------------------------------------------------ file I/O

def _pair(entry) -> ODPair:
    return (str(entry["origin"]), str(entry["destination"]))


def load_uncertainty(path) -> DemandUncertainty:
    """Read a scenario file (see README for the JSON layout)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        kind = data["kind"]
        if kind == "discrete":
            scenarios, probs = [], []
            for sc in data["scenarios"]:
                scenarios.append({_pair(e): float(e["passengers"]) for e in sc["od"]})
                probs.append(sc.get("probability"))
            if all(p is None for p in probs):
                return DemandUncertainty.discrete(scenarios)
            if any(p is None for p in probs):
                raise ValidationError("either all or no scenarios carry a probability")
            return DemandUncertainty.discrete(scenarios, probs)
        lower = {_pair(e): float(e["lower"]) for e in data["pairs"]}
        upper = {_pair(e): float(e["upper"]) for e in data["pairs"]}
        if kind == "box":
            return DemandUncertainty.box(lower, upper)
        if kind == "gamma":
            return DemandUncertainty.gamma(lower, upper, float(data["budget"]))
        raise ValidationError(f"unknown uncertainty kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: malformed scenario file ({exc})") from None


def dump_uncertainty(u: DemandUncertainty) -> dict:
    if u.kind == "discrete":
        scs = []
        for i, s in enumerate(u.scenarios):
            entry = {"od": [{"origin": a, "destination": b, "passengers": v} for (a, b), v in s.items()]}
            if u.probabilities is not None:
                entry["probability"] = u.probabilities[i]
            scs.append(entry)
        return {"kind": "discrete", "scenarios": scs}
    out = {"kind": u.kind, "pairs": [{"origin": a, "destination": b, "lower": u.lower[(a, b)],
                                      "upper": u.upper[(a, b)]} for (a, b) in u.lower]}
    if u.kind == "gamma":
        out["budget"] = u.budget
    return out


# --------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class ScenarioEvaluation:
    scenario: dict
    objective: float
    travel_time: float
    total_deficit: float
    max_deficit: float
    unserved: float

    def to_dict(self) -> dict:
        return {
            "scenario": [{"origin": a, "destination": b, "passengers": v}
                         for (a, b), v in self.scenario.items()],
            "objective": self.objective, "travel_time": self.travel_time,
            "total_deficit": self.total_deficit, "max_deficit": self.max_deficit,
            "unserved": self.unserved,
        }


class ScenarioEvaluator:
    """Vectorized link-level evaluation of demand scenarios for a fixed concept."""

    def __init__(self, instance: Instance, pool: LinePool, concept: LineConcept,
                 pairs: Sequence[ODPair], deficit_weight: Optional[float] = None,
                 unserved_weight: Optional[float] = None):
        self.pairs = list(pairs)
        served = {a for l in concept.selected for a in pool[l].link_path}
        paths, missing = shortest_paths_ptn(instance, {p: 1.0 for p in self.pairs}, served)
        links = [a.id for a in instance.links]
        col = {a: i for i, a in enumerate(links)}
        self.links = links
        self.incidence = np.zeros((len(links), len(self.pairs)))
        self.lengths = np.zeros(len(self.pairs))
        self.unserved_mask = np.zeros(len(self.pairs))
        for j, pair in enumerate(self.pairs):
            if pair in paths:
                for a in paths[pair].links:
                    self.incidence[col[a], j] = 1.0
                self.lengths[j] = paths[pair].length
            else:
                self.unserved_mask[j] = 1.0
        cap = {a: 0.0 for a in links}
        for l in concept.selected:
            for a in pool[l].link_path:
                cap[a] += concept.f(l) * pool[l].capacity
        self.capacity = np.array([cap[a] for a in links])
        if deficit_weight is None or unserved_weight is None:
            dists = all_pairs_distances(instance, served)
            diameter = max((d for row in dists.values() for d in row.values()), default=0.0)
            penalty = 3.0 * max(diameter, 1.0)
            deficit_weight = penalty if deficit_weight is None else deficit_weight
            unserved_weight = penalty if unserved_weight is None else unserved_weight
        self.deficit_weight = float(deficit_weight)
        self.unserved_weight = float(unserved_weight)

    def batch(self, demand: np.ndarray) -> dict[str, np.ndarray]:
        """Evaluate scenarios given as rows of a (n_scenarios, n_pairs) array."""
        demand = np.atleast_2d(np.asarray(demand, dtype=float))
        loads = demand @ self.incidence.T
        deficit = np.maximum(0.0, loads - self.capacity)
        travel = demand @ self.lengths
        unserved = demand @ self.unserved_mask
        total_def = deficit.sum(axis=1)
        obj = travel + self.deficit_weight * total_def + self.unserved_weight * unserved
        max_def = deficit.max(axis=1) if deficit.shape[1] else np.zeros(len(demand))
        return {"objective": obj, "travel_time": travel, "total_deficit": total_def,
                "max_deficit": max_def, "unserved": unserved}

    def vector(self, scenario: Mapping[ODPair, float]) -> np.ndarray:
        extra = set(k for k, v in scenario.items() if v) - set(self.pairs)
        if extra:
            raise ValidationError(f"scenario has OD pairs unknown to the evaluator: {sorted(extra)}")
        return np.array([scenario.get(p, 0.0) for p in self.pairs], dtype=float)

    def evaluate(self, scenario: Mapping[ODPair, float]) -> ScenarioEvaluation:
        r = self.batch(self.vector(scenario))
        return self._row(r, 0, self.vector(scenario))

    def _row(self, r, i, x) -> ScenarioEvaluation:
        return ScenarioEvaluation({p: float(v) for p, v in zip(self.pairs, x)},
                                  float(r["objective"][i]), float(r["travel_time"][i]),
                                  float(r["total_deficit"][i]), float(r["max_deficit"][i]),
                                  float(r["unserved"][i]))


@dataclass
class WorstCaseResult:
    worst: ScenarioEvaluation
    evaluated: int
    exact: bool = True

    @property
    def scenario(self) -> dict:
        return self.worst.scenario

    @property
    def objective(self) -> float:
        return self.worst.objective

    def to_dict(self) -> dict:
        return {"worst": self.worst.to_dict(), "evaluated": self.evaluated, "exact": self.exact}


def _box_vertices(lo: np.ndarray, hi: np.ndarray):
    n = len(lo)
    total = 1 << n
    bits = np.arange(n)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK))
        pick = ((codes[:, None] >> bits) & 1).astype(bool)
        yield np.where(pick, hi, lo)


def _gamma_vertices(lo: np.ndarray, hi: np.ndarray, budget: float):
    """Vertices of {lo <= x <= hi, sum x <= budget}: box vertices within the
    budget, plus points with one coordinate strictly inside and the budget tight."""
    n = len(lo)
    for block in _box_vertices(lo, hi):
        keep = block.sum(axis=1) <= budget + 1e-9
        if keep.any():
            yield block[keep]
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for block in _box_vertices(lo[others], hi[others]):
            free = budget - block.sum(axis=1)
            ok = (free > lo[i] + 1e-12) & (free < hi[i] - 1e-12)
            if not ok.any():
                continue
            rows = np.empty((int(ok.sum()), n))
            rows[:, others] = block[ok]
            rows[:, i] = free[ok]
            yield rows


def worst_case_eval(instance: Instance, pool: LinePool, concept: LineConcept,
                    uncertainty: DemandUncertainty, deficit_weight: Optional[float] = None,
                    unserved_weight: Optional[float] = None,
                    max_pairs: int = MAX_VERTEX_PAIRS) -> WorstCaseResult:
    """Scenario of ``uncertainty`` with the largest evaluation objective."""
    ev = ScenarioEvaluator(instance, pool, concept, uncertainty.pairs, deficit_weight, unserved_weight)
    if uncertainty.kind == "discrete":
        blocks = [np.array([ev.vector(s) for s in uncertainty.scenarios])]
    else:
        if len(ev.pairs) > max_pairs:
            raise TooManyPairs(f"{len(ev.pairs)} OD pairs exceed the vertex enumeration limit "
                               f"{max_pairs}; evaluate a sampled discrete scenario set instead")
        lo = np.array([uncertainty.lower[p] for p in ev.pairs], dtype=float)
        hi = np.array([uncertainty.upper[p] for p in ev.pairs], dtype=float)
        blocks = (_box_vertices(lo, hi) if uncertainty.kind == "box"
                  else _gamma_vertices(lo, hi, uncertainty.budget))
    best = None
    count = 0
    for block in blocks:
        r = ev.batch(block)
        i = int(np.argmax(r["objective"]))  # first maximum -> deterministic
        if best is None or r["objective"][i] > best[0].objective + 1e-12:
            best = (ev._row(r, i, block[i]),)
        count += len(block)
    return WorstCaseResult(best[0], count, exact=True)


@dataclass
class ExpectedResult:
    expected: float
    table: list[tuple[int, float, float]]  # (scenario index, probability, objective)
    evaluations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"expected": self.expected,
                "scenarios": [{"index": i, "probability": p, "objective": o} for i, p, o in self.table]}


def expected_eval(instance: Instance, pool: LinePool, concept: LineConcept,
                  uncertainty: DemandUncertainty,
                  evaluator: Optional[Callable[[Mapping[ODPair, float]], float]] = None,
                  deficit_weight: Optional[float] = None,
                  unserved_weight: Optional[float] = None) -> ExpectedResult:
    """Probability-weighted objective over a discrete scenario set.

    ``evaluator`` replaces the built-in scenario objective when given.
    """
    if uncertainty.kind != "discrete" or uncertainty.probabilities is None:
        raise MissingProbabilities("expected evaluation needs a discrete set with probabilities")
    evals = []
    if evaluator is None:
        ev = ScenarioEvaluator(instance, pool, concept, uncertainty.pairs, deficit_weight, unserved_weight)
        evals = [ev.evaluate(s) for s in uncertainty.scenarios]
        objs = [e.objective for e in evals]
    else:
        objs = [float(evaluator(s)) for s in uncertainty.scenarios]
    table = [(i, p, o) for i, (p, o) in enumerate(zip(uncertainty.probabilities, objs))]
    return ExpectedResult(sum(p * o for _, p, o in table), table, evals)


# ------------------------------------------------------------------ models

def robust_cost_model_box(instance: Instance, pool: LinePool,
                          uncertainty: DemandUncertainty) -> FormulationArtifacts:
    """Cost model whose link lower bounds come from the all-upper-bound demand.

    With planner-assigned shortest path routing the largest demand is the
    worst case, so the result is feasible for every scenario of the box.
    """
    if uncertainty.kind not in ("box", "gamma"):
        raise ValidationError("robust box model needs box (or gamma) uncertainty")
    art = cost_model_from_demand(instance, pool, od=dict(uncertainty.upper))
    art.kind = "robust-box"
    return art


def _coupling_measure(measure) -> str:
    if measure == "freq_norm" or measure == ("freq_norm", 1):
        return "freq_norm"
    if measure == "line_set_delta":
        return "line_set_delta"
    raise UnsupportedMeasure(f"measure {measure!r} cannot be linearized in the multi-period model")


def build_multiperiod_model(instance: Instance, pool: LinePool,
                            seasons: Sequence[Mapping[ODPair, float]],
                            weights: Optional[Sequence[float]] = None,
                            measure: Union[str, tuple] = "freq_norm",
                            bound: float = math.inf,
                            capacity: Optional[float] = None) -> FormulationArtifacts:
    """One cost model per demand season, pairwise coupled by diff(c_j, c_k) <= bound.

    Objective: sum of season weight times season cost. ``measure`` is the
    1-norm of the frequency difference or the number of lines added/removed.
    """
    K = len(seasons)
    if K < 2:
        raise ValidationError("multi-period planning needs at least two seasons")
    weights = [1.0] * K if weights is None else [float(w) for w in weights]
    if len(weights) != K or any(w < 0 for w in weights):
        raise ValidationError("one non-negative weight per season required")
    kind = _coupling_measure(measure)
    lowers = [demand_lower_bounds(instance, od, capacity) for od in seasons]
    _, U = _link_bounds(instance, None, None)
    ubs = {line.id: max(frequency_upper_bound(line, L, U) for L in lowers) for line in pool}
    model = milp.MilpModel("multiperiod")
    art = FormulationArtifacts(model, {}, instance, pool, "multiperiod")
    fvars: list[dict[str, str]] = []
    for j in range(K):
        fv = {}
        for line in pool:
            name = f"f[{j}][{line.id}]"
            model.add_var(name, 0, ubs[line.id], integer=True, obj=weights[j] * line.cost_per_trip)
            fv[line.id] = name
            art.var_index[("f", j, line.id)] = name
        _add_link_frequency_rows(model, instance, pool, fv, lowers[j], U, tag=f"[{j}]")
        fvars.append(fv)
    if math.isfinite(bound):
        yvars = []
        if kind == "line_set_delta":
            for j in range(K):
                yv = {}
                for line in pool:
                    y = f"y[{j}][{line.id}]"
                    model.add_var(y, 0, 1, integer=True)
                    f = fvars[j][line.id]
                    model.add_constr({f: 1.0, y: -float(max(ubs[line.id], 1))}, "<=", 0)
                    model.add_constr({f: 1.0, y: -1.0}, ">=", 0)
                    yv[line.id] = y
                    art.var_index[("y", j, line.id)] = y
                yvars.append(yv)
        for j, k in itertools.combinations(range(K), 2):
            row = {}
            for line in pool:
                if kind == "freq_norm":
                    ep, em = f"ep[{j},{k}][{line.id}]", f"em[{j},{k}][{line.id}]"
                    model.add_var(ep, 0.0, math.inf)
                    model.add_var(em, 0.0, math.inf)
                    model.add_constr({fvars[j][line.id]: 1.0, fvars[k][line.id]: -1.0,
                                      ep: -1.0, em: 1.0}, "==", 0)
                    row[ep] = row[em] = 1.0
                else:
                    d = f"delta[{j},{k}][{line.id}]"
                    model.add_var(d, 0.0, 1.0)
                    yj, yk = yvars[j][line.id], yvars[k][line.id]
                    model.add_constr({d: 1.0, yj: -1.0, yk: 1.0}, ">=", 0)
                    model.add_constr({d: 1.0, yj: 1.0, yk: -1.0}, ">=", 0)
                    row[d] = 1.0
            model.add_constr(row, "<=", bound, name=f"similar[{j},{k}]")
    art.extras.update(seasons=K, weights=weights, measure=kind, bound=bound, lowers=lowers)
    return art
