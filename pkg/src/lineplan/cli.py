"""Command-line front end: ``lineplan solve | evaluate | generate-pool | scan``.

Exit codes: 0 success, 1 I/O or validation error, 2 infeasible,
3 node limit hit, 4 capacity check failed under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy
import scipy

from . import __version__
from . import formulations as fm
from .errors import Infeasible, LinePlanError, ValidationError
from .evaluate import check_capacity, concept_dissimilarity, indicators, link_failure_scan
from .milp import Status
from .network import (Instance, LineConcept, LinePool, generate_pool, load_concept, load_instance,
                      load_od, load_pool, save_concept, save_pool)
from .routing import (FixedPenalty, assign_trips, build_cgn, regular_timetable, route_line_level,
                      route_link_level, save_arc_loads, save_routes)
from .uncertainty import (build_multiperiod_model, expected_eval, load_uncertainty,
                          robust_cost_model_box, worst_case_eval)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_CAPACITY = 0, 1, 2, 3, 4
FORMULATIONS = ("cost", "flow-link", "flow-line", "direct", "multiperiod", "robust-box")
LEVELS = ("link", "line", "trip")
DISSIMILARITY_MEASURES = ("freq_norm", "line_set_delta", "transport_distance")

# options that only say where to write, so they stay out of the manifest
_UNRECORDED = {"out", "config", "handler"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


@dataclass
class RunConfig:
    command: str
    inputs: dict[str, str]
    options: dict = field(default_factory=dict)
    out: Path = Path(".")


# ------------------------------------------------------------------ output

def _clean(value):
    """Round floats to 6 decimals and make the structure JSON friendly."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return round(value, 6) + 0.0
    if isinstance(value, (numpy.integer,)):
        return int(value)
    if isinstance(value, (numpy.floating,)):
        return _clean(float(value))
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "value"):  # enums
        return value.value
    return str(value)


def write_json(path: Path, data) -> None:
    text = json.dumps(_clean(data), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig) -> None:
    write_json(cfg.out / "manifest.json", {
        "command": cfg.command,
        "inputs": {role: {"path": p, "sha256": _sha256(p)} for role, p in sorted(cfg.inputs.items())},
        "options": cfg.options,
        "versions": {"lineplan": __version__, "python": platform.python_version(),
                     "numpy": numpy.__version__, "scipy": scipy.__version__},
    })


# ------------------------------------------------------------------ parsing

def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _policy(text: str):
    if text == "reroute":
        return "reroute"
    if text.startswith("bridge"):
        _, _, s = text.partition(":")
        try:
            return ("bridge", float(s or 2.0))
        except ValueError:
            pass
    raise argparse.ArgumentTypeError("policy is 'reroute' or 'bridge[:slowdown]'")


def _add_instance_args(p, pool=True, od_required=True):
    p.add_argument("--network", required=True, help="network CSV")
    p.add_argument("--od", required=od_required, help="OD matrix CSV")
    if pool:
        p.add_argument("--pool", required=True, help="line pool CSV")
    p.add_argument("--period", type=float, help="planning period T in minutes (default 60)")
    p.add_argument("--capacity", type=int, help="default vehicle capacity C (default 100)")
    p.add_argument("--config", help="JSON file with option values; command line flags win")
    p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lineplan", description="Line planning: frequencies, routing, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a line planning formulation")
    _add_instance_args(p)
    p.add_argument("--formulation", choices=FORMULATIONS, default="cost")
    p.add_argument("--objective", default="cost",
                   help="flow models: cost | travel_time | weighted:LAMBDA")
    p.add_argument("--transfer-penalty", type=float, default=5.0)
    p.add_argument("--detour", type=float, help="detour factor (direct) or bound (flow models)")
    p.add_argument("--budget", type=float, help="cost budget for the direct traveler model")
    p.add_argument("--fixed-cost", action="store_true", help="charge fixed cost per selected line")
    p.add_argument("--system-frequency", type=int, help="frequencies must be multiples of this")
    p.add_argument("--frequencies", type=_ints, help="allowed frequencies, e.g. 1,2,4")
    p.add_argument("--seasons", nargs="+", help="multiperiod: one OD CSV per season")
    p.add_argument("--season-weights", type=_floats)
    p.add_argument("--measure", choices=("freq_norm", "line_set_delta"), default="freq_norm")
    p.add_argument("--bound", type=float, default=math.inf, help="multiperiod similarity bound")
    p.add_argument("--uncertainty", help="robust-box: scenario JSON file")
    p.add_argument("--node-limit", type=int, default=200000)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("evaluate", help="route passengers and evaluate a line concept")
    _add_instance_args(p)
    p.add_argument("--concept", required=True)
    p.add_argument("--level", nargs="+", choices=LEVELS, default=["link"])
    p.add_argument("--transfer-penalty", type=float, default=5.0)
    p.add_argument("--strict", action="store_true", help="exit 4 if any capacity check fails")
    p.add_argument("--scan", choices=("link-failure",))
    p.add_argument("--policy", type=_policy, default="reroute")
    p.add_argument("--uncertainty", help="scenario JSON file")
    p.add_argument("--dissimilar", help="second concept CSV to compare against")
    p.add_argument("--fare", type=float, help="fare per passenger minute")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("generate-pool", help="build a line pool from shortest paths")
    _add_instance_args(p, pool=False, od_required=False)
    p.add_argument("--terminals", help="CSV of terminal pairs (origin,destination); default: OD pairs")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--detour", type=float, default=1.0)
    p.add_argument("--cost-per-minute", type=float, default=1.0)
    p.add_argument("--line-fixed-cost", type=float, default=0.0)
    p.add_argument("--line-capacity", type=int)
    p.set_defaults(handler=cmd_generate_pool)

    p = sub.add_parser("scan", help="link failure scan")
    _add_instance_args(p)
    p.add_argument("--concept")
    p.add_argument("--policy", type=_policy, default="reroute")
    p.add_argument("--penalty", type=float, help="minutes charged per unserved passenger")
    p.set_defaults(handler=cmd_scan)
    return parser


def _apply_config_file(args, argv: Sequence[str]) -> None:
    if not args.config:
        return
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.config}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{args.config}: expected a JSON object")
    known = set(vars(args)) - _UNRECORDED - {"command"}
    unknown = sorted(set(k.replace("-", "_") for k in data) - known)
    if unknown:
        raise ValidationError(f"{args.config}: unknown keys {unknown}")
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=")[0].replace("-", "_"))
    for key, value in data.items():
        key = key.replace("-", "_")
        if key not in explicit:
            setattr(args, key, value)


def _run_config(args) -> RunConfig:
    inputs = {}
    for role in ("network", "od", "pool", "concept", "uncertainty", "dissimilar", "terminals", "config"):
        path = getattr(args, role, None)
        if path:
            inputs[role] = str(path)
    for j, path in enumerate(getattr(args, "seasons", None) or []):
        inputs[f"season_{j + 1}"] = str(path)
    for role, path in inputs.items():
        if not Path(path).is_file():
            raise ValidationError(f"{role} file not found: {path}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    options = {k: v for k, v in sorted(vars(args).items())
               if k not in _UNRECORDED and k not in inputs and k != "seasons"}
    return RunConfig(args.command, inputs, options, out)


def _instance(args) -> Instance:
    config = {}
    if args.period is not None:
        config["period_T"] = args.period
    if args.capacity is not None:
        config["default_capacity_C"] = args.capacity
    return load_instance(args.network, args.od, config)


# ----------------------------------------------------------------- commands

def _objective(text: str):
    if text in ("cost", "travel_time"):
        return text
    if text.startswith("weighted:"):
        try:
            return ("weighted", float(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise ValidationError("objective is cost, travel_time or weighted:LAMBDA")


def _build(args, instance: Instance, pool: LinePool):
    f = args.formulation
    if f == "cost":
        art = fm.cost_model_from_demand(instance, pool, with_fixed_cost=args.fixed_cost)
    elif f in ("flow-link", "flow-line"):
        art = fm.build_flow_model(instance, pool, level=f.split("-")[1],
                                  objective=_objective(args.objective),
                                  transfer_penalty=args.transfer_penalty,
                                  lower=fm.demand_lower_bounds(instance) if args.objective == "cost" else None,
                                  detour_bound=args.detour)
    elif f == "direct":
        art = fm.build_direct_traveler_model(instance, pool, detour_factor=args.detour or 1.0,
                                             budget=args.budget,
                                             frequency_constraints=args.budget is None)
    elif f == "robust-box":
        if not args.uncertainty:
            raise ValidationError("robust-box needs --uncertainty")
        art = robust_cost_model_box(instance, pool, load_uncertainty(args.uncertainty))
    else:
        if not args.seasons or len(args.seasons) < 2:
            raise ValidationError("multiperiod needs --seasons with at least two OD files")
        seasons = [load_od(p, instance) for p in args.seasons]
        art = build_multiperiod_model(instance, pool, seasons, weights=args.season_weights,
                                      measure=args.measure, bound=args.bound)
    if args.system_frequency:
        art = fm.apply_system_frequency(art, args.system_frequency)
    if args.frequencies:
        art = fm.apply_frequency_indicators(art, args.frequencies)
    return art


def cmd_solve(args) -> int:
    cfg = _run_config(args)
    instance = _instance(args)
    pool = load_pool(args.pool, instance)
    art = _build(args, instance, pool)
    sol = fm.solve(art, node_limit=args.node_limit)
    result = {"formulation": args.formulation, "status": sol.status.value,
              "objective": sol.objective_value, "bound": sol.bound, "node_count": sol.node_count}
    lines = [f"formulation: {args.formulation}", f"status: {sol.status.value}",
             f"nodes: {sol.node_count}"]
    has_solution = sol.status == Status.OPTIMAL or (
        sol.status == Status.NODE_LIMIT and math.isfinite(sol.objective_value))
    if has_solution:
        if args.formulation == "multiperiod":
            concepts = [fm.decode_concept(art, sol, season=j) for j in range(len(args.seasons))]
            result["concepts"] = [c.frequencies for c in concepts]
            for j, c in enumerate(concepts):
                save_concept(c, cfg.out / f"concept_season{j + 1}.csv", pool)
                lines.append(f"season {j + 1}: " + _describe(c, pool))
        else:
            concept = fm.decode_concept(art, sol)
            result["concept"] = concept.frequencies
            result["cost"] = sum(pool[l].cost_per_trip * f for l, f in concept.frequencies.items())
            save_concept(concept, cfg.out / "concept.csv", pool)
            lines.append("concept: " + _describe(concept, pool))
            lines.append(f"cost: {_clean(result['cost'])}")
        lines.append(f"objective: {_clean(sol.objective_value)}")
    write_json(cfg.out / "solution.json", result)
    (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(cfg)
    if sol.status == Status.OPTIMAL:
        return EXIT_OK
    if sol.status == Status.NODE_LIMIT:
        return EXIT_LIMIT
    print(f"lineplan: model is {sol.status.value.lower()}", file=sys.stderr)
    return EXIT_INFEASIBLE


def _describe(concept: LineConcept, pool: LinePool) -> str:
    sel = [f"{l}={concept.f(l)}" for l in pool.ids if concept.f(l) > 0]
    return " ".join(sel) if sel else "(no line selected)"


def _routings(instance: Instance, pool: LinePool, concept: LineConcept, levels, penalty: float):
    out = {}
    if "link" in levels:
        served = {a for l in concept.selected for a in pool[l].link_path}
        out["link"] = route_link_level(instance, instance.od, served)
    if "line" in levels or "trip" in levels:
        cgn = build_cgn(instance, pool, FixedPenalty(penalty), lines=concept.selected)
        try:
            line = route_line_level(cgn, capacities=concept)
        except Infeasible:
            # no capacity-respecting flow: report violations of the shortest routes
            line = route_line_level(cgn)
        if "line" in levels:
            out["line"] = line
        if "trip" in levels:
            out["trip"] = assign_trips(line, regular_timetable(instance, pool, concept), concept)
    return out


def _write_capacity_csv(path: Path, report) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arc", "load", "capacity", "deficit"])
        for v in report.violations:
            key = v.key if isinstance(v.key, tuple) else (v.key,)
            w.writerow([":".join(str(k) for k in key), _clean(float(v.load)),
                        _clean(float(v.capacity)), _clean(float(v.deficit))])


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    instance = _instance(args)
    pool = load_pool(args.pool, instance)
    concept = load_concept(args.concept, pool)
    levels = [lv for lv in LEVELS if lv in args.level]
    routings = _routings(instance, pool, concept, levels, args.transfer_penalty)
    report: dict = {"levels": {}}
    lines = []
    any_violation = False
    for lv in levels:
        cap = check_capacity(pool, concept, routings[lv], lv)
        ind = indicators(instance, pool, concept, routings[lv], fare_per_unit=args.fare)
        report["levels"][lv] = {"capacity": cap.to_dict(), "indicators": ind.to_dict()}
        _write_capacity_csv(cfg.out / f"capacity_{lv}.csv", cap)
        save_routes(routings[lv], cfg.out / f"routes_{lv}.csv")
        save_arc_loads(routings[lv], cfg.out / f"loads_{lv}.csv")
        any_violation |= not cap.feasible
        lines.append(f"{lv}: {'feasible' if cap.feasible else 'infeasible'}"
                     f", {len(cap.violations)} violation(s)")
        for v in cap.violations:
            lines.append(f"  {v.key}: load {_clean(float(v.load))} > capacity "
                         f"{_clean(float(v.capacity))}, deficit {_clean(float(v.deficit))}")
        lines.append(f"  cost {_clean(ind.total_cost)}, coverage {_clean(ind.coverage)}")
    if args.scan:
        scan = link_failure_scan(instance, pool, concept, args.policy)
        report["scan"] = scan.to_dict()
        lines.append(f"link failure scan ({scan.policy}): worst {scan.to_dict()['worst_link']} "
                     f"index {_clean(scan.worst_index)}")
    if args.uncertainty:
        u = load_uncertainty(args.uncertainty)
        worst = worst_case_eval(instance, pool, concept, u)
        report["uncertainty"] = {"kind": u.kind, "worst_case": worst.to_dict()}
        lines.append(f"worst case objective {_clean(worst.objective)}")
        if u.kind == "discrete" and u.probabilities is not None:
            exp = expected_eval(instance, pool, concept, u)
            report["uncertainty"]["expected"] = exp.to_dict()
            lines.append(f"expected objective {_clean(exp.expected)}")
    if args.dissimilar:
        other = load_concept(args.dissimilar, pool)
        report["dissimilarity"] = {m: concept_dissimilarity(concept, other, pool, m)
                                   for m in DISSIMILARITY_MEASURES}
        lines.append("dissimilarity: " + ", ".join(
            f"{m} {_clean(v)}" for m, v in report["dissimilarity"].items()))
    write_json(cfg.out / "evaluation.json", report)
    (cfg.out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(cfg)
    if args.strict and any_violation:
        print("lineplan: capacity check failed", file=sys.stderr)
        return EXIT_CAPACITY
    return EXIT_OK


def _read_terminals(path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    for n, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) < 2:
            raise ValidationError(f"{path}:{n}: expected origin,destination")
        pairs.append((row[0].strip(), row[1].strip()))
    return pairs


def cmd_generate_pool(args) -> int:
    cfg = _run_config(args)
    instance = _instance(args)
    terminals = _read_terminals(args.terminals) if args.terminals else list(instance.od)
    if not terminals:
        raise ValidationError("no terminal pairs: give --terminals or a non-empty --od")
    pool = generate_pool(instance, terminals, k=args.k, detour_factor=args.detour,
                         cost_per_minute=args.cost_per_minute, fixed_cost=args.line_fixed_cost,
                         capacity=args.line_capacity)
    save_pool(pool, cfg.out / "pool.csv")
    write_json(cfg.out / "pool.json", {"lines": [
        {"id": l.id, "links": list(l.link_path), "stations": list(l.stations),
         "cost_per_trip": l.cost_per_trip, "length": l.length(instance)} for l in pool]})
    (cfg.out / "summary.txt").write_text(f"{len(pool.lines)} lines generated\n", encoding="utf-8")
    write_manifest(cfg)
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = _run_config(args)
    instance = _instance(args)
    pool = load_pool(args.pool, instance)
    concept = load_concept(args.concept, pool) if args.concept else None
    scan = link_failure_scan(instance, pool, concept, args.policy, args.penalty)
    write_json(cfg.out / "scan.json", scan.to_dict())
    with (cfg.out / "scan.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["link", "unserved", "detoured", "added_minutes", "index"])
        for r in scan.results:
            w.writerow([r.link, _clean(r.unserved), _clean(r.detoured),
                        _clean(r.added_minutes), _clean(r.index)])
    (cfg.out / "summary.txt").write_text(
        f"policy {scan.policy}: worst link {scan.to_dict()['worst_link']}, "
        f"index {_clean(scan.worst_index)}\n", encoding="utf-8")
    write_manifest(cfg)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        args = parser.parse_args(argv)
        _apply_config_file(args, argv)
        return args.handler(args)
    except Infeasible as exc:
        print(f"lineplan: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (LinePlanError, OSError, ValueError) as exc:
        print(f"lineplan: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
