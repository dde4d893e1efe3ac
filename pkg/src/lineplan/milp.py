"""Bounded mixed-integer linear programs and a branch-and-bound solver.

LP relaxations are solved with HiGHS (through :func:`scipy.optimize.linprog`);
branching and node selection are done here so that runs are deterministic:
most-fractional branching (ties -> lowest index), best-bound node selection
(ties -> deeper node first, then creation order).
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from .errors import NumericalError, ValidationError

FEAS_TOL = 1e-6
OPT_TOL = 1e-6
LP_ITER_CAP = 100_000
DEFAULT_NODE_LIMIT = 200_000

VarRef = Union[int, str]


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NODE_LIMIT = "NodeLimit"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass(frozen=True)
class Constraint:
    coefs: Mapping[int, float]
    sense: str  # "<=", "==", ">="
    rhs: float
    name: str = ""


_SENSES = {"<=": "<=", "=<": "<=", "==": "==", "=": "==", ">=": ">=", "=>": ">="}


class MilpModel:
    """Mutable model builder; solvers never modify the model they are given."""

    def __init__(self, name: str = "model", sense: str = "min"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.sense = sense
        self.obj_constant = 0.0
        self._index: dict[str, int] = {}

    @property
    def sense(self) -> str:
        return self._sense

    @sense.setter
    def sense(self, value: str):
        if value not in ("min", "max"):
            raise ValidationError(f"objective sense must be 'min' or 'max', got {value!r}")
        self._sense = value

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._index:
            raise ValidationError(f"duplicate variable {name}")
        if lb is None or not math.isfinite(lb):
            raise ValidationError(f"variable {name} must have a finite lower bound")
        if ub < lb:
            ub = lb - 1  # keep the contradiction; the LP reports infeasible
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), bool(integer)))
        self._index[name] = idx
        if obj:
            self.objective[idx] = float(obj)
        return idx

    def index(self, ref: VarRef) -> int:
        if isinstance(ref, str):
            return self._index[ref]
        if not 0 <= ref < len(self.variables):
            raise ValidationError(f"variable index {ref} out of range")
        return ref

    def var(self, ref: VarRef) -> Variable:
        return self.variables[self.index(ref)]

    def add_constr(self, coefs: Mapping[VarRef, float], sense: str, rhs: float,
                   name: str = "") -> Optional[int]:
        """Add ``sum(coefs) sense rhs``. Empty constraints are dropped (or rejected if violated)."""
        if sense not in _SENSES:
            raise ValidationError(f"bad relation {sense!r}")
        sense = _SENSES[sense]
        merged: dict[int, float] = {}
        for ref, c in coefs.items():
            i = self.index(ref)
            merged[i] = merged.get(i, 0.0) + float(c)
        merged = {i: c for i, c in merged.items() if c != 0.0}
        if not merged:
            ok = {"<=": 0 <= rhs + FEAS_TOL, ">=": 0 >= rhs - FEAS_TOL, "==": abs(rhs) <= FEAS_TOL}[sense]
            if ok:
                return None
            # keep an explicit infeasible row: 0 * x_0 == rhs needs at least one variable
            if not self.variables:
                self.add_var("__infeasible_anchor", 0.0, 0.0)
            merged = {0: 0.0}
        self.constraints.append(Constraint(merged, sense, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coefs: Mapping[VarRef, float], sense: Optional[str] = None,
                      constant: float = 0.0):
        self.objective = {}
        for ref, c in coefs.items():
            i = self.index(ref)
            self.objective[i] = self.objective.get(i, 0.0) + float(c)
        if sense is not None:
            self.sense = sense
        self.obj_constant = float(constant)

    def add_objective(self, coefs: Mapping[VarRef, float]):
        for ref, c in coefs.items():
            i = self.index(ref)
            self.objective[i] = self.objective.get(i, 0.0) + float(c)

    def copy(self) -> "MilpModel":
        m = MilpModel(self.name, self.sense)
        m.variables = list(self.variables)
        m.constraints = list(self.constraints)
        m.objective = dict(self.objective)
        m.obj_constant = self.obj_constant
        m._index = dict(self._index)
        return m

    def set_bounds(self, ref: VarRef, lb: Optional[float] = None, ub: Optional[float] = None):
        i = self.index(ref)
        v = self.variables[i]
        self.variables[i] = Variable(v.name, v.lb if lb is None else float(lb),
                                     v.ub if ub is None else float(ub), v.integer)

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def objective_of(self, values: Mapping[str, float]) -> float:
        return self.obj_constant + sum(c * values[self.variables[i].name]
                                       for i, c in self.objective.items())

    def violations(self, values: Mapping[str, float], tol: float = FEAS_TOL) -> list[str]:
        """Names (or indices) of bounds/constraints violated by ``values``."""
        bad = []
        x = [values[v.name] for v in self.variables]
        for v, xv in zip(self.variables, x):
            if xv < v.lb - tol or xv > v.ub + tol:
                bad.append(f"bound:{v.name}")
            if v.integer and abs(xv - round(xv)) > tol:
                bad.append(f"integrality:{v.name}")
        for k, con in enumerate(self.constraints):
            lhs = sum(c * x[i] for i, c in con.coefs.items())
            scale = tol * max(1.0, abs(con.rhs))
            if ((con.sense == "<=" and lhs > con.rhs + scale)
                    or (con.sense == ">=" and lhs < con.rhs - scale)
                    or (con.sense == "==" and abs(lhs - con.rhs) > scale)):
                bad.append(con.name or f"row{k}")
        return bad

    def to_lp_string(self) -> str:
        """Human-readable dump: objective, one constraint per line, bounds, integers."""
        def term(i, c):
            return f"{'+' if c >= 0 else '-'} {abs(c):g} {self.variables[i].name}"

        out = [f"\\ {self.name}", "Minimize" if self.sense == "min" else "Maximize"]
        obj = " ".join(term(i, c) for i, c in sorted(self.objective.items()))
        out.append(f" obj: {obj or '0'}" + (f" + {self.obj_constant:g}" if self.obj_constant else ""))
        out.append("Subject To")
        for k, con in enumerate(self.constraints):
            lhs = " ".join(term(i, c) for i, c in sorted(con.coefs.items()))
            out.append(f" {con.name or f'c{k}'}: {lhs} {con.sense} {con.rhs:g}")
        out.append("Bounds")
        for v in self.variables:
            ub = "inf" if math.isinf(v.ub) else f"{v.ub:g}"
            out.append(f" {v.lb:g} <= {v.name} <= {ub}")
        ints = [v.name for v in self.variables if v.integer]
        if ints:
            out.append("General")
            out.append(" " + " ".join(ints))
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass
class MilpSolution:
    status: Status
    values: dict[str, float] = field(default_factory=dict)
    objective_value: float = math.nan
    bound: float = math.nan
    node_count: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.values[name]


class _LpData:
    """Dense/sparse arrays of a model in minimization form."""

    def __init__(self, model: MilpModel):
        n = model.num_vars
        sign = 1.0 if model.sense == "min" else -1.0
        self.sign = sign
        self.c = np.zeros(n)
        for i, coef in model.objective.items():
            self.c[i] = sign * coef
        ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
        eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
        for con in model.constraints:
            if con.sense == "==":
                r = len(b_eq)
                for i, coef in con.coefs.items():
                    eq_rows.append(r); eq_cols.append(i); eq_vals.append(coef)
                b_eq.append(con.rhs)
            else:
                s = 1.0 if con.sense == "<=" else -1.0
                r = len(b_ub)
                for i, coef in con.coefs.items():
                    ub_rows.append(r); ub_cols.append(i); ub_vals.append(s * coef)
                b_ub.append(s * con.rhs)
        self.A_ub = csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), n)) if b_ub else None
        self.b_ub = np.array(b_ub) if b_ub else None
        self.A_eq = csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), n)) if b_eq else None
        self.b_eq = np.array(b_eq) if b_eq else None
        self.lb = np.array([v.lb for v in model.variables], dtype=float)
        self.ub = np.array([v.ub for v in model.variables], dtype=float)
        self.integer = np.array([v.integer for v in model.variables], dtype=bool)

    def solve(self, lb: np.ndarray, ub: np.ndarray):
        """Return (status, x, value) of the relaxation with the given bounds (min form)."""
        if np.any(ub < lb - 1e-12):
            return Status.INFEASIBLE, None, math.inf
        if self.c.size == 0:
            return Status.OPTIMAL, np.zeros(0), 0.0
        bounds = np.column_stack([lb, np.where(np.isinf(ub), np.inf, ub)])
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs-ds",
                      options={"maxiter": LP_ITER_CAP, "presolve": True})
        if res.status == 0:
            return Status.OPTIMAL, np.asarray(res.x, dtype=float), float(res.fun)
        if res.status == 2:
            return Status.INFEASIBLE, None, math.inf
        if res.status == 3:
            return Status.UNBOUNDED, None, -math.inf
        raise NumericalError(f"LP solver stopped: {res.message}")


def _names(model: MilpModel, x: np.ndarray) -> dict[str, float]:
    return {v.name: float(xv) + 0.0 for v, xv in zip(model.variables, x)}


def solve_lp_relaxation(model: MilpModel) -> MilpSolution:
    """Optimum of the continuous relaxation (integrality dropped)."""
    data = _LpData(model)
    status, x, value = data.solve(data.lb, data.ub)
    if status is not Status.OPTIMAL:
        inf = math.inf if model.sense == "min" else -math.inf
        return MilpSolution(status, objective_value=inf if status is Status.INFEASIBLE else -inf,
                            bound=math.nan, node_count=1)
    obj = data.sign * value + model.obj_constant
    return MilpSolution(Status.OPTIMAL, _names(model, x), obj, obj, node_count=1)


def solve_milp(model: MilpModel, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL,
               node_limit: int = DEFAULT_NODE_LIMIT) -> MilpSolution:
    """Solve a bounded MILP to optimality by LP-based branch and bound.

    On hitting ``node_limit`` the result has status ``NODE_LIMIT`` and carries
    the incumbent (if any) and the best proven bound.
    """
    data = _LpData(model)
    int_idx = np.flatnonzero(data.integer)
    for i in int_idx:
        if not math.isfinite(data.ub[i]):
            raise ValidationError(f"integer variable {model.variables[i].name} needs a finite upper bound")
    lb0 = data.lb.copy()
    ub0 = data.ub.copy()
    lb0[int_idx] = np.ceil(lb0[int_idx] - feas_tol)
    ub0[int_idx] = np.floor(ub0[int_idx] + feas_tol)

    def finish(status, x=None, value=math.inf, bound=math.inf, nodes=0):
        if x is None:
            obj = math.inf if status is Status.INFEASIBLE else -math.inf
            if model.sense == "max":
                obj = -obj
            bnd = math.nan if status is not Status.NODE_LIMIT else data.sign * bound + model.obj_constant
            return MilpSolution(status, {}, obj, bnd, nodes)
        x = x.copy()
        x[int_idx] = np.round(x[int_idx])
        values = _names(model, x)
        obj = model.objective_of(values)
        return MilpSolution(status, values, obj, data.sign * bound + model.obj_constant, nodes)

    nodes = 0
    counter = 0
    status, x, value = data.solve(lb0, ub0)
    nodes += 1
    if status is Status.INFEASIBLE:
        return finish(Status.INFEASIBLE, nodes=nodes)
    if status is Status.UNBOUNDED:
        return finish(Status.UNBOUNDED, nodes=nodes)

    # objective takes only integer values -> LP bounds may be rounded up
    integral_obj = all(data.integer[i] and float(c).is_integer() for i, c in enumerate(data.c) if c != 0)

    def rounded(v):
        return math.ceil(v - feas_tol) if integral_obj and math.isfinite(v) else v

    incumbent = None
    incumbent_value = math.inf
    # heap entries: (bound, -depth, seq, lb, ub, x)
    heap = [(value, 0, counter, lb0, ub0, x)]
    while heap:
        bound, neg_depth, _, lb, ub, x = heapq.heappop(heap)
        if rounded(bound) >= incumbent_value - opt_tol:
            continue
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        if frac.size == 0 or frac.max() <= feas_tol:
            incumbent, incumbent_value = x, bound
            continue
        # most fractional: distance to nearest integer closest to 0.5
        score = np.where(frac > feas_tol, frac, -1.0)
        j = int(int_idx[int(np.argmax(score))])  # argmax returns the lowest index on ties
        xj = x[j]
        for side in (0, 1):
            nlb, nub = lb.copy(), ub.copy()
            if side == 0:
                nub[j] = math.floor(xj)
            else:
                nlb[j] = math.ceil(xj)
            if nodes >= node_limit:
                heapq.heappush(heap, (bound, neg_depth, counter, lb, ub, x))
                open_bound = rounded(min(h[0] for h in heap))
                return finish(Status.NODE_LIMIT, incumbent,
                              bound=min(open_bound, incumbent_value), nodes=nodes)
            st, cx, cval = data.solve(nlb, nub)
            nodes += 1
            if st is Status.UNBOUNDED:
                return finish(Status.UNBOUNDED, nodes=nodes)
            if st is Status.OPTIMAL and rounded(cval) < incumbent_value - opt_tol:
                counter += 1
                heapq.heappush(heap, (cval, neg_depth - 1, counter, nlb, nub, cx))
    if incumbent is None:
        return finish(Status.INFEASIBLE, nodes=nodes)
    return finish(Status.OPTIMAL, incumbent, incumbent_value, incumbent_value, nodes)
