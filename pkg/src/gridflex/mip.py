"""Solver-agnostic mixed-integer linear programs and a bundled exact solver.

A :class:`MathProgram` is a plain container of named variables, linear
constraints and a linear minimization objective.  :func:`solve` runs the
bundled branch-and-bound (LP relaxations via scipy/HiGHS) or, optionally,
HiGHS' own MIP code.  :func:`relax_and_duals` re-solves the continuous
relaxation with all binaries fixed and returns constraint duals, which is
how zonal prices are recovered after a mixed-integer market clearing.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, milp, LinearConstraint, Bounds

INF = math.inf

# Solution statuses
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap_limit"


class SolverError(Exception):
    pass


class IllFormedProgram(SolverError):
    pass


class InfeasibleFixing(SolverError):
    """Raised when fixing binaries to the requested values has no feasible point."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    binary: bool


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[int, float], ...]  # (variable index, coefficient)
    sense: str  # "<=", "=" or ">="
    rhs: float


@dataclass
class SolverOptions:
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    mip_gap: float = 1e-6        # absolute, in objective units
    time_limit: float = 60.0     # seconds per solve
    engine: str = "highs"        # "highs" (scipy.optimize.milp) or "bnb" (bundled)


@dataclass
class Solution:
    status: str
    values: dict[str, float] = field(default_factory=dict)
    objective: float | None = None
    duals: dict[str, float] | None = None
    reduced_costs: dict[str, float] | None = None
    gap: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return self.values[name]


class MathProgram:
    """Mutable builder for a minimization MILP."""

    def __init__(self, name: str = "prog"):
        self.name = name
        self.variables: list[Variable] = []
        self._var_index: dict[str, int] = {}
        self.constraints: list[Constraint] = []
        self._constr_names: set[str] = set()
        self._objective: dict[int, float] = {}

    # -- construction -------------------------------------------------

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                binary: bool = False) -> str:
        if name in self._var_index:
            raise IllFormedProgram(f"duplicate variable {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise IllFormedProgram(f"variable {name!r} has lb {lb} > ub {ub}")
        self._var_index[name] = len(self.variables)
        self.variables.append(Variable(name, lb, ub, binary))
        return name

    def add_constr(self, name: str, terms: Iterable[tuple[str, float]],
                   sense: str, rhs: float) -> str:
        if sense not in ("<=", "=", ">="):
            raise IllFormedProgram(f"bad sense {sense!r}")
        if name in self._constr_names:
            raise IllFormedProgram(f"duplicate constraint {name!r}")
        acc: dict[int, float] = {}
        for var, coef in terms:
            if var not in self._var_index:
                raise IllFormedProgram(f"constraint {name!r} references unknown variable {var!r}")
            if coef != 0.0:
                idx = self._var_index[var]
                acc[idx] = acc.get(idx, 0.0) + coef
        self._constr_names.add(name)
        self.constraints.append(Constraint(name, tuple(sorted(acc.items())), sense, float(rhs)))
        return name

    def add_objective(self, terms: Iterable[tuple[str, float]]) -> None:
        """Accumulate minimization objective terms."""
        for var, coef in terms:
            if var not in self._var_index:
                raise IllFormedProgram(f"objective references unknown variable {var!r}")
            idx = self._var_index[var]
            self._objective[idx] = self._objective.get(idx, 0.0) + coef

    # -- introspection ------------------------------------------------

    @property
    def binary_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.binary]

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    def _arrays(self):
        """Dense objective, sparse A_ub/b_ub (as <=) and A_eq/b_eq, bound arrays."""
        n = len(self.variables)
        c = np.zeros(n)
        for idx, coef in self._objective.items():
            c[idx] = coef
        ub_rows, eq_rows = [], []
        for ci, con in enumerate(self.constraints):
            (eq_rows if con.sense == "=" else ub_rows).append(ci)
        def build(rows, flip_ge):
            data, ri, cj, rhs = [], [], [], []
            for r, ci in enumerate(rows):
                con = self.constraints[ci]
                sgn = -1.0 if (flip_ge and con.sense == ">=") else 1.0
                for idx, coef in con.terms:
                    data.append(sgn * coef)
                    ri.append(r)
                    cj.append(idx)
                rhs.append(sgn * con.rhs)
            mat = sp.csr_matrix((data, (ri, cj)), shape=(len(rows), n))
            return mat, np.array(rhs, dtype=float)
        a_ub, b_ub = build(ub_rows, flip_ge=True)
        a_eq, b_eq = build(eq_rows, flip_ge=False)
        lbs = np.array([v.lb for v in self.variables])
        ubs = np.array([v.ub for v in self.variables])
        return c, a_ub, b_ub, ub_rows, a_eq, b_eq, eq_rows, lbs, ubs

    def constraint_residuals(self, values: Mapping[str, float]) -> dict[str, float]:
        """Violation (positive = infeasible) of each constraint at a point."""
        out = {}
        for con in self.constraints:
            lhs = sum(coef * values[self.variables[idx].name] for idx, coef in con.terms)
            if con.sense == "<=":
                out[con.name] = lhs - con.rhs
            elif con.sense == ">=":
                out[con.name] = con.rhs - lhs
            else:
                out[con.name] = abs(lhs - con.rhs)
        return out


# -- LP kernel ---------------------------------------------------------

def _solve_lp(c, a_ub, b_ub, a_eq, b_eq, lbs, ubs):
    """One LP relaxation via HiGHS. Returns (status, x, obj, result)."""
    bounds = np.column_stack([lbs, ubs])
    res = linprog(c, A_ub=a_ub if a_ub.shape[0] else None,
                  b_ub=b_ub if a_ub.shape[0] else None,
                  A_eq=a_eq if a_eq.shape[0] else None,
                  b_eq=b_eq if a_eq.shape[0] else None,
                  bounds=bounds, method="highs")
    if res.status == 0:
        return OPTIMAL, res.x, float(res.fun), res
    if res.status == 2:
        return INFEASIBLE, None, None, res
    if res.status == 3:
        return UNBOUNDED, None, None, res
    raise SolverError(f"LP kernel failure: {res.message}")


def _fractional(x, bin_idx, int_tol):
    """Indices of binaries whose LP value is not within int_tol of 0/1."""
    out = []
    for i in bin_idx:
        f = abs(x[i] - round(x[i]))
        if f > int_tol:
            out.append((i, f))
    return out


def solve(prog: MathProgram, opts: SolverOptions | None = None) -> Solution:
    """Minimize the program to proven optimality (within ``opts.mip_gap``).

    The bundled engine is a best-bound branch-and-bound over the binary
    variables, branching on the most fractional binary with lexicographic
    tie-breaks by declaration order; LP relaxations are delegated to HiGHS.
    Deterministic for identical inputs and options.
    """
    opts = opts or SolverOptions()
    if not prog.variables:
        raise IllFormedProgram("program has no variables")
    if opts.engine == "highs":
        return _solve_highs(prog, opts)
    c, a_ub, b_ub, ub_rows, a_eq, b_eq, eq_rows, lbs, ubs = prog._arrays()
    bin_idx = prog.binary_indices
    t0 = time.monotonic()

    status, x, obj, _ = _solve_lp(c, a_ub, b_ub, a_eq, b_eq, lbs, ubs)
    if status != OPTIMAL:
        return Solution(status=status)

    best_x, best_obj = None, INF

    def try_incumbent(x_node):
        """Round-and-fix heuristic: returns True if it improved the incumbent."""
        nonlocal best_x, best_obj
        improved = False
        seen = set()
        for rule in ("half", "support"):
            lo, hi = lbs.copy(), ubs.copy()
            for i in bin_idx:
                if rule == "half":
                    v = 1.0 if x_node[i] >= 0.5 else 0.0
                else:
                    v = 1.0 if x_node[i] > opts.int_tol else 0.0
                v = min(max(v, lo[i]), hi[i])
                lo[i] = hi[i] = v
            key = tuple(lo[bin_idx])
            if key in seen:
                continue
            seen.add(key)
            st, xf, of, _ = _solve_lp(c, a_ub, b_ub, a_eq, b_eq, lo, hi)
            if st == OPTIMAL and of < best_obj - 1e-12:
                best_x, best_obj = xf, of
                improved = True
        return improved

    # Root
    fracs = _fractional(x, bin_idx, opts.int_tol)
    if not fracs:
        best_x, best_obj = x, obj
        return _finish(prog, best_x, best_obj, 0.0)
    try_incumbent(x)

    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    seq = 0
    heapq.heappush(heap, (obj, seq, lbs.copy(), ubs.copy()))
    best_bound = obj
    while heap:
        bound, _, lo, hi = heapq.heappop(heap)
        best_bound = bound
        if bound >= best_obj - opts.mip_gap:
            break
        if time.monotonic() - t0 > opts.time_limit:
            if best_x is None:
                return Solution(status=GAP_LIMIT, gap=INF)
            return _finish(prog, best_x, best_obj, best_obj - best_bound, status=GAP_LIMIT)
        st, x, obj, _ = _solve_lp(c, a_ub, b_ub, a_eq, b_eq, lo, hi)
        if st != OPTIMAL or obj >= best_obj - opts.mip_gap:
            continue
        fracs = _fractional(x, bin_idx, opts.int_tol)
        if not fracs:
            if obj < best_obj:
                best_x, best_obj = x, obj
            continue
        try_incumbent(x)
        # most fractional; ties resolved by declaration order (lowest index)
        branch_i = max(fracs, key=lambda t: (min(t[1], 1.0 - t[1]), -t[0]))[0]
        for fix in (0.0, 1.0):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[branch_i] = hi2[branch_i] = fix
            seq += 1
            heapq.heappush(heap, (obj, seq, lo2, hi2))
    if best_x is None:
        return Solution(status=INFEASIBLE)
    gap = max(0.0, best_obj - best_bound) if heap else 0.0
    return _finish(prog, best_x, best_obj, gap)


def _finish(prog, x, obj, gap, status=OPTIMAL) -> Solution:
    values = {v.name: float(x[i]) for i, v in enumerate(prog.variables)}
    # snap binaries exactly
    for i in prog.binary_indices:
        values[prog.variables[i].name] = float(round(x[i]))
    return Solution(status=status, values=values, objective=float(obj), gap=float(gap))


def _solve_highs(prog: MathProgram, opts: SolverOptions) -> Solution:
    c, a_ub, b_ub, ub_rows, a_eq, b_eq, eq_rows, lbs, ubs = prog._arrays()
    constraints = []
    if a_ub.shape[0]:
        constraints.append(LinearConstraint(a_ub, -np.inf, b_ub))
    if a_eq.shape[0]:
        constraints.append(LinearConstraint(a_eq, b_eq, b_eq))
    integrality = np.zeros(len(prog.variables))
    for i in prog.binary_indices:
        integrality[i] = 1
    res = milp(c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lbs, ubs),
               options={"mip_rel_gap": 0.0, "time_limit": opts.time_limit})
    if res.status == 0:
        return _finish(prog, res.x, float(res.fun), float(res.mip_gap or 0.0))
    if res.status == 2:
        return Solution(status=INFEASIBLE)
    if res.status == 3:
        return Solution(status=UNBOUNDED)
    if res.status == 1 and res.x is not None:
        return _finish(prog, res.x, float(res.fun), float(res.mip_gap or INF), status=GAP_LIMIT)
    return Solution(status=GAP_LIMIT, gap=INF)


def relax_and_duals(prog: MathProgram, fixed_binaries: Mapping[str, float] | None = None,
                    opts: SolverOptions | None = None) -> Solution:
    """Solve the continuous relaxation with binaries pinned; report duals.

    ``fixed_binaries`` must assign a {0,1} value to every binary variable
    (may be empty for purely continuous programs).  Duals follow the
    convention that the dual of a constraint is the increase of the optimal
    objective per unit increase of its right-hand side.
    """
    fixed_binaries = fixed_binaries or {}
    bin_names = {prog.variables[i].name for i in prog.binary_indices}
    missing = bin_names - set(fixed_binaries)
    if missing:
        raise IllFormedProgram(f"binaries left unfixed: {sorted(missing)[:4]}...")
    c, a_ub, b_ub, ub_rows, a_eq, b_eq, eq_rows, lbs, ubs = prog._arrays()
    lo, hi = lbs.copy(), ubs.copy()
    for name, val in fixed_binaries.items():
        if name not in bin_names:
            raise IllFormedProgram(f"{name!r} is not a binary variable")
        if abs(val - round(val)) > 1e-9 or round(val) not in (0, 1):
            raise IllFormedProgram(f"binary {name!r} fixed to non-binary value {val}")
        i = prog._var_index[name]
        lo[i] = hi[i] = float(round(val))
    status, x, obj, res = _solve_lp(c, a_ub, b_ub, a_eq, b_eq, lo, hi)
    if status == INFEASIBLE:
        raise InfeasibleFixing("fixed binaries admit no feasible point")
    if status != OPTIMAL:
        return Solution(status=status)
    # scipy reports marginals with d(obj)/d(rhs) = marginal for eq and ub rows
    duals: dict[str, float] = {}
    if a_ub.shape[0]:
        for r, ci in enumerate(ub_rows):
            con = prog.constraints[ci]
            m = float(res.ineqlin.marginals[r])
            duals[con.name] = -m if con.sense == ">=" else m
    if a_eq.shape[0]:
        for r, ci in enumerate(eq_rows):
            duals[prog.constraints[ci].name] = float(res.eqlin.marginals[r])
    rc = {v.name: float(res.lower.marginals[i] + res.upper.marginals[i])
          for i, v in enumerate(prog.variables)}
    values = {v.name: float(x[i]) for i, v in enumerate(prog.variables)}
    return Solution(status=OPTIMAL, values=values, objective=float(obj),
                    duals=duals, reduced_costs=rc)


def write_lp(prog: MathProgram, path) -> None:
    """Export in the CPLEX LP text format for cross-checks with external solvers."""
    def nm(s: str) -> str:
        return s.replace("[", "_").replace("]", "_").replace(",", "_")
    lines = ["Minimize", " obj:"]
    terms = [f" {coef:+.12g} {nm(prog.variables[i].name)}"
             for i, coef in sorted(prog._objective.items())]
    lines += terms or [" 0 " + nm(prog.variables[0].name)]
    lines.append("Subject To")
    for con in prog.constraints:
        body = " ".join(f"{coef:+.12g} {nm(prog.variables[i].name)}" for i, coef in con.terms)
        op = {"<=": "<=", ">=": ">=", "=": "="}[con.sense]
        lines.append(f" {nm(con.name)}: {body or '0 ' + nm(prog.variables[0].name)} {op} {con.rhs:.12g}")
    lines.append("Bounds")
    for v in prog.variables:
        lo = "-inf" if v.lb == -INF else f"{v.lb:.12g}"
        hi = "+inf" if v.ub == INF else f"{v.ub:.12g}"
        lines.append(f" {lo} <= {nm(v.name)} <= {hi}")
    bins = [nm(prog.variables[i].name) for i in prog.binary_indices]
    if bins:
        lines.append("Binaries")
        lines.append(" " + " ".join(bins))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
