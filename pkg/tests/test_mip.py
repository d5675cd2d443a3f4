"""Solver layer: bundled branch-and-bound, HiGHS engine, duals, export."""

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from gridflex import mip
from gridflex.mip import (GAP_LIMIT, INFEASIBLE, OPTIMAL, UNBOUNDED,
                          IllFormedProgram, InfeasibleFixing, MathProgram,
                          SolverOptions, relax_and_duals, solve, write_lp)

ENGINES = ("bnb", "highs")


def single_var_program():
    p = MathProgram()
    p.add_var("x", 0.0, 10.0)
    p.add_constr("lo", [("x", 1.0)], ">=", 3.0)
    p.add_objective([("x", 1.0)])
    return p


@pytest.mark.parametrize("engine", ENGINES)
def test_single_variable_lp(engine):
    sol = solve(single_var_program(), SolverOptions(engine=engine))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(3.0, abs=1e-9)
    assert sol.value("x") == pytest.approx(3.0, abs=1e-9)


@pytest.mark.parametrize("engine", ENGINES)
def test_knapsack_binaries(engine):
    p = MathProgram()
    p.add_var("a", binary=True)
    p.add_var("b", binary=True)
    p.add_constr("cap", [("a", 1.0), ("b", 1.0)], "<=", 1.0)
    p.add_objective([("a", -3.0), ("b", -2.0)])
    sol = solve(p, SolverOptions(engine=engine))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(-3.0, abs=1e-9)
    assert sol.values == {"a": 1.0, "b": 0.0}


def merit_order_program():
    p = MathProgram()
    p.add_var("a", 0.0, 50.0)
    p.add_var("b", 0.0, 50.0)
    p.add_constr("bal", [("a", 1.0), ("b", 1.0)], "=", 60.0)
    p.add_objective([("a", 10.0), ("b", 20.0)])
    return p


def test_merit_order_lp_and_dual():
    sol = solve(merit_order_program())
    assert sol.values["a"] == pytest.approx(50.0, abs=1e-9)
    assert sol.values["b"] == pytest.approx(10.0, abs=1e-9)
    assert sol.objective == pytest.approx(700.0, abs=1e-9)
    duals = relax_and_duals(merit_order_program())
    assert duals.duals["bal"] == pytest.approx(20.0, abs=1e-9)


def test_relax_without_binaries_matches_solve():
    p = merit_order_program()
    assert relax_and_duals(p).objective == pytest.approx(solve(p).objective, abs=1e-9)


def test_relax_duals_uc_fixed_on():
    # committed unit with a minimum output; balance dual = marginal unit bid
    p = MathProgram()
    p.add_var("q1", 0.0, 40.0)
    p.add_var("q2", 0.0, 40.0)
    p.add_var("u", binary=True)
    p.add_constr("min1", [("q1", 1.0), ("u", -10.0)], ">=", 0.0)
    p.add_constr("cap1", [("q1", 1.0), ("u", -40.0)], "<=", 0.0)
    p.add_constr("bal", [("q1", 1.0), ("q2", 1.0)], "=", 30.0)
    p.add_objective([("q1", 5.0), ("q2", 12.0)])
    sol = relax_and_duals(p, {"u": 1.0})
    assert sol.values["q1"] == pytest.approx(30.0, abs=1e-9)
    assert sol.duals["bal"] == pytest.approx(5.0, abs=1e-9)


def test_infeasible_fixing():
    p = MathProgram()
    p.add_var("x", 0.0, 1.0)
    p.add_var("u", binary=True)
    p.add_constr("force", [("x", 1.0), ("u", 1.0)], ">=", 1.5)
    p.add_objective([("x", 1.0)])
    with pytest.raises(InfeasibleFixing):
        relax_and_duals(p, {"u": 0.0})


@pytest.mark.parametrize("engine", ENGINES)
def test_infeasible_and_unbounded(engine):
    p = MathProgram()
    p.add_var("x", 0.0, 1.0)
    p.add_constr("c", [("x", 1.0)], ">=", 2.0)
    p.add_objective([("x", 1.0)])
    assert solve(p, SolverOptions(engine=engine)).status == INFEASIBLE
    q = MathProgram()
    q.add_var("y", -mip.INF, mip.INF)
    q.add_objective([("y", 1.0)])
    assert solve(q, SolverOptions(engine=engine)).status == UNBOUNDED


def test_ill_formed_programs():
    p = MathProgram()
    p.add_var("x")
    with pytest.raises(IllFormedProgram):
        p.add_var("x")
    with pytest.raises(IllFormedProgram):
        p.add_constr("c", [("nope", 1.0)], "<=", 0.0)
    with pytest.raises(IllFormedProgram):
        p.add_var("bad", lb=2.0, ub=1.0)
    with pytest.raises(IllFormedProgram):
        relax_and_duals(p, {"x": 1.0})  # x is not binary


def _random_program(rng, n_cont, n_bin, n_rows):
    """Random bounded MILP that keeps x = 0 feasible for the <= rows."""
    p = MathProgram()
    names = []
    for i in range(n_cont):
        names.append(p.add_var(f"x{i}", 0.0, float(rng.uniform(1.0, 4.0))))
    for i in range(n_bin):
        names.append(p.add_var(f"b{i}", binary=True))
    for r in range(n_rows):
        terms = [(nm, float(rng.uniform(-2.0, 2.0))) for nm in names
                 if rng.random() < 0.7]
        p.add_constr(f"r{r}", terms, "<=", float(rng.uniform(0.5, 4.0)))
    p.add_objective([(nm, float(rng.uniform(-5.0, 5.0))) for nm in names])
    return p


def _enumerate_optimum(prog):
    """Oracle: exhaustive enumeration over binary assignments + LP solve."""
    c, a_ub, b_ub, _, a_eq, b_eq, _, lbs, ubs = prog._arrays()
    bins = prog.binary_indices
    best = math.inf
    for assignment in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = lbs.copy(), ubs.copy()
        for idx, val in zip(bins, assignment):
            lo[idx] = hi[idx] = val
        res = linprog(c, A_ub=a_ub if a_ub.shape[0] else None,
                      b_ub=b_ub if a_ub.shape[0] else None,
                      A_eq=a_eq if a_eq.shape[0] else None,
                      b_eq=b_eq if a_eq.shape[0] else None,
                      bounds=np.column_stack([lo, hi]), method="highs")
        if res.status == 0 and res.fun < best:
            best = res.fun
    return best


@pytest.mark.parametrize("engine", ENGINES)
def test_reference_solver_matches_enumeration(engine):
    rng = np.random.default_rng(7)
    for trial in range(12):
        n_bin = int(rng.integers(1, 9))
        prog = _random_program(rng, n_cont=int(rng.integers(1, 4)),
                               n_bin=n_bin, n_rows=int(rng.integers(2, 6)))
        expected = _enumerate_optimum(prog)
        sol = solve(prog, SolverOptions(engine=engine))
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(expected, abs=1e-6), f"trial {trial}"


def test_strong_duality_on_random_lps():
    rng = np.random.default_rng(3)
    for _ in range(10):
        prog = _random_program(rng, n_cont=4, n_bin=0, n_rows=5)
        sol = relax_and_duals(prog)
        if sol.status != OPTIMAL:
            continue
        # dual objective: rhs * duals plus bound contributions via reduced costs
        dual_obj = sum(sol.duals[c.name] * c.rhs for c in prog.constraints)
        for v in prog.variables:
            rc = sol.reduced_costs[v.name]
            at = v.lb if rc > 0 else v.ub
            if math.isfinite(at):
                dual_obj += rc * at
        assert dual_obj <= sol.objective + 1e-6
        assert dual_obj == pytest.approx(sol.objective, abs=1e-6)


@pytest.mark.parametrize("engine", ENGINES)
def test_determinism(engine):
    rng = np.random.default_rng(11)
    prog = _random_program(rng, 3, 6, 4)
    a = solve(prog, SolverOptions(engine=engine))
    b = solve(prog, SolverOptions(engine=engine))
    assert a.status == b.status
    assert a.objective == b.objective
    for name in a.values:
        assert abs(a.values[name] - b.values[name]) <= 1e-9


def test_time_limit_returns_gap_status():
    rng = np.random.default_rng(5)
    prog = _random_program(rng, 4, 12, 6)
    sol = solve(prog, SolverOptions(engine="bnb", time_limit=0.0))
    assert sol.status in (GAP_LIMIT, OPTIMAL)
    if sol.status == GAP_LIMIT and sol.values:
        assert sol.gap >= 0.0


def test_lp_export_roundtrip(tmp_path):
    prog = merit_order_program()
    path = tmp_path / "prog.lp"
    write_lp(prog, path)
    text = path.read_text()
    assert "Minimize" in text and "Subject To" in text
    assert "+1 a" in text and "60" in text


def test_binary_snap_and_feasibility():
    p = MathProgram()
    p.add_var("q", 0.0, 5.0)
    p.add_var("u", binary=True)
    p.add_constr("gate", [("q", 1.0), ("u", -5.0)], "<=", 0.0)
    p.add_constr("need", [("q", 1.0)], ">=", 2.0)
    p.add_objective([("q", 1.0), ("u", 0.5)])
    sol = solve(p)
    assert sol.values["u"] == 1.0
    residuals = p.constraint_residuals(sol.values)
    assert max(residuals.values()) <= 1e-6
