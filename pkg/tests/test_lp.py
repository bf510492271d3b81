import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from _instances import random_lp
from scenplan.milp import LpProblem, solve_lp


def highs(p: LpProblem):
    A = p.A.toarray()
    le = p.senses == "<="
    ge = p.senses == ">="
    eq = p.senses == "=="
    A_ub = np.vstack([A[le], -A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([p.rhs[le], -p.rhs[ge]]) if A_ub is not None else None
    res = linprog(p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq] if eq.any() else None,
                  b_eq=p.rhs[eq] if eq.any() else None,
                  bounds=list(zip([None if not np.isfinite(v) else v for v in p.lo],
                                  [None if not np.isfinite(v) else v for v in p.hi])),
                  method="highs", options={"presolve": False})
    return {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "other"), res


def test_small_examples():
    r = solve_lp(LpProblem.from_rows([1.0], [([1.0], ">=", 1.0)]))
    assert r.status == "optimal" and r.objective == pytest.approx(1) and r.x[0] == pytest.approx(1)
    r = solve_lp(LpProblem.from_rows([1.0, 1.0], [([1.0, 1.0], ">=", 2.0)], bounds=[(0, None), (0, None)]))
    assert r.status == "optimal" and r.objective == pytest.approx(2)
    r = solve_lp(LpProblem.from_rows([-1.0], [], bounds=[(0, np.inf)]))
    assert r.status == "unbounded"
    r = solve_lp(LpProblem.from_rows([1.0], [([1.0], ">=", 2.0), ([1.0], "<=", 1.0)]))
    assert r.status == "infeasible"


def test_equality_and_free_variables():
    p = LpProblem.from_rows([1.0, 2.0, 0.0],
                            [([1, 1, 1], "==", 3.0), ([1, -1, 0], "<=", 1.0)],
                            bounds=[(-np.inf, np.inf), (0, 5), (-1, 1)])
    r = solve_lp(p)
    status, ref = highs(p)
    assert r.status == status == "optimal"
    assert r.objective == pytest.approx(ref.fun, abs=1e-7)
    assert p.max_violation(r.x) <= 1e-7


def test_shape_checks():
    with pytest.raises(ValueError):
        LpProblem([1.0, 1.0], sp.csr_matrix(np.ones((1, 3))), ["<="], [1.0], 0, 1)
    with pytest.raises(ValueError):
        LpProblem([1.0], sp.csr_matrix(np.ones((1, 1))), ["<"], [1.0], 0, 1)


def test_degenerate_problem_terminates():
    # many redundant constraints through the same vertex
    rows = [([np.cos(a), np.sin(a)], "<=", 0.0) for a in np.linspace(0.1, 3.0, 30)]
    rows += [([1, 1], ">=", 0.0)]
    p = LpProblem.from_rows([1.0, 1.0], rows, bounds=[(-1, 1), (-1, 1)])
    r = solve_lp(p)
    status, ref = highs(p)
    assert r.status == status
    if status == "optimal":
        assert r.objective == pytest.approx(ref.fun, abs=1e-7)


@given(st.integers(0, 2**31))
def test_matches_highs(seed):
    p = random_lp(np.random.default_rng(seed))
    r = solve_lp(p)
    status, ref = highs(p)
    assert r.status == status
    if status == "optimal":
        assert r.objective == pytest.approx(ref.fun, abs=1e-6, rel=1e-9)
        assert p.max_violation(r.x) <= 1e-6


@given(st.integers(0, 2**31))
def test_strong_duality(seed):
    p = random_lp(np.random.default_rng(seed), infinite_bounds=False)
    r = solve_lp(p)
    if r.status == "optimal":
        assert r.dual_objective == pytest.approx(r.objective, abs=1e-7, rel=1e-9)


def test_deterministic():
    p = random_lp(np.random.default_rng(11), n=6, m=8)
    a, b = solve_lp(p), solve_lp(p)
    assert a.status == b.status and np.array_equal(a.x, b.x) and a.iterations == b.iterations
