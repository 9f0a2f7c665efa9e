import numpy as np
import pytest

from gridcascade.solvers import (
    IlpProblem,
    LassoProblem,
    LpProblem,
    SingularSystemError,
    default_lambda,
    factor_pinned,
    solve_constrained_lasso,
    solve_ilp,
    solve_linear_system,
    solve_lp,
)

from oracles import (
    best_single_support,
    enumerate_lp_vertices,
    exhaustive_binary_ilp,
    gaussian_solve,
)


# ---------------------------------------------------------------------------
# LP
# ---------------------------------------------------------------------------

def test_lp_single_variable_upper_bound():
    res = solve_lp(LpProblem(c=np.array([-1.0]), lb=np.array([0.0]),
                             ub=np.array([3.0])))
    assert res.optimal
    assert res.x[0] == pytest.approx(3.0)
    assert res.objective == pytest.approx(-3.0)


def test_lp_contradictory_bounds_infeasible():
    res = solve_lp(LpProblem(c=np.array([1.0]), lb=np.array([2.0]),
                             ub=np.array([1.0])))
    assert res.status == "infeasible"


def test_lp_unbounded_flagged():
    res = solve_lp(LpProblem(c=np.array([-1.0]), lb=np.array([0.0]),
                             ub=np.array([np.inf])))
    assert res.status == "unbounded"


def _random_lp(rng, n, m):
    c = rng.normal(size=n)
    a = rng.normal(size=(m, n))
    # interior point guarantees feasibility
    x0 = rng.uniform(0.2, 0.8, size=n)
    b = a @ x0 + rng.uniform(0.1, 1.0, size=m)
    return LpProblem(c=c, a_ub=a, b_ub=b, lb=np.zeros(n), ub=np.ones(n))


def test_lp_matches_vertex_enumeration(rng):
    for trial in range(12):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, 9))
        p = _random_lp(rng, n, m)
        res = solve_lp(p)
        oracle = enumerate_lp_vertices(p.c, p.a_ub, p.b_ub, p.lb, p.ub)
        assert res.optimal, f"trial {trial} status {res.status}"
        assert oracle is not None
        assert res.objective == pytest.approx(oracle[0], abs=1e-6)


def test_lp_weak_duality_on_random_instances(rng):
    for _ in range(10):
        p = _random_lp(rng, 4, 6)
        res = solve_lp(p)
        assert res.optimal
        # dual bound from the row prices must not exceed the primal value
        duals = res.duals
        assert duals is not None
        ineq = duals[-len(p.b_ub):]
        bound = float(p.b_ub @ ineq)
        reduced = p.c - p.a_ub.T @ ineq
        bound += float(np.minimum(reduced, 0.0) @ p.ub)
        assert bound <= res.objective + 1e-6


def test_lp_equality_constraints():
    # min x0 + x1 with x0 + x1 = 1 inside the unit box
    res = solve_lp(LpProblem(
        c=np.array([1.0, 1.0]),
        a_eq=np.array([[1.0, 1.0]]),
        b_eq=np.array([1.0]),
        lb=np.zeros(2), ub=np.ones(2),
    ))
    assert res.optimal
    assert res.objective == pytest.approx(1.0)
    assert res.x.sum() == pytest.approx(1.0)


def test_lp_backends_agree(rng):
    pytest.importorskip("scipy")
    for _ in range(5):
        p = _random_lp(rng, 5, 7)
        a = solve_lp(p, backend="native")
        b = solve_lp(p, backend="highs")
        assert a.optimal and b.optimal
        assert a.objective == pytest.approx(b.objective, abs=1e-7)


# ---------------------------------------------------------------------------
# ILP
# ---------------------------------------------------------------------------

def test_ilp_tiny_knapsack():
    res = solve_ilp(IlpProblem(
        c=np.array([-1.0, -1.0]),
        a_ub=np.array([[1.0, 1.0]]),
        b_ub=np.array([1.0]),
    ))
    assert res.optimal
    assert res.objective == pytest.approx(-1.0)


def test_ilp_all_variables_fixed_by_bounds():
    fixed = np.array([1.0, 0.0, 1.0])
    res = solve_ilp(IlpProblem(c=np.array([2.0, 3.0, 5.0]),
                               lb=fixed, ub=fixed))
    assert res.optimal
    assert np.array_equal(res.x, fixed)
    assert res.objective == pytest.approx(7.0)


def test_ilp_infeasible_reported():
    res = solve_ilp(IlpProblem(
        c=np.array([1.0, 1.0]),
        a_ub=np.array([[1.0, 1.0], [-1.0, -1.0]]),
        b_ub=np.array([0.5, -1.5]),  # sum <= 0.5 and sum >= 1.5
    ))
    assert res.status == "infeasible"
    assert res.x is None


def _random_ilp(rng, n):
    c = np.round(rng.uniform(-5, 5, size=n))
    m = int(rng.integers(1, 4))
    a = rng.normal(size=(m, n))
    b = a @ rng.integers(0, 2, size=n).astype(float) + rng.uniform(0, 0.5, m)
    return IlpProblem(c=c, a_ub=a, b_ub=b)


def test_ilp_matches_exhaustive_enumeration(rng):
    for trial in range(30):
        n = int(rng.integers(2, 11))
        p = _random_ilp(rng, n)
        res = solve_ilp(p)
        oracle = exhaustive_binary_ilp(p.c, p.a_ub, p.b_ub)
        if oracle is None:
            assert res.status == "infeasible", f"trial {trial}"
        else:
            assert res.optimal, f"trial {trial} status {res.status}"
            assert res.objective == pytest.approx(oracle[0], abs=1e-7)


def test_ilp_deterministic():
    rng = np.random.default_rng(7)
    p = _random_ilp(rng, 9)
    first = solve_ilp(p)
    second = solve_ilp(p)
    assert first.status == second.status
    assert np.array_equal(first.x, second.x)
    assert first.n_nodes == second.n_nodes


def test_ilp_budget_exhaustion_keeps_seed():
    # fractional root, seed well short of the relaxation bound: one node
    # cannot certify, and the seeded incumbent must survive as the answer
    n = 8
    c = -np.ones(n)
    a = np.ones((1, n))
    b = np.array([6.5])
    x0 = np.zeros(n)
    x0[:2] = 1.0
    res = solve_ilp(IlpProblem(c=c, a_ub=a, b_ub=b), node_budget=1, x0=x0)
    assert res.status == "budget_exhausted"
    assert res.x is not None
    assert res.objective == pytest.approx(-2.0)


def test_ilp_rejects_infeasible_seed():
    res = solve_ilp(IlpProblem(
        c=np.array([-1.0, -1.0]),
        a_ub=np.array([[1.0, 1.0]]),
        b_ub=np.array([1.0]),
    ), x0=np.array([1.0, 1.0]))
    assert res.optimal
    assert res.objective == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# constrained LASSO
# ---------------------------------------------------------------------------

def test_lasso_zero_penalty_recovers_least_squares(rng):
    a = rng.normal(size=(6, 6)) + 6.0 * np.eye(6)
    truth = rng.normal(size=6)
    y = a @ truth
    res = solve_constrained_lasso(LassoProblem(a=a, y=y, lam=0.0))
    assert res.converged
    np.testing.assert_allclose(res.s, truth, atol=1e-6)


def test_lasso_huge_penalty_shrinks_to_zero(rng):
    a = rng.normal(size=(8, 5))
    y = rng.normal(size=8)
    res = solve_constrained_lasso(LassoProblem(a=a, y=y, lam=1e6))
    assert res.converged
    np.testing.assert_allclose(res.s, np.zeros(5), atol=1e-12)


def test_lasso_fixed_zero_columns_stay_zero(rng):
    a = rng.normal(size=(10, 6))
    y = rng.normal(size=10)
    fixed = np.array([True, False, True, False, False, False])
    res = solve_constrained_lasso(
        LassoProblem(a=a, y=y, lam=1e-4, fixed_zero=fixed)
    )
    assert np.all(res.s[fixed] == 0.0)


def test_lasso_objective_matches_definition(rng):
    a = rng.normal(size=(7, 4))
    y = rng.normal(size=7)
    lam = 0.1
    res = solve_constrained_lasso(LassoProblem(a=a, y=y, lam=lam))
    r = y - a @ res.s
    assert res.objective == pytest.approx(float(r @ r) + lam * np.abs(res.s).sum())


def test_lasso_single_support_recovery(rng):
    """One active column out of eight, moderate penalty: support is exact."""
    for _ in range(10):
        a = rng.normal(size=(12, 8))
        a /= np.linalg.norm(a, axis=0)
        true_col = int(rng.integers(0, 8))
        y = a[:, true_col] * float(rng.uniform(1.0, 3.0) * rng.choice([-1, 1]))
        res = solve_constrained_lasso(
            LassoProblem(a=a, y=y, lam=default_lambda(a, y))
        )
        support = np.nonzero(np.abs(res.s) > 0.05 * np.abs(res.s).max())[0]
        assert best_single_support(a, y) == true_col
        assert list(support) == [true_col]


def test_default_lambda_scaling(rng):
    a = rng.normal(size=(5, 3))
    y = rng.normal(size=5)
    assert default_lambda(a, y) == pytest.approx(
        1e-3 * np.max(np.abs(a.T @ y))
    )


# ---------------------------------------------------------------------------
# pinned linear systems
# ---------------------------------------------------------------------------

def test_linsys_identity():
    x = solve_linear_system(np.eye(3), np.array([1.0, 2.0, 3.0]), pinned=[])
    np.testing.assert_allclose(x, [1.0, 2.0, 3.0])


def test_linsys_two_bus_pinned():
    b = np.array([[2.0, -2.0], [-2.0, 2.0]])
    x = solve_linear_system(b, np.array([1.0, -1.0]), pinned=[0])
    assert x[0] == 0.0
    assert x[1] == pytest.approx(-0.5)


def test_linsys_matches_elimination_oracle(rng):
    # random Laplacian-like system, one pinned row, vs plain elimination
    for _ in range(5):
        n = 8
        w = rng.uniform(0.5, 2.0, size=(n, n))
        w = np.triu(w, 1)
        w = w + w.T
        lap = np.diag(w.sum(axis=1)) - w
        p = rng.normal(size=n)
        p -= p.mean()
        x = solve_linear_system(lap, p, pinned=[0])
        keep = list(range(1, n))
        expect = np.zeros(n)
        expect[keep] = gaussian_solve(lap[np.ix_(keep, keep)], p[keep])
        np.testing.assert_allclose(x, expect, atol=1e-9)


def test_linsys_inconsistent_rhs_raises():
    b = np.array([[2.0, -2.0], [-2.0, 2.0]])
    with pytest.raises(SingularSystemError):
        solve_linear_system(b, np.array([1.0, 1.0]), pinned=[0])


def test_factor_pinned_reuse(rng):
    b = np.array([[3.0, -1.0, -2.0], [-1.0, 1.0, 0.0], [-2.0, 0.0, 2.0]])
    solve = factor_pinned(b, pinned=[0])
    for _ in range(3):
        p = rng.normal(size=3)
        p -= p.mean()
        np.testing.assert_allclose(
            solve(p), solve_linear_system(b, p, pinned=[0]), atol=1e-10
        )
