import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from cogharq.lpcore import (INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, build_occupation_lp,
                            recover_policy, solve_lp)
from cogharq.markov import JointPolicy, evaluate_policy


def test_trivial():
    sol = solve_lp(LpProblem([1.0], A_ineq=[[1.0]], b_ineq=[1.0]))
    assert sol.ok and sol.objective == 1.0 and sol.x[0] == 1.0


def test_degenerate_duplicates():
    sol = solve_lp(LpProblem([1.0], A_ineq=[[1.0], [1.0], [1.0]], b_ineq=[1.0, 0.5, 0.5]))
    assert sol.ok and sol.objective == pytest.approx(0.5)


def test_statuses():
    assert solve_lp(LpProblem([1.0, 0.0], A_ineq=[[0.0, 1.0]], b_ineq=[1.0])).status == UNBOUNDED
    assert solve_lp(LpProblem([1.0], A_eq=[[1.0]], b_eq=[-1.0])).status == INFEASIBLE
    assert solve_lp(LpProblem([1.0], A_ineq=[[1.0]], b_ineq=[-0.5])).status == INFEASIBLE
    assert solve_lp(LpProblem([-1.0, -2.0])).status == OPTIMAL
    with pytest.raises(ValueError):
        LpProblem([1.0, np.nan])
    with pytest.raises(ValueError):
        LpProblem([1.0, 1.0], A_ineq=[[1.0]], b_ineq=[1.0])


def test_redundant_equalities():
    prob = LpProblem([1.0, 2.0, 0.0], A_eq=[[1, 1, 1], [2, 2, 2]], b_eq=[1.0, 2.0])
    sol = solve_lp(prob)
    assert sol.ok and sol.objective == pytest.approx(2.0)
    assert prob.residual(sol.x) <= 1e-9


def vertex_enumeration(c, A, b):
    """Best objective over all basic feasible points of {A x <= b, x >= 0}."""
    n = len(c)
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = -np.inf
    for rows in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = max(best, c @ x)
    return best


@pytest.mark.parametrize("seed", range(50))
def test_random_lps_vs_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = 10, 3
    c = rng.normal(size=n)
    A = rng.uniform(0.1, 1.0, (m, n))
    A[0] = np.abs(A[0]) + 0.05  # bounded: one all-positive row
    b = rng.uniform(0.5, 2.0, m)
    sol = solve_lp(LpProblem(c, A_ineq=A, b_ineq=b))
    assert sol.ok
    assert LpProblem(c, A_ineq=A, b_ineq=b).residual(sol.x) <= 1e-9
    assert sol.objective == pytest.approx(vertex_enumeration(c, A, b), abs=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_random_mixed_lps_vs_highs(seed):
    rng = np.random.default_rng(100 + seed)
    n = 12
    c = rng.normal(size=n)
    A_eq = rng.normal(size=(3, n))
    x0 = rng.uniform(0, 1, n)
    b_eq = A_eq @ x0
    A_in = np.vstack([np.ones(n), rng.normal(size=(2, n))])
    b_in = A_in @ x0 + rng.uniform(0, 0.5, 3)
    sol = solve_lp(LpProblem(c, A_eq, b_eq, A_in, b_in))
    ref = linprog(-c, A_ub=A_in, b_ub=b_in, A_eq=A_eq, b_eq=b_eq, method="highs")
    assert sol.ok and ref.status == 0
    assert sol.objective == pytest.approx(-ref.fun, abs=1e-8)


def test_determinism(model2):
    prob = build_occupation_lp(model2.kernel, model2.reward, model2.cost, model2.eps_omega)
    a, b = solve_lp(prob), solve_lp(prob)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.iterations == b.iterations


def test_occupation_lp_zero_reward(model2):
    S, A = model2.reward.shape
    prob = build_occupation_lp(model2.kernel, np.zeros((S, A)), model2.cost, 0.1)
    sol = solve_lp(prob)
    assert sol.ok and sol.objective == 0.0
    assert prob.residual(sol.x) <= 1e-9
    assert sol.x.sum() == pytest.approx(1.0)


def test_occupation_lp_zero_cost_is_unconstrained(model2):
    S, A = model2.reward.shape
    free = solve_lp(build_occupation_lp(model2.kernel, model2.reward, np.zeros((S, A)), 0.0))
    loose = solve_lp(build_occupation_lp(model2.kernel, model2.reward, model2.cost, 10.0))
    assert free.ok and free.objective == pytest.approx(loose.objective, abs=1e-9)


def test_occupation_lp_shape_check(model2):
    with pytest.raises(ValueError):
        build_occupation_lp(model2.kernel, np.zeros((2, 2)), model2.cost, 0.1)


@pytest.mark.parametrize("budget_scale", [0.0, 0.3, 1.0, 3.0])
def test_round_trip_evaluation(model2, budget_scale):
    budget = budget_scale * model2.eps_omega
    prob = build_occupation_lp(model2.kernel, model2.reward, model2.cost, budget)
    sol = solve_lp(prob)
    S, A = model2.reward.shape
    pol = recover_policy(sol.x, S, A)
    r, c, _ = evaluate_policy(model2.kernel, pol, model2.reward, model2.cost)
    assert r == pytest.approx(sol.objective, abs=1e-6)
    assert c == pytest.approx(float(model2.cost.ravel() @ sol.x), abs=1e-6)
    assert c <= budget + 1e-9


def test_recover_policy():
    x = np.array([[0.0, 0.5], [0.2, 0.0], [0.0, 0.0]]) / 0.7
    pol = recover_policy(x.ravel(), 3, 2)
    np.testing.assert_array_equal(pol.mu, [[0, 1], [1, 0], [1, 0]])
    mixed = recover_policy(np.array([0.1, 0.3, 0.6, 0.0]), 2, 2)
    np.testing.assert_allclose(mixed.mu, [[0.25, 0.75], [1, 0]])
    assert isinstance(pol, JointPolicy)
    with pytest.raises(ValueError):
        recover_policy(np.array([-0.1, 1.1]), 1, 2)
