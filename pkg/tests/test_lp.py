import itertools

import numpy as np
import pytest

from objfit import LPProblem, solve_lp, OPTIMAL, INFEASIBLE, UNBOUNDED


def vertex_minimum(d, A, b, tol=1e-9):
    """Independent oracle: enumerate all basic points of A·x <= b (n <= 3)
    and return the minimal objective over the feasible ones."""
    d = np.asarray(d, float)
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    m, n = A.shape
    best = None
    for rows in itertools.combinations(range(m), n):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ x <= b + 1e-8):
            val = float(d @ x)
            if best is None or val < best:
                best = val
    return best


def test_nonneg_origin():
    # min x1 + x2 s.t. x >= 0
    p = LPProblem([1.0, 1.0], -np.eye(2), np.zeros(2))
    res = solve_lp(p)
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [0.0, 0.0], atol=1e-9)
    assert res.objective == pytest.approx(0.0, abs=1e-9)


def test_single_variable_upper_bound():
    # min -x1 s.t. x1 <= 3, x1 >= 0
    p = LPProblem([-1.0], [[1.0], [-1.0]], [3.0, 0.0])
    res = solve_lp(p)
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(3.0, abs=1e-9)
    # d + A^T lam = 0  =>  -1 + lam_0 - lam_1 = 0
    assert res.lam[0] == pytest.approx(1.0, abs=1e-8)
    assert res.lam[1] == pytest.approx(0.0, abs=1e-8)
    assert 0 in res.active_set


def test_unbounded_detected():
    p = LPProblem([-1.0], [[-1.0]], [0.0])
    res = solve_lp(p)
    assert res.status == UNBOUNDED
    assert res.x is None


def test_infeasible_detected():
    # x1 <= -1 and x1 >= 1
    p = LPProblem([1.0], [[1.0], [-1.0]], [-1.0, -1.0])
    res = solve_lp(p)
    assert res.status == INFEASIBLE


def test_bounds_and_equalities():
    # min x1 + 2 x2 s.t. x1 + x2 = 1, 0 <= x <= 0.8
    p = LPProblem(
        [1.0, 2.0],
        lb=[0.0, 0.0],
        ub=[0.8, 0.8],
        A_eq=[[1.0, 1.0]],
        b_eq=[1.0],
    )
    res = solve_lp(p)
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [0.8, 0.2], atol=1e-9)


def test_free_variable_split():
    # min x s.t. x >= -5  (free variable, negative optimum)
    p = LPProblem([1.0], [[-1.0]], [5.0])
    res = solve_lp(p)
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(-5.0, abs=1e-9)


def test_duals_satisfy_stationarity():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n, m = 3, 8
        A = rng.uniform(-1, 1, (m, n))
        x0 = rng.uniform(-1, 1, n)
        b = A @ x0 + rng.uniform(0.1, 1.0, m)
        d = rng.uniform(-1, 1, n)
        res = solve_lp(LPProblem(d, A, b))
        if res.status != OPTIMAL:
            continue
        assert np.all(res.lam >= -1e-8)
        resid = d + A.T @ res.lam
        assert np.max(np.abs(resid)) < 1e-7
        # complementary slackness
        slack = b - A @ res.x
        assert np.max(np.abs(res.lam * slack)) < 1e-6


def test_matches_vertex_enumeration_oracle():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(40):
        n = 3
        m = int(rng.integers(4, 9))
        A = rng.uniform(-1, 1, (m, n))
        x0 = rng.uniform(-1, 1, n)
        b = A @ x0 + rng.uniform(0.2, 1.5, m)
        d = rng.uniform(-1, 1, n)
        res = solve_lp(LPProblem(d, A, b))
        best = vertex_minimum(d, A, b)
        if res.status == OPTIMAL:
            assert best is not None
            assert res.objective == pytest.approx(best, abs=1e-6)
            checked += 1
        else:
            # unbounded: no vertex should beat an arbitrarily low value,
            # i.e. the recession direction exists; just sanity check status
            assert res.status == UNBOUNDED
    assert checked >= 20


def test_deterministic_repeat():
    rng = np.random.default_rng(5)
    A = rng.uniform(-1, 1, (6, 3))
    b = A @ rng.uniform(-1, 1, 3) + rng.uniform(0.2, 1.0, 6)
    d = rng.uniform(-1, 1, 3)
    p = LPProblem(d, A, b)
    r1 = solve_lp(p)
    r2 = solve_lp(p)
    assert r1.objective == r2.objective
    assert np.array_equal(r1.x, r2.x)
    assert np.array_equal(r1.lam, r2.lam)
