"""Splitting solver: optimality vs oracle, certificates, update semantics."""

import numpy as np
import pytest

from oracle import solve_qp
from qpgen.solver import (STATUS_CODES, Settings, SolverError, ldl_solve,
                          setup, solve, update_matrix_values, update_vectors)
from qpgen.sparse import build_csc


def upper_csc(P_full, n):
    entries = [(i, j, P_full[i, j]) for j in range(n) for i in range(j + 1)
               if P_full[i, j] != 0.0 or i == j]
    return build_csc(entries, n, n)


def dense_csc(M):
    m, n = M.shape
    entries = [(i, j, M[i, j]) for j in range(n) for i in range(m)
               if M[i, j] != 0.0]
    return build_csc(entries, m, n)


def random_qp(rng, n, m):
    """A random convex QP, feasible by construction around a known point."""
    M = rng.standard_normal((n, n))
    P_full = M @ M.T + 0.5 * np.eye(n)
    q = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    mid = A @ rng.standard_normal(n)
    half = rng.uniform(0.2, 1.5, m)
    l = mid - half
    u = mid + half
    for r in range(m):
        kind = rng.integers(0, 4)
        if kind == 0:
            u[r] = np.inf
        elif kind == 1:
            l[r] = -np.inf
        elif kind == 2:
            l[r] = u[r] = mid[r]     # equality row, feasible at the anchor
    return P_full, q, A, l, u


def feas_violation(A, l, u, x):
    ax = A @ x
    return float(np.max(np.maximum(np.maximum(l - ax, ax - u), 0.0)))


def test_matches_oracle_on_random_boxed_qps():
    rng = np.random.default_rng(42)
    settings = Settings()
    for trial in range(30):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 8))
        P_full, q, A, l, u = random_qp(rng, n, m)
        ws = setup(upper_csc(P_full, n), q, dense_csc(A), l, u, settings)
        res = solve(ws)
        assert res.status == "solved", f"trial {trial}"
        ref = solve_qp(P_full, q, A, l, u)
        scale = max(1.0, abs(ref.obj))
        # default tolerances bound the residuals, not the objective gap
        assert abs(res.obj_val - ref.obj) / scale < 2e-3, f"trial {trial}"
        assert feas_violation(A, l, u, res.x_tilde) < 2e-4, f"trial {trial}"


def test_tight_tolerances_reach_oracle_accuracy():
    rng = np.random.default_rng(7)
    settings = Settings(eps_abs=1e-8, eps_rel=1e-8, max_iter=200_000)
    for trial in range(10):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 8))
        P_full, q, A, l, u = random_qp(rng, n, m)
        ws = setup(upper_csc(P_full, n), q, dense_csc(A), l, u, settings)
        res = solve(ws)
        assert res.status == "solved"
        ref = solve_qp(P_full, q, A, l, u)
        scale = max(1.0, abs(ref.obj))
        assert abs(res.obj_val - ref.obj) / scale < 1e-5
        assert feas_violation(A, l, u, res.x_tilde) < 1e-6


def test_contradictory_rows_produce_primal_certificate():
    # x <= -1 and x >= 1 cannot both hold
    P = build_csc([(0, 0, 1.0)], 1, 1)
    A = build_csc([(0, 0, 1.0), (1, 0, 1.0)], 2, 1)
    l = np.array([-np.inf, 1.0])
    u = np.array([-1.0, np.inf])
    ws = setup(P, np.zeros(1), A, l, u, Settings())
    res = solve(ws)
    assert res.status == "primal_infeasible_cert"
    assert res.status_code == 2
    y = res.certificate
    assert y is not None and y.shape == (2,)
    top = np.abs(y).max()
    assert top > 0.0
    # Farkas direction: A^T y ~ 0, multipliers push on the finite bounds
    # (row 0 from above, row 1 from below), support gap negative
    assert abs(y[0] + y[1]) <= 1e-6 * top
    assert y[0] > 1e-8 * top and y[1] < -1e-8 * top
    assert u[0] * y[0] + l[1] * y[1] < 0.0


def test_unbounded_direction_produces_dual_certificate():
    # minimize x with only an upper bound: unbounded below
    P = build_csc([(0, 0, 0.0)], 1, 1)
    A = build_csc([(0, 0, 1.0)], 1, 1)
    ws = setup(P, np.array([1.0]), A, np.array([-np.inf]), np.array([0.0]),
               Settings())
    res = solve(ws)
    assert res.status == "dual_infeasible_cert"
    assert res.status_code == 3
    d = res.certificate
    assert d is not None and d.shape == (1,)
    # descent direction: objective decreases, constraints stay satisfiable
    assert d[0] < 0.0


def test_iteration_cap_is_reported():
    rng = np.random.default_rng(0)
    P_full, q, A, l, u = random_qp(rng, 4, 5)
    ws = setup(upper_csc(P_full, 4), q, dense_csc(A), l, u,
               Settings(max_iter=3, check_interval=25))
    res = solve(ws)
    assert res.status == "max_iter_reached"
    assert res.status_code == 1
    assert res.iterations == 3


def test_warm_start_resumes_from_previous_iterates():
    rng = np.random.default_rng(1)
    P_full, q, A, l, u = random_qp(rng, 5, 6)
    settings = Settings()
    ws = setup(upper_csc(P_full, 5), q, dense_csc(A), l, u, settings)
    first = solve(ws)
    assert first.status == "solved"
    again = solve(ws)
    assert again.status == "solved"
    assert again.iterations <= settings.check_interval
    # nearby bounds: warm solve needs fewer iterations than a cold one
    update_vectors(ws, l=l - 1e-3, u=u + 1e-3)
    warm = solve(ws)
    ws.cold_start()
    cold = solve(ws)
    assert warm.status == cold.status == "solved"
    assert warm.iterations <= cold.iterations


def test_vector_updates_never_factor_matrix_updates_do():
    rng = np.random.default_rng(2)
    n, m = 4, 5
    M = rng.standard_normal((n, n))
    P_full = M @ M.T + 0.5 * np.eye(n)
    q = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    mid = A @ rng.standard_normal(n)
    l, u = mid - 1.0, mid + 1.0
    ws = setup(upper_csc(P_full, n), q, dense_csc(A), l, u, Settings())
    assert ws.factor_count == 1
    update_vectors(ws, q=q + 1.0, l=l - 0.5, u=u + 0.5)
    assert ws.factor_count == 1
    update_matrix_values(ws, P_values=ws.P.values * 2.0,
                         A_values=ws.A.values.copy())
    assert ws.factor_count == 2

    # the refactored workspace solves the same QP a fresh setup would
    ws.cold_start()
    update_vectors(ws, q=q, l=l, u=u)
    res_updated = solve(ws)
    # doubling the upper-triangle values doubles the full matrix
    ws_fresh = setup(upper_csc(P_full * 2.0, n), q, dense_csc(A), l, u,
                     Settings())
    res_fresh = solve(ws_fresh)
    assert res_updated.status == res_fresh.status == "solved"
    assert np.allclose(res_updated.x_tilde, res_fresh.x_tilde)
    assert res_updated.obj_val == pytest.approx(res_fresh.obj_val)


def test_kkt_solve_matches_dense():
    rng = np.random.default_rng(3)
    n, m = 4, 3
    P_full, q, A, l, u = random_qp(rng, n, m)
    s = Settings()
    ws = setup(upper_csc(P_full, n), q, dense_csc(A), l, u, s)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = P_full + s.sigma * np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    K[n:, n:] = -(1.0 / s.rho) * np.eye(m)
    b = rng.standard_normal(n + m)
    assert np.allclose(ldl_solve(ws, b), np.linalg.solve(K, b))


def test_settings_are_validated():
    with pytest.raises(SolverError):
        Settings(rho=0.0).validate()
    with pytest.raises(SolverError):
        Settings(sigma=-1.0).validate()
    with pytest.raises(SolverError):
        Settings(alpha=2.0).validate()
    with pytest.raises(SolverError):
        Settings(max_iter=0).validate()
    with pytest.raises(SolverError):
        Settings(check_interval=0).validate()
    Settings().validate()


def test_crossed_bounds_are_rejected():
    P = build_csc([(0, 0, 1.0)], 1, 1)
    A = build_csc([(0, 0, 1.0)], 1, 1)
    with pytest.raises(SolverError):
        setup(P, np.zeros(1), A, np.array([1.0]), np.array([-1.0]),
              Settings())
    ws = setup(P, np.zeros(1), A, np.array([-1.0]), np.array([1.0]),
               Settings())
    with pytest.raises(SolverError):
        update_vectors(ws, l=np.array([2.0]))


def test_status_codes_are_stable():
    assert STATUS_CODES == {"solved": 0, "max_iter_reached": 1,
                            "primal_infeasible_cert": 2,
                            "dual_infeasible_cert": 3}
