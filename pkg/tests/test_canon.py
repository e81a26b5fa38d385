"""Canonicalization: patterns, parameter affinity, updates, retrieval."""

import numpy as np
import pytest

from qpgen import expr as ex
from qpgen.canon import (CanonError, canonicalize, eval_params,
                         partial_update, retrieve)
from qpgen.expr import Parameter, Shape, Variable
from qpgen.problem import MINIMIZE, ModelError, Problem
from qpgen.zoo import (build_mpc, build_mpc_non_dpp, build_nnls,
                       build_portfolio)


def minimize(objective, constraints, variables, parameters, name="t"):
    return Problem(MINIMIZE, objective, list(constraints), list(variables),
                   list(parameters), name=name)


# -- scalar least squares, worked out by hand --------------------------------
#
# minimize (G x - h)^2  s.t.  x >= 0, with scalar G, h.  The squared residual
# gets an auxiliary t with the coupling row G x - t = h, so the solution
# vector is [x, t] and
#   P = diag(0, 2)          A = [[G, -1], [1, 0]]
#   l = (h, 0)              u = (h, +inf)


def test_scalar_least_squares_structure():
    cq = canonicalize(build_nnls(1, 1).problem)
    assert (cq.n_user, cq.n, cq.m) == (1, 2, 2)

    # P: one diagonal entry, on the auxiliary column
    assert cq.P_pattern.col_ptr.tolist() == [0, 0, 1]
    assert cq.P_pattern.row_idx.tolist() == [1]

    # A column-major: col 0 rows {0, 1}, col 1 row {0}
    assert cq.A_pattern.col_ptr.tolist() == [0, 2, 3]
    assert cq.A_pattern.row_idx.tolist() == [0, 1, 0]

    # retrieval is a prefix selector onto the user variable
    assert cq.rmap.selector
    assert cq.rmap.indices.tolist() == [0]

    seg = cq.seg
    cp = eval_params(cq, {"G": 3.0, "h": 5.0})
    assert cp.P_values.tolist() == [2.0]
    assert cp.q.tolist() == [0.0, 0.0]
    assert cp.l.tolist() == [5.0, 0.0]
    assert cp.u[0] == 5.0 and np.isinf(cp.u[1])
    assert cp.A_values.tolist() == [3.0, 1.0, -1.0]

    # the G entry of A is parameter-mapped: exactly that theta row moves
    g_rows = cq.deps.rows_by_param["G"]
    assert seg[4] + 0 in g_rows
    assert cq.deps.touches["G"] == (False, False, False, False, True)
    assert cq.deps.touches["h"] == (False, False, True, True, False)

    cp2 = eval_params(cq, {"G": -2.0, "h": 5.0})
    moved = np.nonzero(cp2.theta != cp.theta)[0]
    assert set(moved.tolist()) <= set(g_rows.tolist())


def family_draw(fam, rng):
    """A full parameter assignment with every entry randomized."""
    values = {}
    for p in fam.problem.parameters:
        r, c = p.shape.rows, p.shape.cols
        if p.sparsity is not None:
            arr = np.zeros((r, c))
            for (i, j) in p.sparsity:
                arr[i, j] = rng.standard_normal()
        else:
            arr = rng.standard_normal((r, c))
        if p.sign == "nonneg":
            arr = np.abs(arr) + 0.1
        values[p.name] = arr
    return values


@pytest.mark.parametrize("fam", [build_nnls(4, 3), build_mpc(4),
                                 build_portfolio(5)],
                         ids=["nnls", "mpc", "portfolio"])
def test_theta_is_affine_in_parameters(fam):
    # theta(a v1 + (1-a) v2) == a theta(v1) + (1-a) theta(v2)
    cq = canonicalize(fam.problem)
    rng = np.random.default_rng(11)
    for _ in range(20):
        v1 = family_draw(fam, rng)
        v2 = family_draw(fam, rng)
        a = rng.uniform(-2.0, 2.0)
        mix = {k: a * v1[k] + (1.0 - a) * v2[k] for k in v1}
        t1 = eval_params(cq, v1).theta
        t2 = eval_params(cq, v2).theta
        tm = eval_params(cq, mix).theta
        # constant +-inf bound rows are outside the affine combination
        fin = np.isfinite(t1)
        assert np.array_equal(fin, np.isfinite(t2))
        assert np.array_equal(t1[~fin], tm[~fin])
        ref = a * t1[fin] + (1.0 - a) * t2[fin]
        denom = np.maximum(1.0, np.abs(ref))
        assert np.max(np.abs(tm[fin] - ref) / denom) < 1e-12


@pytest.mark.parametrize("fam", [build_mpc(4), build_portfolio(5)],
                         ids=["mpc", "portfolio"])
def test_partial_update_matches_full_and_freezes_the_rest(fam):
    cq = canonicalize(fam.problem)
    rng = np.random.default_rng(3)
    values = family_draw(fam, rng)
    cp = eval_params(cq, values)
    for _ in range(10):
        names = list(values)
        k = int(rng.integers(1, 3))
        subset = [names[i] for i in rng.choice(len(names), size=k,
                                               replace=False)]
        before = cp.theta.copy()
        changed = {n: family_draw(fam, rng)[n] for n in subset}
        partial_update(cq, cp, changed)
        values.update(changed)
        full = eval_params(cq, values)
        # recomputed rows agree bit for bit with a from-scratch evaluation
        assert np.array_equal(cp.theta, full.theta)
        # rows outside the dependency set were never written
        rows = cq.deps.rows_for(sorted(subset))
        untouched = np.setdiff1d(np.arange(cq.theta_size), rows)
        assert np.array_equal(cp.theta[untouched], before[untouched])


def test_dependency_rows_cover_all_motion():
    fam = build_mpc(4)
    cq = canonicalize(fam.problem)
    rng = np.random.default_rng(5)
    base = family_draw(fam, rng)
    t0 = eval_params(cq, base).theta
    for p in fam.problem.parameters:
        bumped = dict(base)
        bumped[p.name] = family_draw(fam, rng)[p.name]
        t1 = eval_params(cq, bumped).theta
        moved = set(np.nonzero(t1 != t0)[0].tolist())
        declared = set(cq.deps.rows_by_param[p.name].tolist())
        assert moved <= declared
        # touch flags match the segments the declared rows fall in
        seg = cq.seg
        for i, flag in enumerate(cq.deps.touches[p.name]):
            has = any(seg[i] <= r < seg[i + 1] for r in declared)
            assert flag == has


def test_objective_constant_lands_in_offset():
    x = Variable("x", Shape(2, 1))
    c = Parameter("c", Shape(1, 1))
    obj = ex.sum_squares(ex.var(x)) + ex.param(c) + ex.constant(3.0)
    cq = canonicalize(minimize(obj, [], [x], [c]))
    cp = eval_params(cq, {"c": 4.0})
    assert cp.obj_offset == pytest.approx(7.0)
    partial_update(cq, cp, {"c": -1.0})
    assert cp.obj_offset == pytest.approx(2.0)


def test_retrieve_reshapes_matrices_column_major():
    X = Variable("X", Shape(2, 2))
    B = Parameter("B", Shape(2, 2))
    cq = canonicalize(minimize(ex.sum_squares(ex.var(X) - ex.param(B)),
                               [], [X], [B]))
    x = np.arange(1.0, cq.n + 1.0)
    got = retrieve(cq, x)["X"]
    assert got.shape == (2, 2)
    assert np.array_equal(got, np.array([[1.0, 3.0], [2.0, 4.0]]))


def test_retrieve_splits_multiple_variables():
    x = Variable("x", Shape(2, 1))
    y = Variable("y", Shape(3, 1))
    b = Parameter("b", Shape(3, 1))
    obj = ex.sum_squares(ex.var(x)) + ex.sum_squares(ex.var(y) - ex.param(b))
    cq = canonicalize(minimize(obj, [], [x, y], [b]))
    sol = np.arange(float(cq.n))
    out = retrieve(cq, sol)
    assert out["x"].shape == (2, 1)
    assert out["y"].shape == (3, 1)
    assert out["x"].ravel().tolist() == [0.0, 1.0]
    assert out["y"].ravel().tolist() == [2.0, 3.0, 4.0]


def test_eval_requires_exactly_the_declared_parameters():
    cq = canonicalize(build_nnls(2, 2).problem)
    with pytest.raises(ModelError, match="missing"):
        eval_params(cq, {"G": np.zeros((2, 2))})
    with pytest.raises(ModelError, match="unknown"):
        eval_params(cq, {"G": np.zeros((2, 2)), "h": np.zeros((2, 1)),
                         "zzz": 1.0})
    cp = eval_params(cq, {"G": np.zeros((2, 2)), "h": np.zeros((2, 1))})
    with pytest.raises(ModelError, match="unknown"):
        partial_update(cq, cp, {"zzz": 1.0})
    with pytest.raises(ModelError, match="shape"):
        eval_params(cq, {"G": np.zeros((3, 2)), "h": np.zeros((2, 1))})


def test_retrieve_checks_solution_length():
    cq = canonicalize(build_nnls(2, 2).problem)
    with pytest.raises(ModelError, match="length"):
        retrieve(cq, np.zeros(cq.n + 1))


def test_canonicalize_rejects_parameter_products():
    with pytest.raises(CanonError) as err:
        canonicalize(build_mpc_non_dpp(4))
    assert err.value.violations
