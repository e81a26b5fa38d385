"""CSC kernels, flat parameter layout, and value flattening."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpgen.expr import Parameter, Shape
from qpgen.sparse import (SparseError, build_csc, flatten_value,
                          make_layout, spmv, spmv_columns, spmv_sym_upper,
                          spmv_t)


def random_triplets(rng, nrows, ncols, density=0.4):
    out = []
    for r in range(nrows):
        for c in range(ncols):
            if rng.random() < density:
                out.append((r, c, float(rng.standard_normal())))
    return out


@st.composite
def csc_and_vector(draw):
    nrows = draw(st.integers(1, 8))
    ncols = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    trips = random_triplets(rng, nrows, ncols)
    return (build_csc(trips, nrows, ncols), trips,
            rng.standard_normal(ncols), rng.standard_normal(nrows))


def dense_of(trips, nrows, ncols):
    D = np.zeros((nrows, ncols))
    for r, c, v in trips:
        D[r, c] += v
    return D


@settings(max_examples=60, deadline=None)
@given(csc_and_vector())
def test_spmv_matches_dense(data):
    M, trips, x, y = data
    D = dense_of(trips, M.nrows, M.ncols)
    assert np.allclose(spmv(M, x), D @ x, atol=1e-12)
    assert np.allclose(spmv_t(M, y), D.T @ y, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(csc_and_vector())
def test_column_split_sums_to_full_product(data):
    M, trips, x, _ = data
    cols = [c for c in range(M.ncols) if c % 2 == 0]
    rest = [c for c in range(M.ncols) if c % 2 == 1]
    acc = np.zeros(M.nrows)
    spmv_columns(M, x, np.array(cols, dtype=np.int64), acc)
    spmv_columns(M, x, np.array(rest, dtype=np.int64), acc)
    assert np.allclose(acc, spmv(M, x), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31))
def test_symmetric_upper_product(n, seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((n, n))
    S = S + S.T
    trips = [(r, c, S[r, c]) for r in range(n) for c in range(r, n)]
    M = build_csc(trips, n, n)
    x = rng.standard_normal(n)
    assert np.allclose(spmv_sym_upper(M, x), S @ x, atol=1e-11)


def test_build_csc_sums_duplicates_and_keeps_zeros():
    M = build_csc([(0, 0, 1.0), (0, 0, 2.0), (1, 1, 0.0)], 2, 2)
    assert M.nnz == 2
    assert np.allclose(spmv(M, np.ones(2)), [3.0, 0.0])


def test_build_csc_rejects_out_of_range():
    with pytest.raises(SparseError):
        build_csc([(2, 0, 1.0)], 2, 2)
    with pytest.raises(SparseError):
        build_csc([(0, -1, 1.0)], 2, 2)


def test_spmv_shape_check():
    M = build_csc([(0, 0, 1.0)], 2, 3)
    with pytest.raises(SparseError):
        spmv(M, np.ones(2))


def test_layout_is_contiguous_and_column_major():
    A = Parameter("A", Shape(2, 2))
    b = Parameter("b", Shape(2, 1))
    layout = make_layout([A, b])
    assert layout.total == 6
    lo, hi = layout.column_range(A.id)
    assert (lo, hi) == (0, 4)
    # column-major: (0,0), (1,0), (0,1), (1,1)
    assert layout.flat_index(A.id, 1, 0) == 1
    assert layout.flat_index(A.id, 0, 1) == 2
    assert layout.column_range(b.id) == (4, 6)


def test_layout_sparse_parameter_only_declared_entries():
    S = Parameter("S", Shape(3, 3), sparsity=((0, 0), (2, 1)))
    layout = make_layout([S])
    assert layout.total == 2
    assert layout.flat_index(S.id, 0, 0) == 0
    assert layout.flat_index(S.id, 2, 1) == 1
    with pytest.raises(SparseError):
        layout.flat_index(S.id, 1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_flatten_value_round_trips_dense(rows, cols, seed):
    rng = np.random.default_rng(seed)
    P = Parameter("P", Shape(rows, cols))
    val = rng.standard_normal((rows, cols))
    flat = flatten_value(P, val)
    assert flat.shape == (rows * cols,)
    assert np.array_equal(flat, val.flatten(order="F"))


def test_flatten_value_sparse_declared_order():
    S = Parameter("S", Shape(2, 2), sparsity=((1, 1), (0, 0)))
    val = np.array([[1.0, 2.0], [3.0, 4.0]])
    # declared nonzeros are flattened column-major regardless of
    # declaration order
    assert np.array_equal(flatten_value(S, val), [1.0, 4.0])


def test_flatten_value_shape_mismatch():
    P = Parameter("P", Shape(2, 2))
    with pytest.raises(SparseError):
        flatten_value(P, np.ones((3, 2)))


def test_layout_entries_follow_declaration_order():
    a = Parameter("a", Shape(1, 1))
    B = Parameter("B", Shape(2, 1))
    layout = make_layout([a, B])
    assert layout.param_ids == (a.id, B.id)
    assert [layout.column_range(pid) for pid in layout.param_ids] == \
        [(0, 1), (1, 3)]
