"""Compressed-sparse-column matrices and the kernels shared across the toolchain.

Everything downstream (canonicalization maps, solver data, generated C tables)
stores matrices in CSC with a frozen pattern: explicit zeros are kept so that
parameter updates can rewrite values without ever touching the structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit


class SparseError(ValueError):
    """Structural or dimensional violation in a sparse operation."""


@njit(cache=True)
def _spmv_kernel(col_ptr, row_idx, values, v, out):
    for j in range(v.shape[0]):
        vj = v[j]
        if vj == 0.0:
            continue
        for k in range(col_ptr[j], col_ptr[j + 1]):
            out[row_idx[k]] += values[k] * vj


@njit(cache=True)
def _spmv_cols_kernel(col_ptr, row_idx, values, v, cols, accum):
    for c in range(cols.shape[0]):
        j = cols[c]
        vj = v[j]
        for k in range(col_ptr[j], col_ptr[j + 1]):
            accum[row_idx[k]] += values[k] * vj


@njit(cache=True)
def _spmv_t_kernel(col_ptr, row_idx, values, v, out):
    for j in range(out.shape[0]):
        acc = 0.0
        for k in range(col_ptr[j], col_ptr[j + 1]):
            acc += values[k] * v[row_idx[k]]
        out[j] = acc


@njit(cache=True)
def _spmv_sym_upper_kernel(col_ptr, row_idx, values, v, out):
    for j in range(v.shape[0]):
        vj = v[j]
        for k in range(col_ptr[j], col_ptr[j + 1]):
            i = row_idx[k]
            out[i] += values[k] * vj
            if i < j:
                out[j] += values[k] * v[i]


@dataclass(frozen=True)
class CscMatrix:
    """CSC matrix with explicit zeros allowed (pattern = frozen superset).

    `values` may be rewritten in place by owners that manage pattern-stable
    updates; `col_ptr` and `row_idx` are never mutated after construction.
    """

    nrows: int
    ncols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[self.ncols])

    def validate(self) -> None:
        """Check all CSC structural invariants; raise SparseError on violation."""
        if self.nrows < 0 or self.ncols < 0:
            raise SparseError("negative dimension")
        if self.col_ptr.shape != (self.ncols + 1,):
            raise SparseError("col_ptr length must be ncols+1")
        if self.col_ptr[0] != 0:
            raise SparseError("col_ptr[0] must be 0")
        if np.any(np.diff(self.col_ptr) < 0):
            raise SparseError("col_ptr must be nondecreasing")
        nnz = int(self.col_ptr[-1])
        if self.row_idx.shape != (nnz,) or self.values.shape != (nnz,):
            raise SparseError("row_idx/values length must equal nnz")
        for j in range(self.ncols):
            lo, hi = int(self.col_ptr[j]), int(self.col_ptr[j + 1])
            col = self.row_idx[lo:hi]
            if col.size and (col[0] < 0 or col[-1] >= self.nrows):
                raise SparseError(f"row index out of range in column {j}")
            if np.any(np.diff(col) <= 0):
                raise SparseError(f"row indices not strictly increasing in column {j}")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols))
        for j in range(self.ncols):
            for k in range(int(self.col_ptr[j]), int(self.col_ptr[j + 1])):
                out[int(self.row_idx[k]), j] += self.values[k]
        return out

    def copy_values(self) -> "CscMatrix":
        return CscMatrix(self.nrows, self.ncols, self.col_ptr, self.row_idx,
                         self.values.copy())


def build_csc(triplets, nrows: int, ncols: int) -> CscMatrix:
    """Assemble a CSC matrix from (row, col, value) triplets.

    Duplicates are summed.  Explicitly inserted zeros are retained in the
    pattern, so a triplet list fixes the structure independently of values.
    """
    trips = list(triplets)
    for r, c, _ in trips:
        if not (0 <= r < nrows and 0 <= c < ncols):
            raise SparseError(f"triplet index ({r},{c}) out of bounds for "
                              f"{nrows}x{ncols}")
    order = sorted(range(len(trips)), key=lambda k: (trips[k][1], trips[k][0]))
    col_ptr = np.zeros(ncols + 1, dtype=np.int64)
    rows, vals = [], []
    prev = None
    for k in order:
        r, c, v = trips[k]
        if prev == (r, c):
            vals[-1] += v
        else:
            rows.append(r)
            vals.append(float(v))
            col_ptr[c + 1] += 1
            prev = (r, c)
    m = CscMatrix(nrows, ncols, np.cumsum(col_ptr),
                  np.asarray(rows, dtype=np.int64),
                  np.asarray(vals, dtype=np.float64))
    m.validate()
    return m


def spmv(M: CscMatrix, v: np.ndarray) -> np.ndarray:
    """Exact CSC matrix-vector product M @ v."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (M.ncols,):
        raise SparseError(f"spmv: vector length {v.shape} != ncols {M.ncols}")
    out = np.zeros(M.nrows)
    _spmv_kernel(M.col_ptr, M.row_idx, M.values, v, out)
    return out


def spmv_columns(M: CscMatrix, v: np.ndarray, cols, accum: np.ndarray) -> np.ndarray:
    """Add the contribution of the selected columns of M @ v into accum.

    Together with the complement's contribution this equals the full product;
    the column slice is how partial canonicalization touches only the rows a
    changed parameter feeds.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (M.ncols,):
        raise SparseError("spmv_columns: vector length mismatch")
    cols = np.asarray(sorted(cols), dtype=np.int64)
    if cols.size and (cols[0] < 0 or cols[-1] >= M.ncols):
        raise SparseError("spmv_columns: column index out of range")
    _spmv_cols_kernel(M.col_ptr, M.row_idx, M.values, v, cols, accum)
    return accum


def spmv_t(M: CscMatrix, v: np.ndarray) -> np.ndarray:
    """Transposed product M.T @ v (row gather in CSC)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (M.nrows,):
        raise SparseError("spmv_t: vector length mismatch")
    out = np.empty(M.ncols)
    _spmv_t_kernel(M.col_ptr, M.row_idx, M.values, v, out)
    return out


def spmv_sym_upper(M: CscMatrix, v: np.ndarray) -> np.ndarray:
    """Product S @ v where S is symmetric and M stores its upper triangle."""
    if M.nrows != M.ncols:
        raise SparseError("spmv_sym_upper: matrix must be square")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (M.ncols,):
        raise SparseError("spmv_sym_upper: vector length mismatch")
    out = np.zeros(M.nrows)
    _spmv_sym_upper_kernel(M.col_ptr, M.row_idx, M.values, v, out)
    return out


@dataclass(frozen=True)
class FlattenLayout:
    """Bijection between declared parameter entries and the flat vector theta.

    Dense parameters contribute every entry in column-major order; sparse
    parameters contribute only their declared nonzeros (also column-major).
    """

    param_ids: tuple
    offsets: dict = field(repr=False)       # param id -> flat offset
    entry_maps: dict = field(repr=False)    # param id -> {(row, col): local index}
    sizes: dict = field(repr=False)         # param id -> number of flat entries
    total: int = 0

    def flat_index(self, param_id: int, row: int, col: int) -> int:
        try:
            return self.offsets[param_id] + self.entry_maps[param_id][(row, col)]
        except KeyError:
            raise SparseError(f"({row},{col}) is not a declared entry of "
                              f"parameter {param_id}") from None

    def entries(self, param_id: int):
        """Declared (row, col) positions of a parameter in flat order."""
        ent = sorted(self.entry_maps[param_id].items(), key=lambda kv: kv[1])
        return [rc for rc, _ in ent]

    def column_range(self, param_id: int):
        """Half-open flat-index range occupied by one parameter."""
        off = self.offsets[param_id]
        return off, off + self.sizes[param_id]


def make_layout(parameters) -> FlattenLayout:
    """Build the flat layout for a declaration-ordered parameter list."""
    offsets, entry_maps, sizes = {}, {}, {}
    total = 0
    ids = []
    for p in parameters:
        ids.append(p.id)
        entries = {}
        if p.sparsity is not None:
            for k, (r, c) in enumerate(sorted(p.sparsity, key=lambda rc: (rc[1], rc[0]))):
                entries[(r, c)] = k
        else:
            k = 0
            for c in range(p.shape.cols):
                for r in range(p.shape.rows):
                    entries[(r, c)] = k
                    k += 1
        offsets[p.id] = total
        entry_maps[p.id] = entries
        sizes[p.id] = len(entries)
        total += len(entries)
    return FlattenLayout(tuple(ids), offsets, entry_maps, sizes, total)


def flatten_value(param, value: np.ndarray) -> np.ndarray:
    """Flatten one parameter's value per its declared layout."""
    value = np.asarray(value, dtype=np.float64)
    if value.ndim == 1:
        value = value.reshape(-1, 1)
    if value.shape != (param.shape.rows, param.shape.cols):
        raise SparseError(f"value shape {value.shape} does not match parameter "
                          f"'{param.name}' shape {param.shape}")
    if param.sparsity is not None:
        pos = sorted(param.sparsity, key=lambda rc: (rc[1], rc[0]))
        return np.array([value[r, c] for r, c in pos])
    return value.flatten(order="F")
