"""Sparse LDL^T factorization of quasi-definite systems.

The KKT matrices solved here are symmetric quasi-definite, so LDL^T exists
for every symmetric permutation and no pivoting is needed.  A fill-reducing
permutation is chosen once (greedy exact minimum degree); the symbolic
structure (elimination tree, column counts) is computed once; numeric
refactorization reuses both.  Solves multiply by a stored reciprocal
diagonal instead of dividing.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from numba import njit


class FactorizationError(RuntimeError):
    """Numeric breakdown: zero pivot or inertia inconsistent with a convex QP."""


def min_degree_order(n: int, col_ptr: np.ndarray, row_idx: np.ndarray) -> np.ndarray:
    """Greedy exact minimum-degree ordering of a symmetric pattern.

    Input is the upper-triangular CSC pattern; ties break on node index so
    the ordering is deterministic.  Returns perm with perm[k] = original
    index of the k-th pivot.
    """
    adj = [set() for _ in range(n)]
    for j in range(n):
        for k in range(int(col_ptr[j]), int(col_ptr[j + 1])):
            i = int(row_idx[k])
            if i != j:
                adj[i].add(j)
                adj[j].add(i)
    heap = [(len(adj[i]), i) for i in range(n)]
    heapq.heapify(heap)
    alive = np.ones(n, dtype=bool)
    perm = np.empty(n, dtype=np.int64)
    for k in range(n):
        while True:
            d, v = heapq.heappop(heap)
            if alive[v] and d == len(adj[v]):
                break
        perm[k] = v
        alive[v] = False
        nbrs = adj[v]
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au.update(nbrs)
            au.discard(u)
            heapq.heappush(heap, (len(au), u))
        adj[v] = set()
    return perm


@njit(cache=True)
def _etree_counts(n, Ap, Ai, work, Lnz, parent):
    """Elimination tree and per-column L counts for an upper-triangular CSC.

    Returns total L nonzeros, or -1 if an entry lies below the diagonal.
    """
    for i in range(n):
        parent[i] = -1
        Lnz[i] = 0
    total = 0
    for j in range(n):
        work[j] = j
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i > j:
                return -1
            while work[i] != j:
                if parent[i] == -1:
                    parent[i] = j
                Lnz[i] += 1
                total += 1
                work[i] = j
                i = parent[i]
    return total


@njit(cache=True)
def _factor(n, Ap, Ai, Ax, parent, Lnz, Lp, Li, Lx, D, Dinv,
            y_vals, y_markers, y_idx, elim_buffer, next_in_col):
    """Up-looking numeric LDL^T; pattern inputs fixed, value arrays rewritten.

    Returns the number of positive pivots, or -1 on a zero pivot.  Assumes
    every column's last stored entry is the diagonal.
    """
    Lp[0] = 0
    for i in range(n):
        Lp[i + 1] = Lp[i] + Lnz[i]
        next_in_col[i] = Lp[i]
        y_markers[i] = 0
        y_vals[i] = 0.0

    n_pos = 0
    if Ap[1] == 0 or Ai[Ap[1] - 1] != 0:
        return -1
    D[0] = Ax[Ap[1] - 1]
    if D[0] == 0.0:
        return -1
    if D[0] > 0.0:
        n_pos += 1
    Dinv[0] = 1.0 / D[0]

    for k in range(1, n):
        col_start = Ap[k]
        col_end = Ap[k + 1] - 1
        if col_end < col_start or Ai[col_end] != k:
            return -1
        D[k] = Ax[col_end]
        for p in range(col_start, col_end):
            y_vals[Ai[p]] = Ax[p]

        nnz_y = 0
        for p in range(col_start, col_end):
            b_idx = Ai[p]
            if y_markers[b_idx] == 0:
                y_markers[b_idx] = 1
                elim_buffer[0] = b_idx
                nnz_e = 1
                next_idx = parent[b_idx]
                while next_idx != -1 and next_idx < k:
                    if y_markers[next_idx] == 1:
                        break
                    y_markers[next_idx] = 1
                    elim_buffer[nnz_e] = next_idx
                    nnz_e += 1
                    next_idx = parent[next_idx]
                for q in range(nnz_e - 1, -1, -1):
                    y_idx[nnz_y] = elim_buffer[q]
                    nnz_y += 1

        for q in range(nnz_y - 1, -1, -1):
            c = y_idx[q]
            tmp = next_in_col[c]
            yc = y_vals[c]
            for p in range(Lp[c], tmp):
                y_vals[Li[p]] -= Lx[p] * yc
            Li[tmp] = k
            Lx[tmp] = yc * Dinv[c]
            D[k] -= yc * Lx[tmp]
            next_in_col[c] = tmp + 1
            y_vals[c] = 0.0
            y_markers[c] = 0

        if D[k] == 0.0:
            return -1
        if D[k] > 0.0:
            n_pos += 1
        Dinv[k] = 1.0 / D[k]
    return n_pos


@njit(cache=True)
def _solve_inplace(n, Lp, Li, Lx, Dinv, x):
    """x <- (L D L^T)^{-1} x in permuted coordinates; division-free."""
    for j in range(n):
        xj = x[j]
        if xj != 0.0:
            for p in range(Lp[j], Lp[j + 1]):
                x[Li[p]] -= Lx[p] * xj
    for j in range(n):
        x[j] *= Dinv[j]
    for j in range(n - 1, -1, -1):
        acc = x[j]
        for p in range(Lp[j], Lp[j + 1]):
            acc -= Lx[p] * x[Li[p]]
        x[j] = acc


@dataclass
class LdlFactor:
    """Permutation, symbolic structure, and numeric factors of one matrix."""

    n: int
    perm: np.ndarray          # perm[k] = original index of k-th pivot
    # permuted upper-triangular CSC pattern (values rewritten per refactor)
    Kp: np.ndarray
    Ki: np.ndarray
    Kx: np.ndarray
    parent: np.ndarray
    Lnz: np.ndarray
    Lp: np.ndarray
    Li: np.ndarray
    Lx: np.ndarray
    D: np.ndarray
    Dinv: np.ndarray
    n_pos: int = 0
    # scratch for the numeric pass
    _y_vals: np.ndarray = None
    _y_markers: np.ndarray = None
    _y_idx: np.ndarray = None
    _elim: np.ndarray = None
    _next_in_col: np.ndarray = None
    _bwork: np.ndarray = None

    def refactor(self, expected_pos: int | None = None) -> None:
        """Numeric factorization of the current Kx values (same pattern)."""
        n_pos = _factor(self.n, self.Kp, self.Ki, self.Kx, self.parent,
                        self.Lnz, self.Lp, self.Li, self.Lx, self.D, self.Dinv,
                        self._y_vals, self._y_markers, self._y_idx, self._elim,
                        self._next_in_col)
        if n_pos < 0:
            raise FactorizationError("zero pivot during LDL^T factorization")
        if expected_pos is not None and n_pos != expected_pos:
            raise FactorizationError(
                f"inertia ({n_pos} positive pivots, expected {expected_pos}); "
                "the quadratic cost is not positive semidefinite")
        self.n_pos = n_pos

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve K x = b via permutation + substitutions + reciprocal scaling."""
        x = self._bwork
        x[:] = b[self.perm]
        _solve_inplace(self.n, self.Lp, self.Li, self.Lx, self.Dinv, x)
        out = np.empty_like(b)
        out[self.perm] = x
        return out


def symbolic_factor(n: int, Kp: np.ndarray, Ki: np.ndarray,
                    perm: np.ndarray) -> LdlFactor:
    """Allocate the symbolic structure for a permuted upper-triangular pattern."""
    parent = np.empty(n, dtype=np.int64)
    Lnz = np.empty(n, dtype=np.int64)
    work = np.empty(n, dtype=np.int64)
    total = _etree_counts(n, Kp, Ki, work, Lnz, parent)
    if total < 0:
        raise FactorizationError("pattern is not upper triangular")
    return LdlFactor(
        n=n, perm=perm, Kp=Kp, Ki=Ki, Kx=np.zeros(int(Kp[n])),
        parent=parent, Lnz=Lnz,
        Lp=np.zeros(n + 1, dtype=np.int64),
        Li=np.zeros(total, dtype=np.int64),
        Lx=np.zeros(total),
        D=np.zeros(n), Dinv=np.zeros(n),
        _y_vals=np.zeros(n), _y_markers=np.zeros(n, dtype=np.int64),
        _y_idx=np.zeros(n, dtype=np.int64), _elim=np.zeros(n, dtype=np.int64),
        _next_in_col=np.zeros(n, dtype=np.int64), _bwork=np.zeros(n),
    )


def permute_upper(n: int, entries, perm: np.ndarray):
    """Map upper-triangle entries (i, j, tag) through a permutation.

    Returns (Kp, Ki, slot_of_entry) where slot_of_entry[t] is the CSC slot in
    the permuted pattern for input entry t.  Entries must be unique (i <= j).
    """
    iperm = np.empty(n, dtype=np.int64)
    iperm[perm] = np.arange(n, dtype=np.int64)
    coords = []
    for (i, j) in entries:
        pi, pj = int(iperm[i]), int(iperm[j])
        if pi > pj:
            pi, pj = pj, pi
        coords.append((pj, pi))
    order = sorted(range(len(coords)), key=lambda t: coords[t])
    Kp = np.zeros(n + 1, dtype=np.int64)
    Ki = np.empty(len(coords), dtype=np.int64)
    slot_of_entry = np.empty(len(coords), dtype=np.int64)
    for slot, t in enumerate(order):
        pj, pi = coords[t]
        Ki[slot] = pi
        Kp[pj + 1] += 1
        slot_of_entry[t] = slot
    return np.cumsum(Kp), Ki, slot_of_entry
