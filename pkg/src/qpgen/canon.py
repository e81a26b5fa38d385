"""Canonicalization of modeled problems to parametric QP standard form.

The target form is

    minimize    (1/2) x'Px + q'x
    subject to  l <= Ax <= u

where every entry of (P values, q, l, u, A values) is an affine function of
the flattened user parameters.  Stacking those segments into a canonical
parameter vector theta_c, canonicalization produces a sparse matrix C with

    theta_c = C [theta; 1]

so that evaluating the QP data for new parameter values is a single sparse
matrix-vector product, and solution retrieval is an affine (here: selector)
map back onto the user variables.  Both maps are built symbolically by
propagating parameter-affine coefficients through the expression tree; no
numeric differencing is involved anywhere.

Quadratic objective terms enter only through sum-of-squares atoms.  Each
such atom gets an auxiliary vector v tied to its argument by equality rows,
turning the cost into a diagonal quadratic in v.  Piecewise-linear atoms get
epigraph variables t with the usual pair of inequality rows.  Auxiliary
equality rows produced by the objective come first, then user constraints in
declaration order, which keeps the canonical pattern deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .expr import (
    ABS, ADD, CONST, HSTACK, INDEX, MATMUL, MUL, NEG, NEG_PART, NONNEG,
    NONPOS, NORM1, PARAM, POS_PART, SUM, SUM_SQUARES, TRANSPOSE, VAR, VSTACK,
    Expr, ModelError, Parameter,
)
from .problem import EQ_ZERO, Problem, check_dpp, validate
from .sparse import CscMatrix, FlattenLayout, build_csc, make_layout

__all__ = [
    "AffineMap", "CanonError", "CanonParams", "CanonQP", "DependencyTable",
    "RetrievalMap", "canonicalize", "eval_params", "partial_update",
    "retrieve",
]


class CanonError(ModelError):
    """Raised when a validated problem still has no QP canonical form."""

    def __init__(self, message: str, violations=None):
        super().__init__(message)
        self.violations = violations or []


@njit(cache=True)
def _recompute_rows(indptr, indices, data, flat, rows, out):
    """out[r] = sum over CSR row r of data * flat, for each listed row.

    Shared by full evaluation and partial updates so both produce
    bit-identical results for any row they both compute.
    """
    for t in range(rows.size):
        r = rows[t]
        acc = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            acc += data[p] * flat[indices[p]]
        out[r] = acc


# A parameter-affine scalar ("pa") is a dict {column: coeff} over the columns
# of [theta; 1]; the last column (index d) is the constant one.  A missing
# key means a structural zero.  Affine-in-x expressions are lists of dicts
# {x index or -1: pa}, column-major over the expression's entries, where -1
# keys the constant term.


def _pa_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for c, v in b.items():
        s = out.get(c, 0.0) + v
        if s == 0.0:
            out.pop(c, None)
        else:
            out[c] = s
    return out


def _pa_scale(a: dict, s: float) -> dict:
    if s == 0.0:
        return {}
    return {c: v * s for c, v in a.items()}


def _pa_mul(a: dict, b: dict, d: int) -> dict:
    """Product of two parameter-affine scalars; one must be constant."""
    a_const = all(c == d for c in a)
    b_const = all(c == d for c in b)
    if a_const:
        return _pa_scale(b, a.get(d, 0.0))
    if b_const:
        return _pa_scale(a, b.get(d, 0.0))
    raise CanonError("product of two parameter expressions is not supported")


def _lin_add(a: list, b: list) -> list:
    out = []
    for ea, eb in zip(a, b):
        e = dict(ea)
        for k, pa in eb.items():
            merged = _pa_add(e.get(k, {}), pa)
            if merged:
                e[k] = merged
            else:
                e.pop(k, None)
        out.append(e)
    return out


def _lin_scale_pa(entries: list, w: dict, d: int) -> list:
    out = []
    for e in entries:
        ne = {}
        for k, pa in e.items():
            prod = _pa_mul(w, pa, d)
            if prod:
                ne[k] = prod
        out.append(ne)
    return out


def _entry_is_const(e: dict) -> bool:
    return all(k == -1 for k in e)


class _Builder:
    """Accumulates auxiliary variables and canonical rows during one walk."""

    def __init__(self, problem: Problem, layout: FlattenLayout):
        self.problem = problem
        self.layout = layout
        self.d = layout.total                       # constant column index
        self.var_offset: dict[int, int] = {}
        self.n_user = 0
        for v in problem.variables:
            self.var_offset[v.id] = self.n_user
            self.n_user += v.shape.rows * v.shape.cols
        self.n = self.n_user                        # grows with aux vars
        self.rows_l: list[dict] = []                # pa per row
        self.rows_u: list[dict] = []
        self.row_coeffs: list[dict] = []            # {x index: pa} per row
        self.P_diag: dict[int, dict] = {}           # x index -> pa (2*weight)
        self.q: dict[int, dict] = {}                # x index -> pa
        self.obj_offset: dict = {}
        self.col_sign: dict[int, int] = {}          # theta col -> sign tag
        for p in problem.parameters:
            lo, hi = layout.column_range(p.id)
            for c in range(lo, hi):
                self.col_sign[c] = 0 if p.sign == NONNEG else (
                    1 if p.sign == NONPOS else 2)

    # ---- aux/rows plumbing ----

    def new_aux(self, count: int) -> int:
        base = self.n
        self.n += count
        return base

    def add_row(self, coeffs: dict, lo: dict | None, up: dict | None) -> None:
        self.row_coeffs.append(coeffs)
        self.rows_l.append({self.d: -np.inf} if lo is None else lo)
        self.rows_u.append({self.d: np.inf} if up is None else up)

    def add_to_q(self, x_idx: int, pa: dict) -> None:
        merged = _pa_add(self.q.get(x_idx, {}), pa)
        if merged:
            self.q[x_idx] = merged
        else:
            self.q.pop(x_idx, None)

    def check_nonneg(self, w: dict, what: str) -> dict:
        for c, v in w.items():
            if c == self.d:
                ok = v >= 0.0
            else:
                sign = self.col_sign[c]
                ok = (sign == 0 and v >= 0.0) or (sign == 1 and v <= 0.0)
            if not ok:
                raise CanonError(
                    f"weight on {what} is not provably nonnegative")
        return w

    # ---- affine walk (epigraph variables introduced on the fly) ----

    def lin(self, e: Expr) -> list:
        op = e.op
        if op == CONST:
            out = []
            for j in range(e.shape.cols):
                for i in range(e.shape.rows):
                    v = float(e.value[i, j])
                    out.append({-1: {self.d: v}} if v != 0.0 else {})
            return out
        if op == VAR:
            base = self.var_offset[e.ref.id]
            return [{base + k: {self.d: 1.0}}
                    for k in range(e.shape.rows * e.shape.cols)]
        if op == PARAM:
            p: Parameter = e.ref
            emap = self.layout.entry_maps[p.id]
            lo, _ = self.layout.column_range(p.id)
            out = []
            for j in range(e.shape.cols):
                for i in range(e.shape.rows):
                    local = emap.get((i, j))
                    out.append({} if local is None
                               else {-1: {lo + local: 1.0}})
            return out
        if op == ADD:
            acc = self.lin(e.args[0])
            for a in e.args[1:]:
                term = self.lin(a)
                if len(term) == 1 and len(acc) > 1:
                    term = term * len(acc)
                elif len(acc) == 1 and len(term) > 1:
                    acc = acc * len(term)
                acc = _lin_add(acc, term)
            return acc
        if op == NEG:
            return [{k: _pa_scale(pa, -1.0) for k, pa in entry.items()}
                    for entry in self.lin(e.args[0])]
        if op == MUL:
            return self._lin_mul(e)
        if op == MATMUL:
            return self._lin_matmul(e)
        if op == INDEX:
            src = self.lin(e.args[0])
            r = e.args[0].shape.rows
            r0, r1 = e.rows_rng
            c0, c1 = e.cols_rng
            return [src[i + j * r]
                    for j in range(c0, c1 + 1) for i in range(r0, r1 + 1)]
        if op == TRANSPOSE:
            src = self.lin(e.args[0])
            r = e.args[0].shape.rows
            c = e.args[0].shape.cols
            # result is c x r; entry (ir, jr) of the result is src (jr, ir)
            return [src[jr + ir * r] for jr in range(r) for ir in range(c)]
        if op == SUM:
            acc: dict = {}
            for entry in self.lin(e.args[0]):
                for k, pa in entry.items():
                    merged = _pa_add(acc.get(k, {}), pa)
                    if merged:
                        acc[k] = merged
                    else:
                        acc.pop(k, None)
            return [acc]
        if op in (HSTACK, VSTACK):
            return self._lin_stack(e)
        if op in (NORM1, ABS, POS_PART, NEG_PART):
            return self._lin_pwl_atom(e)
        if op == SUM_SQUARES:
            raise CanonError(
                "sum of squares may appear only as an objective term")
        raise CanonError(f"no affine form for operation '{op}'")

    def _lin_mul(self, e: Expr) -> list:
        left = self.lin(e.args[0])
        right = self.lin(e.args[1])
        lconst = all(_entry_is_const(x) for x in left)
        rconst = all(_entry_is_const(x) for x in right)
        if not lconst and not rconst:
            raise CanonError("product of two variable expressions")
        if lconst:
            mult = [x.get(-1, {}) for x in left]
            operand = right
        else:
            mult = [x.get(-1, {}) for x in right]
            operand = left
        if len(mult) == 1:
            return _lin_scale_pa(operand, mult[0], self.d)
        if len(operand) == 1:
            return [
                {k: _pa_mul(m, pa, self.d)
                 for k, pa in operand[0].items()
                 if _pa_mul(m, pa, self.d)}
                for m in mult
            ]
        return [
            {k: prod for k, pa in entry.items()
             if (prod := _pa_mul(m, pa, self.d))}
            for m, entry in zip(mult, operand)
        ]

    def _lin_matmul(self, e: Expr) -> list:
        a, b = e.args
        left = self.lin(a)
        right = self.lin(b)
        lconst = all(_entry_is_const(x) for x in left)
        rconst = all(_entry_is_const(x) for x in right)
        if not lconst and not rconst:
            raise CanonError("product of two variable expressions")
        m, k = a.shape.rows, a.shape.cols
        c = b.shape.cols
        out = []
        for j in range(c):
            for i in range(m):
                acc: dict = {}
                for t in range(k):
                    le = left[i + t * m]
                    re = right[t + j * k]
                    if lconst:
                        w = le.get(-1, {})
                        if not w:
                            continue
                        for key, pa in re.items():
                            prod = _pa_mul(w, pa, self.d)
                            if not prod:
                                continue
                            merged = _pa_add(acc.get(key, {}), prod)
                            if merged:
                                acc[key] = merged
                            else:
                                acc.pop(key, None)
                    else:
                        w = re.get(-1, {})
                        if not w:
                            continue
                        for key, pa in le.items():
                            prod = _pa_mul(w, pa, self.d)
                            if not prod:
                                continue
                            merged = _pa_add(acc.get(key, {}), prod)
                            if merged:
                                acc[key] = merged
                            else:
                                acc.pop(key, None)
                out.append(acc)
        return out

    def _lin_stack(self, e: Expr) -> list:
        blocks = [self.lin(a) for a in e.args]
        if e.op == HSTACK:
            out = []
            for blk in blocks:
                out.extend(blk)
            return out
        rows = [a.shape.rows for a in e.args]
        total = e.shape.rows
        out = []
        for j in range(e.shape.cols):
            for blk, a, r in zip(blocks, e.args, rows):
                out.extend(blk[j * r:(j + 1) * r])
        return out

    def _lin_pwl_atom(self, e: Expr) -> list:
        """Epigraph reduction of a piecewise-linear atom.

        Returns the affine surrogate (the epigraph variables) in place of
        the atom's value; the bounding rows are appended as a side effect.
        """
        arg = self.lin(e.args[0])
        k = len(arg)
        base = self.new_aux(k)
        op = e.op
        for idx, entry in enumerate(arg):
            t = base + idx
            if op in (NORM1, ABS, POS_PART):
                self._emit_sided(entry, t, +1.0)
            if op in (NORM1, ABS, NEG_PART):
                self._emit_sided(entry, t, -1.0)
            if op in (POS_PART, NEG_PART):
                self.add_row({t: {self.d: -1.0}}, None, {})
        if op == NORM1:
            return [{base + idx: {self.d: 1.0} for idx in range(k)}]
        return [{base + idx: {self.d: 1.0}} for idx in range(k)]

    def _emit_sided(self, entry: dict, t: int, side: float) -> None:
        """Row for t >= side*e, written as side*e - t <= 0."""
        coeffs = {}
        const = {}
        for key, pa in entry.items():
            if key == -1:
                const = _pa_scale(pa, side)
            else:
                coeffs[key] = _pa_scale(pa, side)
        coeffs[t] = {self.d: -1.0}
        self.add_row(coeffs, None, _pa_scale(const, -1.0))

    # ---- objective ----

    def objective(self, e: Expr, w: dict) -> None:
        op = e.op
        if op == ADD:
            for a in e.args:
                self.objective(a, w)
            return
        if op == NEG:
            self.objective(e.args[0], _pa_scale(w, -1.0))
            return
        if op == SUM_SQUARES:
            self.emit_sum_squares(e.args[0],
                                  self.check_nonneg(w, "a sum of squares"))
            return
        if op == SUM and _contains_ss(e.args[0]):
            self.objective(e.args[0], w)
            return
        if op == MUL and _contains_ss(e):
            a, b = e.args
            if _contains_ss(a) and _contains_ss(b):
                raise CanonError("product of two quadratic expressions")
            scale, core = (a, b) if _contains_ss(b) else (b, a)
            if scale.shape.rows * scale.shape.cols != 1:
                raise CanonError("quadratic term scaled by a non-scalar")
            s_entries = self.lin(scale)
            if not _entry_is_const(s_entries[0]):
                raise CanonError("quadratic term scaled by a variable")
            self.objective(core, _pa_mul(w, s_entries[0].get(-1, {}), self.d))
            return
        if _contains_ss(e):
            raise CanonError(
                f"unsupported quadratic objective structure at '{op}'")
        entries = self.lin(e)
        if len(entries) != 1:
            raise CanonError("objective term is not scalar")
        scaled = _lin_scale_pa(entries, w, self.d)[0]
        for key, pa in scaled.items():
            if key == -1:
                self.obj_offset = _pa_add(self.obj_offset, pa)
            else:
                self.add_to_q(key, pa)

    def emit_sum_squares(self, arg: Expr, w: dict) -> None:
        entries = self.lin(arg)
        k = len(entries)
        base = self.new_aux(k)
        two_w = _pa_scale(w, 2.0)
        for idx, entry in enumerate(entries):
            v = base + idx
            coeffs = {}
            const = {}
            for key, pa in entry.items():
                if key == -1:
                    const = pa
                else:
                    coeffs[key] = pa
            coeffs[v] = {self.d: -1.0}
            bound = _pa_scale(const, -1.0)
            self.add_row(coeffs, bound, dict(bound))
            self.P_diag[v] = two_w

    # ---- constraints ----

    def constraint(self, kind: str, e: Expr) -> None:
        if kind == EQ_ZERO:
            for entry in self.lin(e):
                self._emit_eq(entry)
            return
        # f <= 0; a top-level negation is emitted as a lower-bounded row so
        # that g >= 0 keeps g's own coefficients.
        if e.op == NEG:
            for entry in self.lin(e.args[0]):
                self._emit_ineq(entry, lower=True)
        else:
            for entry in self.lin(e):
                self._emit_ineq(entry, lower=False)

    def _split(self, entry: dict):
        coeffs = {}
        const = {}
        for key, pa in entry.items():
            if key == -1:
                const = pa
            else:
                coeffs[key] = pa
        return coeffs, const

    def _emit_eq(self, entry: dict) -> None:
        coeffs, const = self._split(entry)
        bound = _pa_scale(const, -1.0)
        self.add_row(coeffs, bound, dict(bound))

    def _emit_ineq(self, entry: dict, lower: bool) -> None:
        coeffs, const = self._split(entry)
        bound = _pa_scale(const, -1.0)
        if lower:
            self.add_row(coeffs, bound, None)
        else:
            self.add_row(coeffs, None, bound)


def _contains_ss(e: Expr) -> bool:
    if e.op == SUM_SQUARES:
        return True
    return any(_contains_ss(a) for a in e.args)


@dataclass(frozen=True)
class AffineMap:
    """theta_c = C [theta; 1], stored in both column and row form.

    The CSC form is the public matrix; the CSR mirror drives row-wise
    recomputation so that full and partial evaluation share one code path.
    """

    C: CscMatrix
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def recompute(self, flat: np.ndarray, rows: np.ndarray,
                  out: np.ndarray) -> None:
        _recompute_rows(self.indptr, self.indices, self.data, flat, rows, out)


@dataclass(frozen=True)
class RetrievalMap:
    """x_user = R [x_solution; 1]; a pure gather when selector is True."""

    R: CscMatrix
    selector: bool
    indices: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.selector:
            return x[self.indices].copy()
        ext = np.concatenate([x, [1.0]])
        from .sparse import spmv
        return spmv(self.R, ext)


@dataclass(frozen=True)
class DependencyTable:
    """Which canonical-vector rows each parameter feeds, by name."""

    rows_by_param: dict
    touches: dict          # name -> (P, q, l, u, A) booleans

    def rows_for(self, names) -> np.ndarray:
        parts = [self.rows_by_param[n] for n in names]
        if not parts:
            return np.empty(0, dtype=np.int64)
        out = parts[0]
        for p in parts[1:]:
            out = np.union1d(out, p)
        return out.astype(np.int64)

    def segments_for(self, names):
        agg = [False] * 5
        for n in names:
            for i, b in enumerate(self.touches[n]):
                agg[i] = agg[i] or b
        return tuple(agg)


@dataclass(frozen=True)
class CanonQP:
    """A canonicalized parametric QP plus its parameter and retrieval maps."""

    name: str
    n_user: int
    n: int
    m: int
    var_info: tuple          # (name, rows, cols, offset) per user variable
    P_pattern: CscMatrix     # upper triangle, values zeroed
    A_pattern: CscMatrix     # values zeroed
    seg: tuple               # (P, q, l, u, A, total) segment offsets
    cmap: AffineMap
    rmap: RetrievalMap
    deps: DependencyTable
    layout: FlattenLayout
    params: tuple            # Parameter objects, declaration order
    offset_cols: np.ndarray  # objective constant term, pa form
    offset_coeffs: np.ndarray

    @property
    def nnz_P(self) -> int:
        return self.P_pattern.nnz

    @property
    def nnz_A(self) -> int:
        return self.A_pattern.nnz

    @property
    def theta_size(self) -> int:
        return self.seg[5]

    def P_with(self, values: np.ndarray) -> CscMatrix:
        return CscMatrix(self.n, self.n, self.P_pattern.col_ptr,
                         self.P_pattern.row_idx, values)

    def A_with(self, values: np.ndarray) -> CscMatrix:
        return CscMatrix(self.m, self.n, self.A_pattern.col_ptr,
                         self.A_pattern.row_idx, values)


@dataclass
class CanonParams:
    """Evaluated canonical vectors for one setting of the parameters."""

    theta: np.ndarray        # all segments, concatenated
    flat: np.ndarray         # [theta_user; 1]
    seg: tuple
    obj_offset: float

    @property
    def P_values(self) -> np.ndarray:
        return self.theta[self.seg[0]:self.seg[1]]

    @property
    def q(self) -> np.ndarray:
        return self.theta[self.seg[1]:self.seg[2]]

    @property
    def l(self) -> np.ndarray:
        return self.theta[self.seg[2]:self.seg[3]]

    @property
    def u(self) -> np.ndarray:
        return self.theta[self.seg[3]:self.seg[4]]

    @property
    def A_values(self) -> np.ndarray:
        return self.theta[self.seg[4]:self.seg[5]]

    def copy(self) -> "CanonParams":
        return CanonParams(self.theta.copy(), self.flat.copy(), self.seg,
                           self.obj_offset)


def canonicalize(problem: Problem) -> CanonQP:
    """Reduce a validated, parameter-disciplined problem to ASA form."""
    problem = validate(problem)
    report = check_dpp(problem)
    if not report.compliant:
        lines = "; ".join(f"{v.path}: {v.reason}" for v in report.violations)
        raise CanonError(f"problem violates the parameter rules: {lines}",
                         violations=report.violations)
    layout = make_layout(problem.parameters)
    b = _Builder(problem, layout)
    b.objective(problem.objective, {b.d: 1.0})
    for con in problem.constraints:
        b.constraint(con.kind, con.expr)

    n, m, d = b.n, len(b.row_coeffs), b.d

    # P: diagonal entries for the squared auxiliaries, upper-triangular CSC.
    p_cols = sorted(b.P_diag)
    P_pattern = build_csc([(c, c, 0.0) for c in p_cols], n, n)
    # A: collect coefficient pattern, then order values column-major.
    a_entries: dict[tuple, dict] = {}
    for r, coeffs in enumerate(b.row_coeffs):
        for x_idx, pa in coeffs.items():
            if pa:
                a_entries[(r, x_idx)] = pa
    a_keys = sorted(a_entries, key=lambda t: (t[1], t[0]))
    A_pattern = build_csc([(r, c, 0.0) for (r, c) in a_keys], m, n)

    nnz_p, nnz_a = len(p_cols), len(a_keys)
    seg = (0, nnz_p, nnz_p + n, nnz_p + n + m, nnz_p + n + 2 * m,
           nnz_p + n + 2 * m + nnz_a)
    total_rows = seg[5]

    triplets = []

    def put(row: int, pa: dict) -> None:
        for c, v in pa.items():
            triplets.append((row, c, v))

    for i, c in enumerate(p_cols):
        put(seg[0] + i, b.P_diag[c])
    for x_idx, pa in b.q.items():
        put(seg[1] + x_idx, pa)
    for r in range(m):
        put(seg[2] + r, b.rows_l[r])
        put(seg[3] + r, b.rows_u[r])
    for i, key in enumerate(a_keys):
        put(seg[4] + i, a_entries[key])

    C = build_csc(triplets, total_rows, d + 1)
    indptr, indices, data = _csc_to_csr(C)
    cmap = AffineMap(C=C, indptr=indptr, indices=indices, data=data)

    sel = np.arange(b.n_user, dtype=np.int64)
    R = build_csc([(i, i, 1.0) for i in range(b.n_user)], b.n_user, n + 1)
    rmap = RetrievalMap(R=R, selector=True, indices=sel)

    rows_by_param: dict[str, np.ndarray] = {}
    touches: dict[str, tuple] = {}
    col_starts = np.array([layout.column_range(p.id)[0]
                           for p in problem.parameters], dtype=np.int64)
    row_sets: list[set] = [set() for _ in problem.parameters]
    for j in range(d):
        which = int(np.searchsorted(col_starts, j, side="right") - 1)
        for k in range(int(C.col_ptr[j]), int(C.col_ptr[j + 1])):
            row_sets[which].add(int(C.row_idx[k]))
    for p, rows in zip(problem.parameters, row_sets):
        arr = np.array(sorted(rows), dtype=np.int64)
        rows_by_param[p.name] = arr
        touches[p.name] = tuple(
            bool(np.any((arr >= seg[i]) & (arr < seg[i + 1])))
            for i in range(5))
    deps = DependencyTable(rows_by_param=rows_by_param, touches=touches)

    var_info = tuple(
        (v.name, v.shape.rows, v.shape.cols, b.var_offset[v.id])
        for v in problem.variables)
    off_cols = np.array(sorted(b.obj_offset), dtype=np.int64)
    off_coeffs = np.array([b.obj_offset[c] for c in off_cols], dtype=float)

    return CanonQP(
        name=problem.name, n_user=b.n_user, n=n, m=m, var_info=var_info,
        P_pattern=P_pattern, A_pattern=A_pattern, seg=seg, cmap=cmap,
        rmap=rmap, deps=deps, layout=layout,
        params=tuple(problem.parameters),
        offset_cols=off_cols, offset_coeffs=off_coeffs)


def _csc_to_csr(M: CscMatrix):
    nnz = M.nnz
    indptr = np.zeros(M.nrows + 1, dtype=np.int64)
    for k in range(nnz):
        indptr[M.row_idx[k] + 1] += 1
    indptr = np.cumsum(indptr)
    indices = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz, dtype=float)
    fill = indptr[:-1].copy()
    for j in range(M.ncols):
        for k in range(int(M.col_ptr[j]), int(M.col_ptr[j + 1])):
            r = M.row_idx[k]
            slot = fill[r]
            indices[slot] = j
            data[slot] = M.values[k]
            fill[r] = slot + 1
    return indptr, indices, data


def _norm_value(p: Parameter, value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape != (p.shape.rows, p.shape.cols):
        raise ModelError(
            f"parameter '{p.name}' expects shape "
            f"({p.shape.rows}, {p.shape.cols}), got {arr.shape}")
    return arr


def _fill_flat(canon: CanonQP, flat: np.ndarray, p: Parameter,
               value) -> None:
    arr = _norm_value(p, value)
    lo, _ = canon.layout.column_range(p.id)
    emap = canon.layout.entry_maps[p.id]
    for (i, j), local in emap.items():
        flat[lo + local] = arr[i, j]


def eval_params(canon: CanonQP, values: dict) -> CanonParams:
    """Evaluate all canonical vectors for a full set of parameter values."""
    named = {p.name: p for p in canon.params}
    missing = set(named) - set(values)
    if missing:
        raise ModelError(f"missing parameter values: {sorted(missing)}")
    extra = set(values) - set(named)
    if extra:
        raise ModelError(f"unknown parameters: {sorted(extra)}")
    flat = np.zeros(canon.layout.total + 1)
    flat[-1] = 1.0
    for name, value in values.items():
        _fill_flat(canon, flat, named[name], value)
    theta = np.zeros(canon.theta_size)
    canon.cmap.recompute(flat, np.arange(canon.theta_size, dtype=np.int64),
                         theta)
    offset = float(np.dot(canon.offset_coeffs, flat[canon.offset_cols])) \
        if canon.offset_cols.size else 0.0
    return CanonParams(theta=theta, flat=flat, seg=canon.seg,
                       obj_offset=offset)


def partial_update(canon: CanonQP, cp: CanonParams, changed: dict):
    """Refresh only the canonical rows reached by the changed parameters.

    Rows outside the union of the changed parameters' dependency sets are
    not recomputed, so their bits cannot move.  Returns the (P, q, l, u, A)
    touch flags for the change set.
    """
    named = {p.name: p for p in canon.params}
    for name in changed:
        if name not in named:
            raise ModelError(f"unknown parameter '{name}'")
    for name, value in changed.items():
        _fill_flat(canon, cp.flat, named[name], value)
    rows = canon.deps.rows_for(sorted(changed))
    canon.cmap.recompute(cp.flat, rows, cp.theta)
    cp.obj_offset = float(
        np.dot(canon.offset_coeffs, cp.flat[canon.offset_cols])) \
        if canon.offset_cols.size else 0.0
    return canon.deps.segments_for(sorted(changed))


def retrieve(canon: CanonQP, x: np.ndarray) -> dict:
    """Map a solver solution back onto the user's named variables."""
    if x.shape != (canon.n,):
        raise ModelError(f"solution vector must have length {canon.n}")
    user = canon.rmap.apply(x)
    out = {}
    for name, rows, cols, off in canon.var_info:
        block = user[off:off + rows * cols]
        out[name] = block.reshape((rows, cols), order="F")
    return out
