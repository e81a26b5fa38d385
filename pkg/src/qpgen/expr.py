"""Expression trees for parametrized convex quadratic programs.

Expressions are immutable; shape, curvature (with parameters treated as
constants), sign, and parameter-dependency are computed eagerly at
construction so later passes never re-derive them.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid model construction: bad shapes, names, or compositions."""


_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

_ids = itertools.count(1)


@dataclass(frozen=True)
class Shape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ModelError(f"shape must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def is_scalar(self) -> bool:
        return self.rows == 1 and self.cols == 1

    def __str__(self):
        return f"{self.rows}x{self.cols}"


# Curvature lattice: CONSTANT < AFFINE < (CONVEX | CONCAVE) < UNKNOWN.
CONSTANT = "constant"
AFFINE = "affine"
CONVEX = "convex"
CONCAVE = "concave"
UNKNOWN = "unknown"

_CURV_RANK = {CONSTANT: 0, AFFINE: 1, CONVEX: 2, CONCAVE: 2, UNKNOWN: 3}

NONNEG = "nonneg"
NONPOS = "nonpos"
SIGN_UNKNOWN = "unknown"


def curv_join(a: str, b: str) -> str:
    """Curvature of a sum of terms with curvatures a and b."""
    if _CURV_RANK[a] < _CURV_RANK[b]:
        a, b = b, a
    if a == UNKNOWN:
        return UNKNOWN
    if _CURV_RANK[b] <= 1:
        return a
    return a if a == b else UNKNOWN


def curv_neg(a: str) -> str:
    if a == CONVEX:
        return CONCAVE
    if a == CONCAVE:
        return CONVEX
    return a


def curv_scale(sign: str, c: str) -> str:
    """Curvature of (constant with given sign) * (expression with curvature c)."""
    if _CURV_RANK[c] <= 1:
        return c
    if sign == NONNEG:
        return c
    if sign == NONPOS:
        return curv_neg(c)
    return UNKNOWN


def sign_neg(s: str) -> str:
    if s == NONNEG:
        return NONPOS
    if s == NONPOS:
        return NONNEG
    return SIGN_UNKNOWN


def sign_add(a: str, b: str) -> str:
    return a if a == b else SIGN_UNKNOWN


def sign_mul(a: str, b: str) -> str:
    if SIGN_UNKNOWN in (a, b):
        return SIGN_UNKNOWN
    return NONNEG if a == b else NONPOS


def _check_name(name: str, kind: str) -> None:
    if not _IDENT_RE.match(name):
        raise ModelError(f"{kind} name {name!r} is not a valid identifier")


@dataclass(frozen=True)
class Variable:
    name: str
    shape: Shape
    id: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        _check_name(self.name, "variable")

    def expr(self) -> "Expr":
        return var(self)


@dataclass(frozen=True)
class Parameter:
    name: str
    shape: Shape
    sign: str = SIGN_UNKNOWN
    sparsity: tuple | None = None   # ((row, col), ...) declared nonzeros
    id: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        _check_name(self.name, "parameter")
        if self.sign not in (NONNEG, NONPOS, SIGN_UNKNOWN):
            raise ModelError(f"invalid sign {self.sign!r}")
        if self.sparsity is not None:
            object.__setattr__(self, "sparsity", tuple((int(r), int(c)) for r, c in self.sparsity))
            seen = set()
            for r, c in self.sparsity:
                if not (0 <= r < self.shape.rows and 0 <= c < self.shape.cols):
                    raise ModelError(f"sparsity entry ({r},{c}) out of bounds for "
                                     f"parameter {self.name!r} of shape {self.shape}")
                if (r, c) in seen:
                    raise ModelError(f"duplicate sparsity entry ({r},{c}) in {self.name!r}")
                seen.add((r, c))

    def expr(self) -> "Expr":
        return param(self)


# Node kinds.
CONST, VAR, PARAM = "const", "var", "param"
ADD, NEG, MUL, MATMUL = "add", "neg", "multiply", "matmul"
INDEX, TRANSPOSE, SUM, HSTACK, VSTACK = "index", "transpose", "sum", "hstack", "vstack"
SUM_SQUARES, NORM1, ABS, POS_PART, NEG_PART = ("sum_squares", "norm1", "abs",
                                               "pos_part", "neg_part")

ATOMS = (SUM_SQUARES, NORM1, ABS, POS_PART, NEG_PART)


@dataclass(frozen=True, eq=False)
class Expr:
    op: str
    args: tuple
    shape: Shape
    curvature: str
    sign: str
    has_param: bool
    # op-specific payload
    value: np.ndarray | None = None     # const
    ref: object | None = None           # var/param: the Variable/Parameter
    rows_rng: tuple | None = None       # index: inclusive (a, b)
    cols_rng: tuple | None = None

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __rmatmul__(self, other):
        return matmul(_coerce(other), self)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Expr({describe(self)}, {self.shape}, {self.curvature})"


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return constant(x)


def constant(x) -> Expr:
    raw = np.asarray(x, dtype=np.float64)
    if raw.ndim == 0:
        a = raw.reshape(1, 1)
    elif raw.ndim == 1:
        a = raw.reshape(-1, 1)   # plain 1-D input is a column vector by convention
    elif raw.ndim == 2:
        a = raw
    else:
        raise ModelError("constants must be scalars, vectors, or matrices")
    if np.all(a >= 0):
        s = NONNEG
    elif np.all(a <= 0):
        s = NONPOS
    else:
        s = SIGN_UNKNOWN
    return Expr(CONST, (), Shape(a.shape[0], a.shape[1]), CONSTANT, s, False, value=a)


def var(v: Variable) -> Expr:
    return Expr(VAR, (), v.shape, AFFINE, SIGN_UNKNOWN, False, ref=v)


def param(p: Parameter) -> Expr:
    return Expr(PARAM, (), p.shape, CONSTANT, p.sign, True, ref=p)


def _broadcast_pair(a: Expr, b: Expr, what: str) -> Shape:
    if a.shape == b.shape:
        return a.shape
    if a.shape.is_scalar():
        return b.shape
    if b.shape.is_scalar():
        return a.shape
    raise ModelError(f"{what}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Expr, b: Expr) -> Expr:
    shape = _broadcast_pair(a, b, "add")
    return Expr(ADD, (a, b), shape, curv_join(a.curvature, b.curvature),
                sign_add(a.sign, b.sign), a.has_param or b.has_param)


def neg(a: Expr) -> Expr:
    return Expr(NEG, (a,), a.shape, curv_neg(a.curvature), sign_neg(a.sign),
                a.has_param)


def _mul_curvature(a: Expr, b: Expr) -> str:
    if a.curvature == CONSTANT and b.curvature == CONSTANT:
        return CONSTANT
    if a.curvature == CONSTANT:
        return curv_scale(a.sign, b.curvature)
    if b.curvature == CONSTANT:
        return curv_scale(b.sign, a.curvature)
    return UNKNOWN


def mul(a: Expr, b: Expr) -> Expr:
    shape = _broadcast_pair(a, b, "multiply")
    return Expr(MUL, (a, b), shape, _mul_curvature(a, b), sign_mul(a.sign, b.sign),
                a.has_param or b.has_param)


def matmul(a: Expr, b: Expr) -> Expr:
    if a.shape.cols != b.shape.rows:
        raise ModelError(f"matmul: inner dimensions {a.shape} @ {b.shape} do not agree")
    shape = Shape(a.shape.rows, b.shape.cols)
    return Expr(MATMUL, (a, b), shape, _mul_curvature(a, b), sign_mul(a.sign, b.sign),
                a.has_param or b.has_param)


def index(a: Expr, rows: tuple, cols: tuple) -> Expr:
    r0, r1 = int(rows[0]), int(rows[1])
    c0, c1 = int(cols[0]), int(cols[1])
    if not (0 <= r0 <= r1 < a.shape.rows and 0 <= c0 <= c1 < a.shape.cols):
        raise ModelError(f"index [{r0}:{r1},{c0}:{c1}] out of bounds for {a.shape}")
    return Expr(INDEX, (a,), Shape(r1 - r0 + 1, c1 - c0 + 1), a.curvature, a.sign,
                a.has_param, rows_rng=(r0, r1), cols_rng=(c0, c1))


def transpose(a: Expr) -> Expr:
    return Expr(TRANSPOSE, (a,), Shape(a.shape.cols, a.shape.rows), a.curvature,
                a.sign, a.has_param)


def sum_entries(a: Expr) -> Expr:
    return Expr(SUM, (a,), Shape(1, 1), a.curvature, a.sign, a.has_param)


def _stack(op: str, parts) -> Expr:
    parts = tuple(parts)
    if not parts:
        raise ModelError(f"{op} needs at least one argument")
    if op == HSTACK:
        rows = parts[0].shape.rows
        if any(p.shape.rows != rows for p in parts):
            raise ModelError("hstack: row counts differ")
        shape = Shape(rows, sum(p.shape.cols for p in parts))
    else:
        cols = parts[0].shape.cols
        if any(p.shape.cols != cols for p in parts):
            raise ModelError("vstack: column counts differ")
        shape = Shape(sum(p.shape.rows for p in parts), cols)
    curv = CONSTANT
    sign = parts[0].sign
    for p in parts:
        curv = curv_join(curv, p.curvature)
        sign = sign_add(sign, p.sign)
    return Expr(op, parts, shape, curv, sign, any(p.has_param for p in parts))


def hstack(*parts) -> Expr:
    return _stack(HSTACK, parts)


def vstack(*parts) -> Expr:
    return _stack(VSTACK, parts)


def _atom_curvature(op: str, a: Expr) -> str:
    if a.curvature == CONSTANT:
        return CONSTANT
    if op in (SUM_SQUARES, NORM1, ABS):
        return CONVEX if a.curvature == AFFINE else UNKNOWN
    if op == POS_PART:
        return CONVEX if a.curvature in (AFFINE, CONVEX) else UNKNOWN
    if op == NEG_PART:
        return CONVEX if a.curvature in (AFFINE, CONCAVE) else UNKNOWN
    raise ModelError(f"unknown atom {op}")


def sum_squares(a: Expr) -> Expr:
    return Expr(SUM_SQUARES, (a,), Shape(1, 1), _atom_curvature(SUM_SQUARES, a),
                NONNEG, a.has_param)


def norm1(a: Expr) -> Expr:
    return Expr(NORM1, (a,), Shape(1, 1), _atom_curvature(NORM1, a), NONNEG,
                a.has_param)


def abs_(a: Expr) -> Expr:
    return Expr(ABS, (a,), a.shape, _atom_curvature(ABS, a), NONNEG, a.has_param)


def pos_part(a: Expr) -> Expr:
    return Expr(POS_PART, (a,), a.shape, _atom_curvature(POS_PART, a), NONNEG,
                a.has_param)


def neg_part(a: Expr) -> Expr:
    return Expr(NEG_PART, (a,), a.shape, _atom_curvature(NEG_PART, a), NONNEG,
                a.has_param)


def curvature(e: Expr) -> str:
    """DCP curvature with parameters treated as constants."""
    return e.curvature


def describe(e: Expr) -> str:
    """Short human-readable rendering for reports and error messages."""
    if e.op == CONST:
        if e.shape.is_scalar():
            return repr(float(e.value[0, 0]))
        return f"const{e.shape}"
    if e.op in (VAR, PARAM):
        return e.ref.name
    if e.op == ADD:
        return f"({describe(e.args[0])} + {describe(e.args[1])})"
    if e.op == NEG:
        return f"-{describe(e.args[0])}"
    if e.op == MUL:
        return f"({describe(e.args[0])} .* {describe(e.args[1])})"
    if e.op == MATMUL:
        return f"({describe(e.args[0])} @ {describe(e.args[1])})"
    if e.op == INDEX:
        r, c = e.rows_rng, e.cols_rng
        return f"{describe(e.args[0])}[{r[0]}:{r[1]},{c[0]}:{c[1]}]"
    if e.op == TRANSPOSE:
        return f"{describe(e.args[0])}.T"
    return f"{e.op}({', '.join(describe(a) for a in e.args)})"


def evaluate(e: Expr, var_values: dict, param_values: dict) -> np.ndarray:
    """Numerically evaluate an expression; values keyed by Variable/Parameter id."""
    if e.op == CONST:
        return e.value
    if e.op == VAR:
        return _as_matrix(var_values[e.ref.id], e.shape)
    if e.op == PARAM:
        return _as_matrix(param_values[e.ref.id], e.shape)
    if e.op == ADD:
        return evaluate(e.args[0], var_values, param_values) + \
            evaluate(e.args[1], var_values, param_values)
    if e.op == NEG:
        return -evaluate(e.args[0], var_values, param_values)
    if e.op == MUL:
        return evaluate(e.args[0], var_values, param_values) * \
            evaluate(e.args[1], var_values, param_values)
    if e.op == MATMUL:
        return evaluate(e.args[0], var_values, param_values) @ \
            evaluate(e.args[1], var_values, param_values)
    if e.op == INDEX:
        a = evaluate(e.args[0], var_values, param_values)
        return a[e.rows_rng[0]:e.rows_rng[1] + 1, e.cols_rng[0]:e.cols_rng[1] + 1]
    if e.op == TRANSPOSE:
        return evaluate(e.args[0], var_values, param_values).T
    if e.op == SUM:
        return np.array([[np.sum(evaluate(e.args[0], var_values, param_values))]])
    if e.op == HSTACK:
        return np.hstack([evaluate(a, var_values, param_values) for a in e.args])
    if e.op == VSTACK:
        return np.vstack([evaluate(a, var_values, param_values) for a in e.args])
    a = evaluate(e.args[0], var_values, param_values)
    if e.op == SUM_SQUARES:
        return np.array([[np.sum(a * a)]])
    if e.op == NORM1:
        return np.array([[np.sum(np.abs(a))]])
    if e.op == ABS:
        return np.abs(a)
    if e.op == POS_PART:
        return np.maximum(a, 0.0)
    if e.op == NEG_PART:
        return np.maximum(-a, 0.0)
    raise ModelError(f"cannot evaluate op {e.op!r}")


def _as_matrix(x, shape: Shape) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.shape != (shape.rows, shape.cols):
        raise ModelError(f"value shape {a.shape} does not match declared {shape}")
    return a


def structural_equal(a: Expr, b: Expr) -> bool:
    """Tree equality up to leaf identity by (name, shape, role), not raw ids."""
    if a.op != b.op or a.shape != b.shape:
        return False
    if a.op == CONST:
        return np.array_equal(a.value, b.value)
    if a.op in (VAR, PARAM):
        same = a.ref.name == b.ref.name and a.ref.shape == b.ref.shape
        if a.op == PARAM:
            same = same and a.ref.sign == b.ref.sign and a.ref.sparsity == b.ref.sparsity
        return same
    if a.op == INDEX and (a.rows_rng != b.rows_rng or a.cols_rng != b.cols_rng):
        return False
    return len(a.args) == len(b.args) and \
        all(structural_equal(x, y) for x, y in zip(a.args, b.args))
