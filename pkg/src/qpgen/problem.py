"""Problems, DCP validation, and the parameter-discipline (DPP) gate.

A problem is DPP-compliant when every product pairs parameters with a
parameter-free factor and parameters enter nonlinear atoms only through
affine arguments.  Compliance is what makes the canonical-data map affine
in the user parameters, which everything downstream relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

from .expr import (AFFINE, ATOMS, CONCAVE, CONSTANT, CONVEX, MATMUL, MUL,
                   NEG, PARAM, VAR, Expr, ModelError, Parameter, Variable,
                   describe, neg, structural_equal)

EQ_ZERO = "eq_zero"
NONPOS_KIND = "nonpos"

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


@dataclass(frozen=True)
class Constraint:
    kind: str       # eq_zero: expr == 0 (affine); nonpos: expr <= 0 (convex)
    expr: Expr

    def __post_init__(self):
        if self.kind not in (EQ_ZERO, NONPOS_KIND):
            raise ModelError(f"unknown constraint kind {self.kind!r}")


@dataclass(frozen=True)
class Problem:
    sense: str
    objective: Expr
    constraints: tuple
    variables: tuple
    parameters: tuple
    name: str = "problem"

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "parameters", tuple(self.parameters))

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def parameter(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def var_count(self) -> int:
        """Total scalar entries across declared user variables."""
        return sum(v.shape.size for v in self.variables)


def _collect_leaves(e: Expr, vars_seen: set, params_seen: set) -> None:
    if e.op == VAR:
        vars_seen.add(e.ref.id)
    elif e.op == PARAM:
        params_seen.add(e.ref.id)
    for a in e.args:
        _collect_leaves(a, vars_seen, params_seen)


def validate(p: Problem) -> Problem:
    """DCP-validate and normalize a problem; returns the minimize-sense form.

    Checks: unique names/ids, all referenced leaves declared, scalar objective
    of the right curvature for the sense, affine equalities, convex
    inequalities.  Maximization is rewritten as minimization of the negation.
    """
    if p.sense not in (MINIMIZE, MAXIMIZE):
        raise ModelError(f"unknown sense {p.sense!r}")
    names = [v.name for v in p.variables] + [q.name for q in p.parameters]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ModelError(f"duplicate declaration names: {sorted(dupes)}")
    ids = [v.id for v in p.variables] + [q.id for q in p.parameters]
    if len(set(ids)) != len(ids):
        raise ModelError("variable/parameter ids are not unique")

    declared_vars = {v.id for v in p.variables}
    declared_params = {q.id for q in p.parameters}
    used_vars, used_params = set(), set()
    _collect_leaves(p.objective, used_vars, used_params)
    for c in p.constraints:
        _collect_leaves(c.expr, used_vars, used_params)
    if not used_vars <= declared_vars:
        raise ModelError("expression references an undeclared variable")
    if not used_params <= declared_params:
        raise ModelError("expression references an undeclared parameter")

    if not p.objective.shape.is_scalar():
        raise ModelError(f"objective must be scalar, got {p.objective.shape}")
    ok_curv = (CONSTANT, AFFINE, CONVEX) if p.sense == MINIMIZE else \
        (CONSTANT, AFFINE, CONCAVE)
    if p.objective.curvature not in ok_curv:
        raise ModelError(f"objective has curvature {p.objective.curvature}, "
                         f"not allowed for {p.sense}")
    for i, c in enumerate(p.constraints):
        if c.kind == EQ_ZERO and c.expr.curvature not in (CONSTANT, AFFINE):
            raise ModelError(f"constraint {i}: equality requires an affine "
                             f"expression, got {c.expr.curvature}")
        if c.kind == NONPOS_KIND and c.expr.curvature not in (CONSTANT, AFFINE, CONVEX):
            raise ModelError(f"constraint {i}: inequality requires a convex "
                             f"expression, got {c.expr.curvature}")

    if p.sense == MAXIMIZE:
        return Problem(MINIMIZE, neg(p.objective), p.constraints, p.variables,
                       p.parameters, p.name)
    return p


@dataclass(frozen=True)
class DppViolation:
    path: str           # e.g. "constraints[2].args[0].args[1]"
    node: str           # rendering of the offending subexpression
    reason: str


@dataclass(frozen=True)
class DppReport:
    compliant: bool
    violations: tuple = ()

    def __str__(self):
        if self.compliant:
            return "DPP-compliant"
        lines = [f"{len(self.violations)} DPP violation(s):"]
        for v in self.violations:
            lines.append(f"  at {v.path}: {v.node} -- {v.reason}")
        return "\n".join(lines)


def _dpp_walk(e: Expr, path: str, out: list) -> None:
    if e.op in (MUL, MATMUL):
        a, b = e.args
        if a.has_param and b.has_param:
            out.append(DppViolation(
                path, describe(e),
                "product of two parameter-dependent operands is not "
                "parameter-affine"))
    if e.op in ATOMS:
        arg = e.args[0]
        if arg.has_param and arg.curvature not in (CONSTANT, AFFINE):
            out.append(DppViolation(
                path, describe(e),
                f"{e.op} applied to a parameter-dependent non-affine argument"))
    for i, a in enumerate(e.args):
        _dpp_walk(a, f"{path}.args[{i}]", out)


def check_dpp(p: Problem) -> DppReport:
    """Report whether every parameter entry reaches the canonical data affinely."""
    out: list = []
    _dpp_walk(p.objective, "objective", out)
    for i, c in enumerate(p.constraints):
        _dpp_walk(c.expr, f"constraints[{i}]", out)
    return DppReport(not out, tuple(out))


def problems_equal(a: Problem, b: Problem) -> bool:
    """Structural equality: declarations, sense, objective, constraints."""
    if a.sense != b.sense or a.name != b.name:
        return False
    if len(a.variables) != len(b.variables) or len(a.parameters) != len(b.parameters):
        return False
    for va, vb in zip(a.variables, b.variables):
        if va.name != vb.name or va.shape != vb.shape:
            return False
    for pa, pb in zip(a.parameters, b.parameters):
        if (pa.name, pa.shape, pa.sign, pa.sparsity) != (pb.name, pb.shape, pb.sign, pb.sparsity):
            return False
    if not structural_equal(a.objective, b.objective):
        return False
    if len(a.constraints) != len(b.constraints):
        return False
    return all(ca.kind == cb.kind and structural_equal(ca.expr, cb.expr)
               for ca, cb in zip(a.constraints, b.constraints))
