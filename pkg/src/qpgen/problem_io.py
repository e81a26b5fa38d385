"""Problem-file parsing and printing.

The file format is a UTF-8 JSON document: declarations plus one objective
expression tree and a constraint list.  `parse_problem(print_problem(p))` is
structurally identical to `p`.
"""

from __future__ import annotations

import json

import numpy as np

from . import expr as ex
from .problem import (EQ_ZERO, MAXIMIZE, MINIMIZE, NONPOS_KIND, Constraint,
                      Problem)


class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, column {col}: {message}"
        super().__init__(message)


_ATOM_BUILDERS = {
    "add": None,  # handled n-ary
    "neg": lambda args: ex.neg(args[0]),
    "multiply": lambda args: ex.mul(args[0], args[1]),
    "matmul": lambda args: ex.matmul(args[0], args[1]),
    "transpose": lambda args: ex.transpose(args[0]),
    "sum": lambda args: ex.sum_entries(args[0]),
    "hstack": lambda args: ex.hstack(*args),
    "vstack": lambda args: ex.vstack(*args),
    "sum_squares": lambda args: ex.sum_squares(args[0]),
    "norm1": lambda args: ex.norm1(args[0]),
    "abs": lambda args: ex.abs_(args[0]),
    "pos_part": lambda args: ex.pos_part(args[0]),
    "neg_part": lambda args: ex.neg_part(args[0]),
}

_ARITY = {"neg": 1, "multiply": 2, "matmul": 2, "transpose": 1, "sum": 1,
          "sum_squares": 1, "norm1": 1, "abs": 1, "pos_part": 1, "neg_part": 1}


def _parse_node(node, scope: dict, where: str) -> ex.Expr:
    if not isinstance(node, dict):
        raise ParseError(f"{where}: expression node must be an object")
    if "var" in node or "param" in node:
        key = "var" if "var" in node else "param"
        name = node[key]
        hit = scope.get(name)
        if hit is None:
            raise ParseError(f"{where}: undeclared symbol {name!r}")
        kind, ref = hit
        if kind != key:
            raise ParseError(f"{where}: {name!r} is a {kind}, referenced as {key}")
        return ex.var(ref) if key == "var" else ex.param(ref)
    if "const" in node:
        try:
            return ex.constant(np.asarray(node["const"], dtype=np.float64))
        except (ValueError, ex.ModelError) as e:
            raise ParseError(f"{where}: bad constant: {e}") from None
    op = node.get("op")
    if op is None:
        raise ParseError(f"{where}: node has no 'op', 'var', 'param', or 'const'")
    args = [_parse_node(a, scope, f"{where}.args[{i}]")
            for i, a in enumerate(node.get("args", []))]
    try:
        if op == "index":
            if len(args) != 1 or "rows" not in node or "cols" not in node:
                raise ParseError(f"{where}: index needs one arg plus rows/cols")
            return ex.index(args[0], tuple(node["rows"]), tuple(node["cols"]))
        if op == "add":
            if len(args) < 2:
                raise ParseError(f"{where}: add needs at least two args")
            out = args[0]
            for a in args[1:]:
                out = ex.add(out, a)
            return out
        builder = _ATOM_BUILDERS.get(op)
        if builder is None:
            raise ParseError(f"{where}: unknown op {op!r}")
        if len(args) != _ARITY[op]:
            raise ParseError(f"{where}: op {op!r} takes {_ARITY[op]} args, "
                             f"got {len(args)}")
        return builder(args)
    except ex.ModelError as e:
        raise ParseError(f"{where}: {e}") from None


def parse_problem(text: str) -> Problem:
    """Parse a problem-file string into a validated-shape Problem.

    Raises ParseError with line/column on malformed JSON, and with an
    expression path on shape mismatches, undeclared symbols, or duplicates.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")

    scope: dict = {}
    variables, parameters = [], []
    for d in doc.get("variables", []):
        name = d["name"]
        if name in scope:
            raise ParseError(f"duplicate name {name!r}")
        v = ex.Variable(name, ex.Shape(int(d["rows"]), int(d["cols"])))
        scope[name] = ("var", v)
        variables.append(v)
    for d in doc.get("parameters", []):
        name = d["name"]
        if name in scope:
            raise ParseError(f"duplicate name {name!r}")
        sparsity = d.get("sparsity")
        if sparsity is not None:
            sparsity = tuple((int(r), int(c)) for r, c in sparsity)
        p = ex.Parameter(name, ex.Shape(int(d["rows"]), int(d["cols"])),
                         d.get("sign", ex.SIGN_UNKNOWN), sparsity)
        scope[name] = ("param", p)
        parameters.append(p)

    if ("minimize" in doc) == ("maximize" in doc):
        raise ParseError("exactly one of 'minimize'/'maximize' is required")
    sense = MINIMIZE if "minimize" in doc else MAXIMIZE
    objective = _parse_node(doc[sense], scope, sense)

    constraints = []
    for i, c in enumerate(doc.get("constraints", [])):
        where = f"constraints[{i}]"
        op = c.get("op")
        lhs = _parse_node(c.get("lhs"), scope, where)
        if op == "==0":
            constraints.append(Constraint(EQ_ZERO, lhs))
        elif op == "<=0":
            constraints.append(Constraint(NONPOS_KIND, lhs))
        elif op == ">=0":
            constraints.append(Constraint(NONPOS_KIND, ex.neg(lhs)))
        else:
            raise ParseError(f"{where}: op must be '<=0', '==0', or '>=0'")

    return Problem(sense, objective, tuple(constraints), tuple(variables),
                   tuple(parameters), doc.get("name", "problem"))


def _node_to_json(e: ex.Expr):
    if e.op == ex.CONST:
        v = e.value
        return {"const": v.tolist()}
    if e.op == ex.VAR:
        return {"var": e.ref.name}
    if e.op == ex.PARAM:
        return {"param": e.ref.name}
    if e.op == ex.INDEX:
        return {"op": "index", "args": [_node_to_json(e.args[0])],
                "rows": list(e.rows_rng), "cols": list(e.cols_rng)}
    name = {ex.ADD: "add", ex.NEG: "neg", ex.MUL: "multiply",
            ex.MATMUL: "matmul", ex.TRANSPOSE: "transpose", ex.SUM: "sum",
            ex.HSTACK: "hstack", ex.VSTACK: "vstack",
            ex.SUM_SQUARES: "sum_squares", ex.NORM1: "norm1", ex.ABS: "abs",
            ex.POS_PART: "pos_part", ex.NEG_PART: "neg_part"}[e.op]
    return {"op": name, "args": [_node_to_json(a) for a in e.args]}


def print_problem(p: Problem) -> str:
    """Serialize a Problem to the problem-file format."""
    doc: dict = {"name": p.name}
    doc["variables"] = [{"name": v.name, "rows": v.shape.rows, "cols": v.shape.cols}
                        for v in p.variables]
    params = []
    for q in p.parameters:
        d = {"name": q.name, "rows": q.shape.rows, "cols": q.shape.cols}
        if q.sign != ex.SIGN_UNKNOWN:
            d["sign"] = q.sign
        if q.sparsity is not None:
            d["sparsity"] = [list(rc) for rc in q.sparsity]
        params.append(d)
    doc["parameters"] = params
    doc[p.sense] = _node_to_json(p.objective)
    cons = []
    for c in p.constraints:
        cons.append({"op": "==0" if c.kind == EQ_ZERO else "<=0",
                     "lhs": _node_to_json(c.expr)})
    doc["constraints"] = cons
    return json.dumps(doc, indent=2)
