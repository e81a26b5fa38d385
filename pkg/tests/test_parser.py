"""Problem-file parsing: round-trips, normalization, and error paths."""

import json

import numpy as np
import pytest

from qpgen import expr as ex
from qpgen.expr import Parameter, Shape, Variable
from qpgen.problem import (Constraint, MINIMIZE, NONPOS_KIND, Problem,
                           problems_equal)
from qpgen.problem_io import ParseError, parse_problem, print_problem
from qpgen.zoo import build_mpc, build_nnls, build_portfolio


@pytest.mark.parametrize("problem", [
    build_nnls(3, 2).problem,
    build_nnls(1, 1).problem,
    build_mpc(6).problem,
    build_portfolio(5).problem,
], ids=["nnls", "nnls-scalar", "mpc", "portfolio"])
def test_round_trip_preserves_structure(problem):
    text = print_problem(problem)
    again = parse_problem(text)
    assert problems_equal(problem, again)
    # printing is a fixed point once parsed
    assert print_problem(again) == text


def test_round_trip_keeps_sparsity_and_sign():
    x = Variable("x", Shape(2, 1))
    S = Parameter("S", Shape(2, 2), sign="nonneg", sparsity=((0, 0), (1, 1)))
    p = Problem(MINIMIZE, ex.sum_squares(ex.param(S) @ ex.var(x)),
                [Constraint(NONPOS_KIND, ex.neg(ex.var(x)))], [x], [S],
                name="sparse")
    again = parse_problem(print_problem(p))
    assert problems_equal(p, again)
    assert again.parameters[0].sparsity == ((0, 0), (1, 1))
    assert again.parameters[0].sign == "nonneg"


def test_inequality_direction_normalization():
    doc = {
        "name": "t",
        "variables": [{"name": "x", "rows": 1, "cols": 1}],
        "parameters": [],
        "minimize": {"op": "sum_squares", "args": [{"var": "x"}]},
        "constraints": [
            {"op": ">=0", "lhs": {"var": "x"}},
            {"op": "<=0", "lhs": {"var": "x"}},
            {"op": "==0", "lhs": {"var": "x"}},
        ],
    }
    p = parse_problem(json.dumps(doc))
    kinds = [c.kind for c in p.constraints]
    assert kinds == ["nonpos", "nonpos", "eq_zero"]
    # x >= 0 arrives as nonpos(-x)
    assert p.constraints[0].expr.op == "neg"


def test_malformed_json_reports_position():
    with pytest.raises(ParseError) as err:
        parse_problem("{ not json }")
    assert "line" in str(err.value)


def test_unknown_symbol_and_duplicates():
    base = {
        "name": "t",
        "variables": [{"name": "x", "rows": 1, "cols": 1}],
        "parameters": [],
        "minimize": {"op": "sum_squares", "args": [{"var": "y"}]},
        "constraints": [],
    }
    with pytest.raises(ParseError):
        parse_problem(json.dumps(base))
    dup = dict(base)
    dup["minimize"] = {"op": "sum_squares", "args": [{"var": "x"}]}
    dup["parameters"] = [{"name": "x", "rows": 1, "cols": 1}]
    with pytest.raises(ParseError):
        parse_problem(json.dumps(dup))


def test_requires_exactly_one_sense():
    doc = {
        "variables": [{"name": "x", "rows": 1, "cols": 1}],
        "minimize": {"var": "x"},
        "maximize": {"var": "x"},
    }
    with pytest.raises(ParseError):
        parse_problem(json.dumps(doc))
    with pytest.raises(ParseError):
        parse_problem(json.dumps({"variables": []}))


def test_bad_constraint_op():
    doc = {
        "variables": [{"name": "x", "rows": 1, "cols": 1}],
        "minimize": {"op": "sum_squares", "args": [{"var": "x"}]},
        "constraints": [{"op": "<", "lhs": {"var": "x"}}],
    }
    with pytest.raises(ParseError):
        parse_problem(json.dumps(doc))


def test_shape_errors_carry_expression_path():
    doc = {
        "variables": [{"name": "x", "rows": 2, "cols": 1}],
        "parameters": [{"name": "A", "rows": 3, "cols": 3}],
        "minimize": {"op": "sum_squares",
                     "args": [{"op": "matmul",
                               "args": [{"param": "A"}, {"var": "x"}]}]},
    }
    with pytest.raises(ParseError) as err:
        parse_problem(json.dumps(doc))
    assert "minimize" in str(err.value)


def test_constants_survive_round_trip():
    x = Variable("x", Shape(2, 1))
    c = ex.constant(np.array([[1.5], [-2.0]]))
    p = Problem(MINIMIZE, ex.sum_squares(ex.var(x) - c), [], [x], [],
                name="const")
    again = parse_problem(print_problem(p))
    assert problems_equal(p, again)
