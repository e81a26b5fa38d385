"""Parametrized QP toolchain: modeling, canonicalization, solving, codegen.

Model a family of convex quadratic programs with named parameters, check it
against the parameter-affinity discipline, canonicalize it once to sparse
standard form, then either solve in-process with a factorization-caching
ADMM solver or emit a freestanding C solver for the family.
"""

from .expr import Parameter, Shape, Variable
from .problem import Constraint, Problem, check_dpp, validate
from .problem_io import parse_problem, print_problem
from .canon import (CanonQP, canonicalize, eval_params, partial_update,
                    retrieve)
from .solver import Settings, SolveResult, setup, solve, update_matrix_values, \
    update_vectors
from .codegen import GenConfig, build_fixtures, emit_report, generate, \
    write_bundle
from .bench import BenchConfig, run_bench

__version__ = "0.1.0"

__all__ = [
    "BenchConfig", "CanonQP", "Constraint", "GenConfig", "Parameter",
    "Problem", "Settings", "Shape", "SolveResult", "Variable",
    "build_fixtures", "canonicalize", "check_dpp", "emit_report",
    "eval_params", "generate", "parse_problem", "partial_update",
    "print_problem", "retrieve", "run_bench", "setup", "solve",
    "update_matrix_values", "update_vectors", "validate", "write_bundle",
]
