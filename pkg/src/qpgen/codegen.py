"""Embedded C source emission for one canonicalized problem family.

The emitted bundle is self-contained: generated sources plus a copy of the
hand-written freestanding runtime.  Per-parameter update functions stage
values and mark the parameter dirty; the generated solve entry point
refreshes only the canonical-vector rows those parameters feed (rolled
loops over emitted row tables), refactorizes only when a matrix segment
changed, runs the warm-started iteration, and exposes solution blocks
through retrieval accessors.  Generation is a pure function of its inputs;
output text is byte-identical across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .canon import AffineMap, CanonQP, DependencyTable, RetrievalMap, \
    _norm_value, eval_params, partial_update
from .solver import STATUS_CODES, Settings, setup, solve, \
    update_matrix_values, update_vectors
from .sparse import flatten_value

__all__ = [
    "FixtureCase", "GenConfig", "GenError", "SizeReport", "SourceBundle",
    "build_fixtures", "emit_report", "generate", "write_bundle",
]

_RUNTIME_FILES = ("qpgen_runtime.h", "qpgen_runtime.c")
_INF_SENTINEL = 1e30
_SEG_BITS = {0: 1, 1: 2, 2: 4, 3: 8, 4: 16}    # P, q, l, u, A

_C_KEYWORDS = {
    "auto", "break", "case", "char", "const", "continue", "default", "do",
    "double", "else", "enum", "extern", "float", "for", "goto", "if",
    "inline", "int", "long", "register", "restrict", "return", "short",
    "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while",
}


class GenError(ValueError):
    """Invalid generation request (bad config, name collision, overflow)."""


@dataclass(frozen=True)
class GenConfig:
    """Emission knobs for one bundle.

    fixed_iterations caps the iteration count for hard-real-time builds;
    the solver then returns its best iterate with the iteration-limit
    status when unconverged.
    """

    prefix: str = "cpg"
    float_width: int = 64
    emit_fixtures: bool = True
    out_dir: str = "."
    fixed_iterations: int | None = None

    def validate(self) -> None:
        if not self.prefix.isidentifier() or self.prefix in _C_KEYWORDS:
            raise GenError(f"prefix {self.prefix!r} is not a usable C "
                           "identifier prefix")
        if self.float_width not in (32, 64):
            raise GenError("float_width must be 32 or 64")
        if self.fixed_iterations is not None and self.fixed_iterations < 1:
            raise GenError("fixed_iterations must be positive")


@dataclass(frozen=True)
class FixtureCase:
    """One replay step: updates applied, then expected post-solve state."""

    updates: tuple             # (param name, flat values) pairs, layout order
    expected_theta: np.ndarray
    expected_x_tilde: np.ndarray
    expected_x_user: np.ndarray
    expected_status: int


@dataclass(frozen=True)
class SourceBundle:
    """Generated file texts plus the copied runtime and a manifest."""

    prefix: str
    files: dict                # name -> text, emission order
    manifest: dict


@dataclass(frozen=True)
class SizeReport:
    files: dict                # name -> source bytes
    total_source_bytes: int
    static_data_bytes: int
    object_sizes: dict | None = None


# ---------------------------------------------------------------------------
# fixture construction (reference replay through the in-process solver)


def build_fixtures(canon: CanonQP, steps, settings: Settings) -> tuple:
    """Replay a parameter-update sequence and record expected outcomes.

    steps[0] must assign every parameter; later steps may be partial.  The
    workspace persists across steps (warm starting and factorization reuse),
    exactly as the generated solver behaves.
    """
    if not steps:
        raise GenError("fixture replay needs at least one step")
    by_name = {p.name: p for p in canon.params}
    if set(steps[0]) != set(by_name):
        raise GenError("the first fixture step must assign every parameter")

    cases = []
    cp = eval_params(canon, steps[0])
    ws = setup(canon.P_with(cp.P_values), cp.q, canon.A_with(cp.A_values),
               cp.l, cp.u, settings)
    for t, changed in enumerate(steps):
        if t > 0:
            touched = partial_update(canon, cp, changed)
            t_p, t_q, t_l, t_u, t_a = touched
            if t_q or t_l or t_u:
                update_vectors(ws, q=cp.q if t_q else None,
                               l=cp.l if t_l else None,
                               u=cp.u if t_u else None)
            if t_p or t_a:
                update_matrix_values(ws,
                                     P_values=cp.P_values if t_p else None,
                                     A_values=cp.A_values if t_a else None)
        res = solve(ws)
        x_user = res.x_tilde[canon.rmap.indices] if canon.rmap.selector \
            else canon.rmap.apply(res.x_tilde)
        updates = tuple(
            (p.name, flatten_value(p, _norm_value(p, changed[p.name])))
            for p in canon.params if p.name in changed)
        cases.append(FixtureCase(
            updates=updates,
            expected_theta=cp.theta.copy(),
            expected_x_tilde=res.x_tilde.copy(),
            expected_x_user=x_user.copy(),
            expected_status=STATUS_CODES[res.status]))
    return tuple(cases)


# ---------------------------------------------------------------------------
# literal formatting


def _fmt_float(v: float) -> str:
    if np.isnan(v):
        raise GenError("cannot emit NaN")
    if np.isinf(v) or abs(v) >= _INF_SENTINEL:
        return "1e30" if v > 0 else "-1e30"
    text = repr(float(v))
    return text


class _Emitter:
    """Array-literal emission with static-size accounting."""

    def __init__(self) -> None:
        self.float_entries = 0
        self.int_entries = 0

    def float_array(self, name: str, values, const: bool = True,
                    static: bool = False) -> str:
        values = np.asarray(values, dtype=float).ravel()
        self.float_entries += max(values.size, 1)
        body = self._wrap([_fmt_float(v) for v in values])
        qual = ("static " if static else "") + ("const " if const else "")
        if values.size == 0:
            return f"{qual}qpg_float {name}[1] = {{0}};\n"
        return (f"{qual}qpg_float {name}[{values.size}] = {{\n"
                f"{body}}};\n")

    def int_array(self, name: str, values, const: bool = True,
                  static: bool = False) -> str:
        values = np.asarray(values, dtype=np.int64).ravel()
        if values.size and (values.max(initial=0) >= 2 ** 31
                            or values.min(initial=0) < -2 ** 31):
            raise GenError("pattern too large for 32-bit indices")
        self.int_entries += max(values.size, 1)
        body = self._wrap([str(int(v)) for v in values])
        qual = ("static " if static else "") + ("const " if const else "")
        if values.size == 0:
            return f"{qual}qpg_int {name}[1] = {{0}};\n"
        return (f"{qual}qpg_int {name}[{values.size}] = {{\n"
                f"{body}}};\n")

    def zero_float(self, name: str, size: int) -> str:
        self.float_entries += max(size, 1)
        return f"qpg_float {name}[{max(size, 1)}];\n"

    def zero_int(self, name: str, size: int) -> str:
        self.int_entries += max(size, 1)
        return f"qpg_int {name}[{max(size, 1)}];\n"

    @staticmethod
    def _wrap(tokens, per_line: int = 8) -> str:
        lines = []
        for i in range(0, len(tokens), per_line):
            lines.append("    " + ", ".join(tokens[i:i + per_line]) + ",")
        if lines:
            lines[-1] = lines[-1].rstrip(",")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# generation


def _float_typedef(width: int) -> str:
    return "double" if width == 64 else "float"


def _settings_literal(settings: Settings, config: GenConfig) -> str:
    max_iter = config.fixed_iterations or settings.max_iter
    fields = [
        _fmt_float(settings.rho), _fmt_float(1.0 / settings.rho),
        _fmt_float(settings.sigma), _fmt_float(settings.alpha),
        _fmt_float(settings.eps_abs), _fmt_float(settings.eps_rel),
        _fmt_float(settings.eps_pinf), _fmt_float(settings.eps_dinf),
        str(int(max_iter)), str(int(settings.check_interval)),
    ]
    return "{ " + ", ".join(fields) + " }"


def generate(canon: CanonQP, cmap: AffineMap, rmap: RetrievalMap,
             deps: DependencyTable, config: GenConfig,
             settings: Settings | None = None,
             fixtures: tuple = ()) -> SourceBundle:
    """Emit the C bundle for one canonicalized family."""
    config.validate()
    settings = settings or Settings()
    settings.validate()
    p = config.prefix
    ftype = _float_typedef(config.float_width)

    n, m = canon.n, canon.m
    theta_size = canon.theta_size
    total_flat = canon.layout.total + 1

    api_names = [f"{p}_update_{prm.name}" for prm in canon.params]
    api_names += [f"{p}_get_{name}" for name, _, _, _ in canon.var_info]
    api_names += [f"{p}_solve", f"{p}_iterations"]
    if len(set(api_names)) != len(api_names):
        raise GenError("identifier collision after prefixing")

    # KKT assembly and symbolic-factorization tables come from a structural
    # setup on zeroed values; only patterns and orderings are used.
    ws = setup(canon.P_with(np.zeros(canon.nnz_P)), np.zeros(n),
               canon.A_with(np.zeros(canon.nnz_A)), np.zeros(m), np.zeros(m),
               settings)
    factor = ws.factor
    nnz_k = factor.Kx.size
    lnnz = factor.Lx.size

    # initial canonical vector: the constant column applied to zero params
    flat0 = np.zeros(total_flat)
    flat0[-1] = 1.0
    theta0 = np.zeros(theta_size)
    cmap.recompute(flat0, np.arange(theta_size, dtype=np.int64), theta0)

    em = _Emitter()
    files: dict[str, str] = {}

    files[f"{p}.h"] = _emit_header(canon, config, ftype)
    files[f"{p}_workspace.c"] = _emit_workspace(
        canon, config, em, ws, theta0, flat0, settings)
    files[f"{p}_canon.c"] = _emit_canon(canon, config, deps, em)
    files[f"{p}_solve.c"] = _emit_solve(canon, config, nnz_k)
    fixture_floats_before = em.float_entries
    fixture_ints_before = em.int_entries
    if config.emit_fixtures and fixtures:
        files[f"{p}_fixtures.c"] = _emit_fixtures(canon, config, em, fixtures)
    fixture_float_entries = em.float_entries - fixture_floats_before
    fixture_int_entries = em.int_entries - fixture_ints_before
    files[f"{p}_example_main.c"] = _emit_example_main(canon, config)

    files["qpgen_conf.h"] = (
        "/* Generated build configuration: one float width for every\n"
        " * translation unit in this bundle. */\n"
        "#ifndef QPGEN_CONF_H\n"
        "#define QPGEN_CONF_H\n"
        "\n"
        f"#define QPG_FLOAT {ftype}\n"
        "\n"
        "#endif /* QPGEN_CONF_H */\n")
    for rt in _RUNTIME_FILES:
        files[rt] = (resources.files("qpgen") / "c_runtime" / rt).read_text()

    width_bytes = config.float_width // 8
    solver_floats = em.float_entries - fixture_float_entries
    solver_ints = em.int_entries - fixture_int_entries
    static_bytes = width_bytes * solver_floats + 4 * solver_ints
    manifest = {
        "family": canon.name,
        "prefix": p,
        "float_width": config.float_width,
        "n": n, "m": m,
        "theta_size": theta_size,
        "nnz_P": canon.nnz_P, "nnz_A": canon.nnz_A,
        "nnz_C": int(cmap.C.nnz),
        "kkt_nnz": int(nnz_k), "factor_nnz": int(lnnz),
        "parameters": [
            {"name": prm.name, "size": canon.layout.sizes[prm.id]}
            for prm in canon.params],
        "variables": [
            {"name": name, "rows": rows, "cols": cols}
            for name, rows, cols, _ in canon.var_info],
        "float_entries": solver_floats,
        "int_entries": solver_ints,
        "static_data_bytes": static_bytes,
        "fixture_count": len(fixtures) if config.emit_fixtures else 0,
        "fixture_data_bytes": (width_bytes * fixture_float_entries
                               + 4 * fixture_int_entries),
        "files": {name: len(text.encode()) for name, text in files.items()},
        "total_bytes": sum(len(t.encode()) for t in files.values()),
    }
    return SourceBundle(prefix=p, files=files, manifest=manifest)


def _emit_header(canon: CanonQP, config: GenConfig, ftype: str) -> str:
    p = config.prefix
    guard = f"{p.upper()}_H"
    lines = [
        f"/* Generated solver interface for problem family "
        f"'{canon.name}'.\n"
        f" *\n"
        f" * All state lives in one static workspace: calls are "
        f"single-threaded\n"
        f" * and the API is not re-entrant.  Iterates persist across solves "
        f"(warm\n"
        f" * starting).  Status codes: 0 solved, 1 iteration limit reached,\n"
        f" * 2 primal infeasibility certificate, 3 dual infeasibility "
        f"certificate,\n"
        f" * -1 numeric breakdown (not expected for convex data).\n"
        f" */",
        f"#ifndef {guard}",
        f"#define {guard}",
        "",
        f"typedef {ftype} {p}_float;",
        "",
    ]
    for prm in canon.params:
        size = canon.layout.sizes[prm.id]
        what = "stored entries, column-major" if prm.sparsity is not None \
            else "entries in column-major order"
        lines.append(f"/* stage {size} value{'s' if size != 1 else ''} "
                     f"({what}) and mark '{prm.name}' dirty */")
        lines.append(f"void {p}_update_{prm.name}(const {p}_float *values);")
    lines.append("")
    lines.append("/* refresh dirty canonical rows, refactorize if a matrix "
                 "segment changed,")
    lines.append(" * then iterate from the previous solution; returns a "
                 "status code */")
    lines.append(f"int {p}_solve(void);")
    lines.append("")
    lines.append(f"/* iterations consumed by the last {p}_solve call */")
    lines.append(f"int {p}_iterations(void);")
    lines.append("")
    for name, rows, cols, _ in canon.var_info:
        lines.append(f"/* solution block '{name}' ({rows} x {cols}, "
                     f"column-major, {rows * cols} entries) */")
        lines.append(f"const {p}_float *{p}_get_{name}(void);")
    lines.append("")
    lines.append(f"#endif /* {guard} */")
    return "\n".join(lines) + "\n"


def _emit_workspace(canon: CanonQP, config: GenConfig, em: _Emitter,
                    ws, theta0: np.ndarray, flat0: np.ndarray,
                    settings: Settings) -> str:
    p = config.prefix
    n, m, nk = canon.n, canon.m, canon.n + canon.m
    seg = canon.seg
    factor = ws.factor
    n_params = len(canon.params)

    parts = [
        f"/* Generated static data and workspace for '{canon.name}'. */\n"
        f"#include \"qpgen_runtime.h\"\n\n"
    ]
    parts.append(em.float_array(f"{p}_flat", flat0, const=False))
    parts.append(em.float_array(f"{p}_theta", theta0, const=False))
    parts.append(em.int_array(f"{p}_Cp", canon.cmap.indptr))
    parts.append(em.int_array(f"{p}_Ci", canon.cmap.indices))
    parts.append(em.float_array(f"{p}_Cx", canon.cmap.data))
    parts.append(em.int_array(f"{p}_Pp", canon.P_pattern.col_ptr))
    parts.append(em.int_array(f"{p}_Pi", canon.P_pattern.row_idx))
    parts.append(em.int_array(f"{p}_Ap", canon.A_pattern.col_ptr))
    parts.append(em.int_array(f"{p}_Ai", canon.A_pattern.row_idx))
    parts.append(em.int_array(f"{p}_Kp", factor.Kp))
    parts.append(em.int_array(f"{p}_Ki", factor.Ki))
    parts.append(em.zero_float(f"{p}_Kx", factor.Kx.size))
    parts.append(em.float_array(f"{p}_kkt_base", ws.kkt_base))
    parts.append(em.int_array(f"{p}_pslots", ws.p_slots))
    parts.append(em.int_array(f"{p}_aslots", ws.a_slots))
    parts.append(em.int_array(f"{p}_perm", factor.perm))
    parts.append(em.int_array(f"{p}_parent", factor.parent))
    parts.append(em.int_array(f"{p}_Lnz", factor.Lnz))
    parts.append(em.int_array(f"{p}_Lp", factor.Lp))
    parts.append(em.zero_int(f"{p}_Li", factor.Li.size))
    parts.append(em.zero_float(f"{p}_Lx", factor.Lx.size))
    parts.append(em.zero_float(f"{p}_D", nk))
    parts.append(em.zero_float(f"{p}_Dinv", nk))
    parts.append(em.zero_float(f"{p}_yvals", nk))
    parts.append(em.zero_int(f"{p}_ymark", nk))
    parts.append(em.zero_int(f"{p}_yidx", nk))
    parts.append(em.zero_int(f"{p}_elim", nk))
    parts.append(em.zero_int(f"{p}_nextcol", nk))
    parts.append(em.zero_float(f"{p}_xv", n))
    parts.append(em.zero_float(f"{p}_yv", m))
    parts.append(em.zero_float(f"{p}_zv", m))
    parts.append(em.zero_float(f"{p}_rhs", nk))
    parts.append(em.zero_float(f"{p}_wrk", nk))
    parts.append(em.zero_float(f"{p}_axv", m))
    parts.append(em.zero_float(f"{p}_pxv", n))
    parts.append(em.zero_float(f"{p}_atyv", n))
    parts.append(em.zero_int(f"{p}_dirty", n_params))
    em.int_entries += 1
    parts.append(f"qpg_int {p}_needs_factor = 1;\n")
    em.float_entries += 8
    em.int_entries += 2
    parts.append(f"const qpg_settings {p}_settings = "
                 f"{_settings_literal(settings, config)};\n")
    parts.append(
        f"qpg_workspace {p}_ws = {{\n"
        f"    {n}, {m}, {nk},\n"
        f"    {p}_Pp, {p}_Pi, {p}_theta + {seg[0]},\n"
        f"    {p}_Ap, {p}_Ai, {p}_theta + {seg[4]},\n"
        f"    {p}_theta + {seg[1]}, {p}_theta + {seg[2]}, "
        f"{p}_theta + {seg[3]},\n"
        f"    {p}_Kp, {p}_Ki, {p}_Kx, {p}_perm,\n"
        f"    {p}_parent, {p}_Lnz, {p}_Lp, {p}_Li, {p}_Lx, {p}_D, "
        f"{p}_Dinv,\n"
        f"    {p}_yvals, {p}_ymark, {p}_yidx, {p}_elim, {p}_nextcol,\n"
        f"    {p}_xv, {p}_yv, {p}_zv,\n"
        f"    {p}_rhs, {p}_wrk, {p}_axv, {p}_pxv, {p}_atyv,\n"
        f"    0, (qpg_float)0.0, (qpg_float)0.0\n"
        f"}};\n")
    return "".join(parts)


def _emit_canon(canon: CanonQP, config: GenConfig,
                deps: DependencyTable, em: _Emitter) -> str:
    p = config.prefix
    parts = [
        f"/* Generated canonicalization for '{canon.name}': parameter "
        f"staging,\n"
        f" * row refresh over emitted dependency tables, and solution "
        f"retrieval. */\n"
        f"#include \"qpgen_runtime.h\"\n"
        f"#include \"{p}.h\"\n\n"
        f"extern qpg_float {p}_flat[];\n"
        f"extern qpg_float {p}_theta[];\n"
        f"extern const qpg_int {p}_Cp[];\n"
        f"extern const qpg_int {p}_Ci[];\n"
        f"extern const qpg_float {p}_Cx[];\n"
        f"extern qpg_int {p}_dirty[];\n"
        f"extern qpg_workspace {p}_ws;\n\n"
    ]
    for prm in canon.params:
        rows = deps.rows_by_param[prm.name]
        parts.append(em.int_array(f"{p}_rows_{prm.name}", rows))
    parts.append(
        f"\nstatic void {p}_refresh(const qpg_int *rows, qpg_int count)\n"
        f"{{\n"
        f"    qpg_int r, k;\n"
        f"    for (r = 0; r < count; r++) {{\n"
        f"        const qpg_int row = rows[r];\n"
        f"        qpg_float acc = (qpg_float)0.0;\n"
        f"        for (k = {p}_Cp[row]; k < {p}_Cp[row + 1]; k++) {{\n"
        f"            acc += {p}_Cx[k] * {p}_flat[{p}_Ci[k]];\n"
        f"        }}\n"
        f"        {p}_theta[row] = acc;\n"
        f"    }}\n"
        f"}}\n\n")
    for idx, prm in enumerate(canon.params):
        lo, hi = canon.layout.column_range(prm.id)
        size = hi - lo
        parts.append(
            f"void {p}_update_{prm.name}(const {p}_float *values)\n"
            f"{{\n"
            f"    qpg_int i;\n"
            f"    for (i = 0; i < {size}; i++) {{\n"
            f"        {p}_flat[{lo} + i] = values[i];\n"
            f"    }}\n"
            f"    {p}_dirty[{idx}] = 1;\n"
            f"}}\n\n")
    body = []
    for idx, prm in enumerate(canon.params):
        rows = deps.rows_by_param[prm.name]
        mask = sum(bit for i, bit in _SEG_BITS.items()
                   if deps.touches[prm.name][i])
        body.append(
            f"    if ({p}_dirty[{idx}]) {{\n"
            f"        {p}_refresh({p}_rows_{prm.name}, {rows.size});\n"
            f"        touched |= {mask};\n"
            f"        {p}_dirty[{idx}] = 0;\n"
            f"    }}\n")
    parts.append(
        f"/* refresh all dirty-dependent canonical rows; returns the "
        f"touched-segment\n"
        f" * mask (1 P, 2 q, 4 l, 8 u, 16 A) */\n"
        f"qpg_int {p}_canon_apply(void)\n"
        f"{{\n"
        f"    qpg_int touched = 0;\n"
        + "".join(body) +
        f"    return touched;\n"
        f"}}\n\n")
    if canon.rmap.selector and np.array_equal(
            canon.rmap.indices, np.arange(canon.n_user)):
        for name, rows, cols, off in canon.var_info:
            parts.append(
                f"const {p}_float *{p}_get_{name}(void)\n"
                f"{{\n"
                f"    return {p}_ws.x + {off};\n"
                f"}}\n\n")
    else:
        parts.append(em.int_array(f"{p}_ret_idx", canon.rmap.indices))
        parts.append(em.zero_float(f"{p}_xuser", canon.n_user))
        parts.append(
            f"\nvoid {p}_retrieve(void)\n"
            f"{{\n"
            f"    qpg_int i;\n"
            f"    for (i = 0; i < {canon.n_user}; i++) {{\n"
            f"        {p}_xuser[i] = {p}_ws.x[{p}_ret_idx[i]];\n"
            f"    }}\n"
            f"}}\n\n")
        for name, rows, cols, off in canon.var_info:
            parts.append(
                f"const {p}_float *{p}_get_{name}(void)\n"
                f"{{\n"
                f"    return {p}_xuser + {off};\n"
                f"}}\n\n")
    return "".join(parts)


def _emit_solve(canon: CanonQP, config: GenConfig, nnz_k: int) -> str:
    p = config.prefix
    seg = canon.seg
    gather = not (canon.rmap.selector and np.array_equal(
        canon.rmap.indices, np.arange(canon.n_user)))
    assemble = [
        f"        for (k = 0; k < {nnz_k}; k++) {{\n"
        f"            {p}_ws.Kx[k] = {p}_kkt_base[k];\n"
        f"        }}\n"]
    if canon.nnz_P:
        assemble.append(
            f"        for (k = 0; k < {canon.nnz_P}; k++) {{\n"
            f"            {p}_ws.Kx[{p}_pslots[k]] += {p}_theta[k];\n"
            f"        }}\n")
    if canon.nnz_A:
        assemble.append(
            f"        for (k = 0; k < {canon.nnz_A}; k++) {{\n"
            f"            {p}_ws.Kx[{p}_aslots[k]] += "
            f"{p}_theta[{seg[4]} + k];\n"
            f"        }}\n")
    retrieve_call = f"    {p}_retrieve();\n" if gather else ""
    return (
        f"/* Generated solve glue for '{canon.name}': canonical refresh, "
        f"KKT assembly\n"
        f" * and refactorization only when matrix segments changed, then "
        f"the\n"
        f" * warm-started iteration. */\n"
        f"#include \"qpgen_runtime.h\"\n"
        f"#include \"{p}.h\"\n\n"
        f"extern qpg_workspace {p}_ws;\n"
        f"extern const qpg_settings {p}_settings;\n"
        f"extern qpg_float {p}_theta[];\n"
        f"extern const qpg_float {p}_kkt_base[];\n"
        f"extern const qpg_int {p}_pslots[];\n"
        f"extern const qpg_int {p}_aslots[];\n"
        f"extern qpg_int {p}_needs_factor;\n"
        f"extern qpg_int {p}_canon_apply(void);\n"
        + (f"extern void {p}_retrieve(void);\n" if gather else "")
        + f"\nint {p}_solve(void)\n"
        f"{{\n"
        f"    const qpg_int touched = {p}_canon_apply();\n"
        f"    qpg_int k;\n"
        f"    int status;\n"
        f"    if ({p}_needs_factor || (touched & (1 | 16))) {{\n"
        + "".join(assemble) +
        f"        if (qpg_ldl_refactor(&{p}_ws) != {canon.n}) {{\n"
        f"            return -1;\n"
        f"        }}\n"
        f"        {p}_needs_factor = 0;\n"
        f"    }}\n"
        f"    status = qpg_admm(&{p}_ws, &{p}_settings);\n"
        + retrieve_call +
        f"    return status;\n"
        f"}}\n\n"
        f"int {p}_iterations(void)\n"
        f"{{\n"
        f"    return (int){p}_ws.iterations;\n"
        f"}}\n")


def _emit_example_main(canon: CanonQP, config: GenConfig) -> str:
    p = config.prefix
    parts = [
        f"/* Minimal usage example for the generated '{canon.name}' "
        f"solver. */\n"
        f"#include <stdio.h>\n"
        f"#include \"{p}.h\"\n\n"
    ]
    for prm in canon.params:
        size = canon.layout.sizes[prm.id]
        parts.append(f"static const {p}_float example_{prm.name}[{size}];\n")
    first_var = canon.var_info[0][0]
    body = "".join(
        f"    {p}_update_{prm.name}(example_{prm.name});\n"
        for prm in canon.params)
    parts.append(
        f"\nint main(void)\n"
        f"{{\n"
        f"    int status;\n"
        + body +
        f"    status = {p}_solve();\n"
        f"    printf(\"status %d after %d iterations\\n\", status, "
        f"{p}_iterations());\n"
        f"    printf(\"{first_var}[0] = %.12g\\n\", "
        f"(double){p}_get_{first_var}()[0]);\n"
        f"    return status;\n"
        f"}}\n")
    return "".join(parts)


def _emit_fixtures(canon: CanonQP, config: GenConfig, em: _Emitter,
                   fixtures: tuple) -> str:
    p = config.prefix
    n_cases = len(fixtures)
    theta_size = canon.theta_size
    n_user = sum(rows * cols for _, rows, cols, _ in canon.var_info)
    param_ordinal = {prm.name: i for i, prm in enumerate(canon.params)}
    tol_theta = "1e-12" if config.float_width == 64 else "1e-5"
    tol_x = "1e-6" if config.float_width == 64 else "1e-3"

    case_ptr = [0]
    upd_param: list[int] = []
    upd_offset: list[int] = []
    payload: list[float] = []
    for case in fixtures:
        for name, values in case.updates:
            upd_param.append(param_ordinal[name])
            upd_offset.append(len(payload))
            payload.extend(np.asarray(values, dtype=float).ravel())
        case_ptr.append(len(upd_param))
    exp_theta = np.concatenate([c.expected_theta for c in fixtures])
    exp_xt = np.concatenate([c.expected_x_tilde for c in fixtures])
    exp_xu = np.concatenate([c.expected_x_user for c in fixtures])
    exp_status = [c.expected_status for c in fixtures]

    apply_cases = "".join(
        f"    case {i}: {p}_update_{prm.name}(values); break;\n"
        for i, prm in enumerate(canon.params))
    var_cases = "".join(
        f"    case {i}: return {p}_get_{name}();\n"
        for i, (name, _, _, _) in enumerate(canon.var_info))
    var_lens = [rows * cols for _, rows, cols, _ in canon.var_info]

    parts = [
        f"/* Generated reference fixtures and self-checking runner for\n"
        f" * '{canon.name}'.  Host-side test scaffolding: the embedded "
        f"solver\n"
        f" * path itself stays freestanding. */\n"
        f"#include <stdio.h>\n"
        f"#include \"qpgen_runtime.h\"\n"
        f"#include \"{p}.h\"\n\n"
        f"extern qpg_float {p}_theta[];\n"
        f"extern qpg_workspace {p}_ws;\n\n"
    ]
    parts.append(em.int_array("fix_case_ptr", case_ptr, static=True))
    parts.append(em.int_array("fix_upd_param", upd_param, static=True))
    parts.append(em.int_array("fix_upd_offset", upd_offset, static=True))
    parts.append(em.float_array("fix_payload", payload, static=True))
    parts.append(em.float_array("fix_theta", exp_theta, static=True))
    parts.append(em.float_array("fix_xtilde", exp_xt, static=True))
    parts.append(em.float_array("fix_xuser", exp_xu, static=True))
    parts.append(em.int_array("fix_status", exp_status, static=True))
    parts.append(em.int_array("fix_var_len", var_lens, static=True))
    parts.append(
        f"\nstatic void fix_apply(qpg_int param, const {p}_float *values)\n"
        f"{{\n"
        f"    switch (param) {{\n"
        + apply_cases +
        f"    default: break;\n"
        f"    }}\n"
        f"}}\n\n"
        f"static const {p}_float *fix_var_ptr(qpg_int v)\n"
        f"{{\n"
        f"    switch (v) {{\n"
        + var_cases +
        f"    default: return {p}_get_{canon.var_info[0][0]}();\n"
        f"    }}\n"
        f"}}\n\n"
        f"static double fix_abs(double v)\n"
        f"{{\n"
        f"    return v < 0.0 ? -v : v;\n"
        f"}}\n\n"
        f"int main(void)\n"
        f"{{\n"
        f"    int failures = 0;\n"
        f"    qpg_int c;\n"
        f"    printf(\"{{\\\"family\\\": \\\"{canon.name}\\\", "
        f"\\\"cases\\\": [\");\n"
        f"    for (c = 0; c < {n_cases}; c++) {{\n"
        f"        double max_rel_theta = 0.0;\n"
        f"        double max_abs_x = 0.0;\n"
        f"        double max_abs_xt = 0.0;\n"
        f"        int status, pass;\n"
        f"        qpg_int t, i, v, off;\n"
        f"        for (t = fix_case_ptr[c]; t < fix_case_ptr[c + 1]; t++) "
        f"{{\n"
        f"            fix_apply(fix_upd_param[t], "
        f"fix_payload + fix_upd_offset[t]);\n"
        f"        }}\n"
        f"        status = {p}_solve();\n"
        f"        for (i = 0; i < {theta_size}; i++) {{\n"
        f"            const double ref = "
        f"(double)fix_theta[(long)c * {theta_size} + i];\n"
        f"            const double got = (double){p}_theta[i];\n"
        f"            const double den = fix_abs(ref) > 1.0 ? fix_abs(ref) "
        f": 1.0;\n"
        f"            const double rel = fix_abs(got - ref) / den;\n"
        f"            if (rel > max_rel_theta) {{\n"
        f"                max_rel_theta = rel;\n"
        f"            }}\n"
        f"        }}\n"
        f"        for (i = 0; i < {canon.n}; i++) {{\n"
        f"            const double d = fix_abs((double){p}_ws.x[i] - "
        f"(double)fix_xtilde[(long)c * {canon.n} + i]);\n"
        f"            if (d > max_abs_xt) {{\n"
        f"                max_abs_xt = d;\n"
        f"            }}\n"
        f"        }}\n"
        f"        off = 0;\n"
        f"        for (v = 0; v < {len(canon.var_info)}; v++) {{\n"
        f"            const {p}_float *ptr = fix_var_ptr(v);\n"
        f"            for (i = 0; i < fix_var_len[v]; i++) {{\n"
        f"                const double d = fix_abs((double)ptr[i] - "
        f"(double)fix_xuser[(long)c * {n_user} + off + i]);\n"
        f"                if (d > max_abs_x) {{\n"
        f"                    max_abs_x = d;\n"
        f"                }}\n"
        f"            }}\n"
        f"            off += fix_var_len[v];\n"
        f"        }}\n"
        f"        pass = (status == (int)fix_status[c])\n"
        f"            && max_rel_theta <= {tol_theta}\n"
        f"            && max_abs_x <= {tol_x};\n"
        f"        if (!pass) {{\n"
        f"            failures++;\n"
        f"        }}\n"
        f"        printf(\"%s{{\\\"case\\\": %d, \\\"pass\\\": %s, \"\n"
        f"               \"\\\"status\\\": %d, \\\"expected_status\\\": %d, "
        f"\"\n"
        f"               \"\\\"max_rel_theta\\\": %.3e, \\\"max_abs_x\\\": "
        f"%.3e, \"\n"
        f"               \"\\\"max_abs_x_tilde\\\": %.3e, "
        f"\\\"iterations\\\": %d}}\",\n"
        f"               c ? \", \" : \"\", (int)c, pass ? \"true\" : "
        f"\"false\",\n"
        f"               status, (int)fix_status[c], max_rel_theta, "
        f"max_abs_x,\n"
        f"               max_abs_xt, {p}_iterations());\n"
        f"    }}\n"
        f"    printf(\"], \\\"failures\\\": %d, \\\"total\\\": %d}}\\n\", "
        f"failures, {n_cases});\n"
        f"    return failures > 0 ? 1 : 0;\n"
        f"}}\n")
    return "".join(parts)


# ---------------------------------------------------------------------------
# bundle output


def write_bundle(bundle: SourceBundle, out_dir: str | Path) -> Path:
    """Write all bundle files plus manifest.json; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in bundle.files.items():
        (out / name).write_text(text)
    (out / "manifest.json").write_text(
        json.dumps(bundle.manifest, indent=2, sort_keys=True) + "\n")
    return out


def emit_report(bundle: SourceBundle, cc: str | None = None) -> SizeReport:
    """Source-size metrics; object sizes only when a compiler is supplied."""
    files = {name: len(text.encode()) for name, text in bundle.files.items()}
    object_sizes = None
    if cc is not None:
        import subprocess
        import tempfile
        object_sizes = {}
        with tempfile.TemporaryDirectory() as tmp:
            tmp_path = write_bundle(bundle, tmp)
            for name in bundle.files:
                if not name.endswith(".c") or name.endswith("_example_main.c"):
                    continue
                obj = tmp_path / (name[:-2] + ".o")
                subprocess.run(
                    [cc, "-std=c99", "-O2", "-c", str(tmp_path / name),
                     "-o", str(obj)],
                    check=True, cwd=tmp_path, capture_output=True)
                object_sizes[name] = obj.stat().st_size
    return SizeReport(
        files=files,
        total_source_bytes=sum(files.values()),
        static_data_bytes=bundle.manifest["static_data_bytes"],
        object_sizes=object_sizes)
