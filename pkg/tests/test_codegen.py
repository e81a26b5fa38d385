"""Generated-source contracts that need no C toolchain."""

import json
import re

import numpy as np
import pytest

from qpgen.canon import canonicalize, eval_params
from qpgen.codegen import (GenConfig, GenError, _Emitter, build_fixtures,
                           emit_report, generate, write_bundle)
from qpgen.solver import Settings
from qpgen.zoo import build_mpc, build_nnls


def gen_nnls(m=3, n=2, **kw):
    cq = canonicalize(build_nnls(m, n).problem)
    config = GenConfig(**kw)
    return cq, generate(cq, cq.cmap, cq.rmap, cq.deps, config)


def strip_comments(text):
    return re.sub(r"/\*.*?\*/", "", text, flags=re.S)


def test_regeneration_is_byte_identical():
    _, b1 = gen_nnls()
    _, b2 = gen_nnls()
    assert list(b1.files) == list(b2.files)
    for name in b1.files:
        assert b1.files[name] == b2.files[name], name
    assert b1.manifest == b2.manifest


def test_header_declares_the_full_api_surface():
    _, bundle = gen_nnls()
    header = bundle.files["cpg.h"]
    assert "typedef double cpg_float;" in header
    assert "void cpg_update_G(const cpg_float *values);" in header
    assert "void cpg_update_h(const cpg_float *values);" in header
    assert "int cpg_solve(void);" in header
    assert "int cpg_iterations(void);" in header
    assert "const cpg_float *cpg_get_x(void);" in header


def test_canonicalize_and_retrieve_unit_is_division_free():
    _, bundle = gen_nnls()
    code = strip_comments(bundle.files["cpg_canon.c"])
    assert "/" not in code
    for word in ("malloc", "calloc", "realloc", "free("):
        assert word not in code
    includes = re.findall(r"#include\s+(.+)", code)
    # bundle-local includes only: all quoted, nothing from the system
    assert includes and all(inc.startswith('"') for inc in includes)


def test_solver_unit_does_not_allocate_or_include_extras():
    _, bundle = gen_nnls()
    code = strip_comments(bundle.files["cpg_solve.c"])
    for word in ("malloc", "calloc", "realloc", "stdlib.h", "stdio.h"):
        assert word not in code
    includes = re.findall(r"#include\s+(.+)", code)
    assert includes and all(inc.startswith('"') for inc in includes)


def test_workspace_is_fully_static():
    _, bundle = gen_nnls()
    code = strip_comments(bundle.files["cpg_workspace.c"])
    for word in ("malloc", "calloc", "realloc"):
        assert word not in code
    # open upper bounds embed as the large-but-finite sentinel
    assert "1e30" in code


def test_runtime_is_copied_verbatim_and_width_pinned():
    from importlib import resources
    _, bundle = gen_nnls()
    for name in ("qpgen_runtime.h", "qpgen_runtime.c"):
        shipped = (resources.files("qpgen") / "c_runtime" / name).read_text()
        assert bundle.files[name] == shipped
    assert "#define QPG_FLOAT double" in bundle.files["qpgen_conf.h"]

    fam = build_nnls(3, 2)
    cq = canonicalize(fam.problem)
    cases = build_fixtures(cq, [fam.default_values()], Settings())
    b32 = generate(cq, cq.cmap, cq.rmap, cq.deps, GenConfig(float_width=32),
                   fixtures=cases)
    assert "#define QPG_FLOAT float" in b32.files["qpgen_conf.h"]
    assert "typedef float cpg_float;" in b32.files["cpg.h"]
    # float32 replay comparisons get the wider tolerances
    assert "1e-5" in b32.files["cpg_fixtures.c"]
    assert "1e-3" in b32.files["cpg_fixtures.c"]


def test_prefix_is_configurable():
    _, bundle = gen_nnls(prefix="acado")
    assert set(bundle.files) >= {"acado.h", "acado_workspace.c",
                                 "acado_canon.c", "acado_solve.c"}
    assert "void acado_update_G(const acado_float *values);" \
        in bundle.files["acado.h"]


def test_fixtures_can_be_omitted():
    _, bundle = gen_nnls(emit_fixtures=False)
    assert "cpg_fixtures.c" not in bundle.files
    assert bundle.manifest["fixture_count"] == 0
    assert bundle.manifest["fixture_data_bytes"] == 0


def test_fixed_iterations_replaces_the_cap():
    _, bundle = gen_nnls(fixed_iterations=7)
    ws = bundle.files["cpg_workspace.c"]
    assert re.search(r"cpg_settings\s*=[^;]*\b7,\s*25\b", ws, flags=re.S)
    assert "20000" not in ws


def test_static_data_grows_with_the_horizon():
    sizes = []
    for H in (6, 12, 18):
        cq = canonicalize(build_mpc(H).problem)
        bundle = generate(cq, cq.cmap, cq.rmap, cq.deps,
                          GenConfig(emit_fixtures=False))
        sizes.append(bundle.manifest["static_data_bytes"])
    assert sizes[0] < sizes[1] < sizes[2]


def test_manifest_reflects_the_problem_and_files():
    cq, bundle = gen_nnls()
    man = bundle.manifest
    assert man["family"] == "nnls"
    assert man["prefix"] == "cpg"
    assert man["float_width"] == 64
    assert (man["n"], man["m"]) == (cq.n, cq.m)
    assert man["theta_size"] == cq.theta_size
    assert man["nnz_P"] == cq.nnz_P
    assert man["nnz_A"] == cq.nnz_A
    assert man["parameters"] == [{"name": "G", "size": 6},
                                 {"name": "h", "size": 3}]
    assert man["variables"] == [{"name": "x", "rows": 2, "cols": 1}]
    for name, text in bundle.files.items():
        assert man["files"][name] == len(text.encode())
    assert man["total_bytes"] == sum(man["files"].values())
    assert man["static_data_bytes"] == \
        8 * man["float_entries"] + 4 * man["int_entries"]


def test_write_bundle_round_trips(tmp_path):
    _, bundle = gen_nnls()
    out = write_bundle(bundle, tmp_path / "nnls")
    for name, text in bundle.files.items():
        assert (out / name).read_text() == text
    man = json.loads((out / "manifest.json").read_text())
    assert man == bundle.manifest


def test_emit_report_totals_without_compiler():
    _, bundle = gen_nnls()
    report = emit_report(bundle)
    assert report.object_sizes is None
    assert report.total_source_bytes == sum(report.files.values())
    assert report.static_data_bytes == bundle.manifest["static_data_bytes"]


def test_fixture_replay_matches_the_reference_solver():
    fam = build_nnls(3, 2)
    cq = canonicalize(fam.problem)
    rng = np.random.default_rng(0)
    values = fam.default_values(rng)
    steps = [dict(values)]
    for _ in range(3):
        steps.append({"h": rng.standard_normal((3, 1))})
    cases = build_fixtures(cq, steps, Settings())
    assert len(cases) == 4
    first = cases[0]
    assert [name for name, _ in first.updates] == ["G", "h"]
    assert all(c.expected_status == 0 for c in cases)
    # later steps only carry the changed parameter
    for c in cases[1:]:
        assert [name for name, _ in c.updates] == ["h"]
        assert c.expected_x_user.shape == (2,)
    # expectations equal a direct in-process solve of the final step
    cp = eval_params(cq, {**values, "h": steps[-1]["h"]})
    assert np.array_equal(cases[-1].expected_theta, cp.theta)


def test_fixture_validation():
    cq = canonicalize(build_nnls(2, 2).problem)
    with pytest.raises(GenError, match="at least one step"):
        build_fixtures(cq, [], Settings())
    with pytest.raises(GenError, match="every parameter"):
        build_fixtures(cq, [{"G": np.zeros((2, 2))}], Settings())


def test_config_validation():
    with pytest.raises(GenError):
        GenConfig(prefix="9abc").validate()
    with pytest.raises(GenError):
        GenConfig(prefix="static").validate()
    with pytest.raises(GenError):
        GenConfig(float_width=16).validate()
    with pytest.raises(GenError):
        GenConfig(fixed_iterations=0).validate()
    GenConfig().validate()


def test_emitter_rejects_indices_beyond_32_bits():
    em = _Emitter()
    with pytest.raises(GenError, match="32-bit"):
        em.int_array("t", [2 ** 31])
    em.int_array("t", [2 ** 31 - 1])


def test_float_formatting_round_trips():
    from qpgen.codegen import _fmt_float
    for v in (0.0, 1.0, -2.5, 1e-17, 3.141592653589793, 1e29):
        assert float(_fmt_float(v)) == v
    assert _fmt_float(np.inf) == "1e30"
    assert _fmt_float(-np.inf) == "-1e30"
    assert _fmt_float(2e30) == "1e30"
    with pytest.raises(GenError):
        _fmt_float(float("nan"))
