"""Two-path benchmark harness and the CSV/figure reporting layer."""

import csv
import io
import json
import math

import pytest

from qpgen.bench import BenchConfig, BenchError, break_even, run_bench
from qpgen.report import (TRACE_FIELDS, render_bench_figures,
                          render_trace_figures, trace_to_csv)
from qpgen.zoo import backtest, build_portfolio


def test_break_even_closed_form():
    assert break_even(0.0, 2.0, 1.0) == 1.0
    assert break_even(-5.0, 2.0, 1.0) == 1.0
    assert break_even(10.0, 2.0, 1.0) == 10.0
    assert break_even(10.0, 2.0, 1.5) == 20.0
    assert break_even(10.0, 2.0, 1.9) == math.ceil(10.0 / 0.1)
    assert break_even(10.0, 1.0, 1.0) == math.inf
    assert break_even(10.0, 1.0, 2.0) == math.inf


def test_config_validation():
    with pytest.raises(BenchError, match="unknown family"):
        BenchConfig(family="kalman").validate()
    with pytest.raises(BenchError, match="positive"):
        BenchConfig(family="mpc", sizes=(0,)).validate()
    with pytest.raises(BenchError, match="two solves"):
        BenchConfig(family="mpc", steps=1).validate()
    with pytest.raises(BenchError, match="three timed repeats"):
        BenchConfig(family="mpc", repeats=2).validate()
    with pytest.raises(BenchError, match="warmup"):
        BenchConfig(family="mpc", warmup=-1).validate()
    with pytest.raises(BenchError, match="onetime"):
        BenchConfig(family="mpc", onetime_ms=-1.0).validate()
    BenchConfig(family="portfolio").validate()


def test_default_sizes_fill_in():
    cfg = BenchConfig(family="mpc")
    assert cfg.effective_sizes == (6, 12, 18, 30, 60)
    cfg = BenchConfig(family="portfolio", sizes=(7,))
    assert cfg.effective_sizes == (7,)


@pytest.fixture(scope="module")
def small_report():
    cfg = BenchConfig(family="portfolio", sizes=(5,), steps=8, repeats=3,
                      warmup=1, seed=0, onetime_ms=40.0)
    return run_bench(cfg)


def test_run_bench_gates_equivalence_then_times(small_report):
    assert len(small_report.results) == 1
    r = small_report.results[0]
    assert r.equivalent
    assert r.max_dev < 1e-6
    assert r.full_median_ms > 0.0 and r.cached_median_ms > 0.0
    assert r.speedup == pytest.approx(r.full_median_ms / r.cached_median_ms)
    assert r.speedup > 0.0
    assert r.break_even_solves >= 1.0
    assert r.source_bytes > 0 and r.static_data_bytes > 0


def test_report_serializes_to_csv_and_json(small_report):
    text = small_report.to_csv()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 1
    row = rows[0]
    assert row["family"] == "portfolio"
    assert row["size"] == "5"
    assert row["equivalent"] == "True"
    assert set(row) == set(small_report._CSV_FIELDS)

    doc = json.loads(small_report.to_json())
    assert doc["config"]["sizes"] == [5]
    assert doc["config"]["equivalence_tolerance"] == 1e-6
    assert doc["results"][0]["speedup"] == small_report.results[0].speedup


def test_bench_figures_are_rendered(small_report, tmp_path):
    written = render_bench_figures(small_report, tmp_path)
    names = {p.name for p in written}
    assert names == {"bench_times.png", "bench_speedup.png"}
    for p in written:
        assert p.stat().st_size > 0


@pytest.fixture(scope="module")
def small_trace():
    return backtest(build_portfolio(4), periods=5, seed=1)


def test_trace_csv_layout(small_trace):
    text = trace_to_csv(small_trace)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == TRACE_FIELDS
    assert len(rows) == 1 + len(small_trace)
    for step, row in enumerate(rows[1:]):
        assert int(row[0]) == step
        # repr round-trip: the parsed objective is the stored float exactly
        assert float(row[1]) == small_trace.steps[step].objective
        assert row[4] in ("True", "False")


def test_trace_figures_are_rendered(small_trace, tmp_path):
    written = render_trace_figures(small_trace, tmp_path)
    names = {p.name for p in written}
    assert {"trace_objective.png", "trace_effort.png"} <= names
    assert "trace_exposure.png" in names   # portfolio-specific panel
    for p in written:
        assert p.stat().st_size > 0
