"""Cached-workspace vs full-pipeline timing on the shipped problem families.

Both paths replay the exact same recorded parameter-update sequence.  The
cached path keeps one workspace alive: vector updates skip factorization,
matrix updates refactorize on the frozen pattern, and every solve warm
starts from the previous iterate.  The full path rebuilds everything per
solve: canonical-vector evaluation from scratch, a fresh workspace with
ordering, symbolic analysis and numeric factorization, and a cold solve.

Solutions from the two paths are compared before any timing: if they
disagree beyond tolerance, the timings for that size are withheld and the
disagreement is reported instead.  Output stays delimited (CSV / JSON);
rendering lives with the command-line report path.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .canon import canonicalize, eval_params, retrieve
from .codegen import GenConfig, generate
from .solver import Settings, setup, solve
from .zoo import (MPC_SETTINGS, PORTFOLIO_SETTINGS, _apply_updates,
                  build_mpc, build_portfolio, backtest, simulate_mpc)

__all__ = ["BenchConfig", "BenchError", "BenchReport", "SizeResult",
           "break_even", "run_bench"]

EQUIV_TOL = 1e-6

DEFAULT_SIZES = {
    "mpc": (6, 12, 18, 30, 60),
    "portfolio": (10, 20, 40, 60, 100),
}


class BenchError(ValueError):
    """Invalid benchmark configuration."""


@dataclass(frozen=True)
class BenchConfig:
    family: str
    sizes: tuple = ()
    steps: int = 50              # solves per repeat
    repeats: int = 3
    warmup: int = 1
    seed: int = 0
    onetime_ms: float = 0.0      # amortized one-time cost for break-even

    def validate(self) -> None:
        if self.family not in DEFAULT_SIZES:
            raise BenchError(f"unknown family {self.family!r}; choose from "
                             f"{sorted(DEFAULT_SIZES)}")
        sizes = self.sizes or DEFAULT_SIZES[self.family]
        if any(s < 1 for s in sizes):
            raise BenchError("sizes must be positive")
        if self.steps < 2:
            raise BenchError("need at least two solves per repeat")
        if self.repeats < 3:
            raise BenchError("need at least three timed repeats")
        if self.warmup < 0:
            raise BenchError("warmup cannot be negative")
        if self.onetime_ms < 0:
            raise BenchError("onetime_ms cannot be negative")

    @property
    def effective_sizes(self) -> tuple:
        return tuple(self.sizes or DEFAULT_SIZES[self.family])


@dataclass(frozen=True)
class SizeResult:
    size: int
    n: int
    m: int
    steps: int
    equivalent: bool
    max_dev: float
    full_mean_ms: float | None = None
    full_median_ms: float | None = None
    full_p95_ms: float | None = None
    cached_mean_ms: float | None = None
    cached_median_ms: float | None = None
    cached_p95_ms: float | None = None
    speedup: float | None = None
    break_even_solves: float | None = None
    source_bytes: int = 0
    static_data_bytes: int = 0


@dataclass(frozen=True)
class BenchReport:
    config: BenchConfig
    results: tuple

    _CSV_FIELDS = (
        "family", "size", "n", "m", "steps", "repeats", "equivalent",
        "max_dev", "full_mean_ms", "full_median_ms", "full_p95_ms",
        "cached_mean_ms", "cached_median_ms", "cached_p95_ms", "speedup",
        "break_even_solves", "source_bytes", "static_data_bytes")

    def rows(self) -> list:
        out = []
        for r in self.results:
            out.append({
                "family": self.config.family, "size": r.size, "n": r.n,
                "m": r.m, "steps": r.steps, "repeats": self.config.repeats,
                "equivalent": r.equivalent, "max_dev": r.max_dev,
                "full_mean_ms": r.full_mean_ms,
                "full_median_ms": r.full_median_ms,
                "full_p95_ms": r.full_p95_ms,
                "cached_mean_ms": r.cached_mean_ms,
                "cached_median_ms": r.cached_median_ms,
                "cached_p95_ms": r.cached_p95_ms,
                "speedup": r.speedup,
                "break_even_solves": r.break_even_solves,
                "source_bytes": r.source_bytes,
                "static_data_bytes": r.static_data_bytes,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self._CSV_FIELDS)
        writer.writeheader()
        for row in self.rows():
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "config": {
                "family": self.config.family,
                "sizes": list(self.config.effective_sizes),
                "steps": self.config.steps,
                "repeats": self.config.repeats,
                "warmup": self.config.warmup,
                "seed": self.config.seed,
                "onetime_ms": self.config.onetime_ms,
                "equivalence_tolerance": EQUIV_TOL,
            },
            "results": self.rows(),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def break_even(onetime_ms: float, full_ms: float, cached_ms: float) -> float:
    """Smallest solve count at which the cached path has paid for itself.

    Returns the least k with onetime + k * cached <= k * full.  With no
    one-time cost the first solve already wins; if caching is not faster
    there is no break-even point.
    """
    if onetime_ms <= 0.0:
        return 1.0
    if cached_ms >= full_ms:
        return math.inf
    return float(math.ceil(onetime_ms / (full_ms - cached_ms)))


def _record_sequence(family: str, size: int, steps: int, seed: int,
                     settings: Settings):
    """Drive the family once and keep the per-step update dicts."""
    if family == "mpc":
        fam = build_mpc(size)
        rng = np.random.default_rng(seed)
        z0 = np.concatenate([rng.uniform(-1.0, 1.0, 3),
                             rng.uniform(-0.3, 0.3, 3)]).reshape(6, 1)
        trace = simulate_mpc(fam, z0, steps, settings=settings)
    else:
        fam = build_portfolio(size)
        trace = backtest(fam, steps, seed, settings=settings)
    return fam, [dict(r.params) for r in trace.steps]


def _replay_cached(canon, updates, settings: Settings):
    """Persistent-workspace replay; per-solve wall times in seconds.

    Each solve is cold-started so both paths iterate from the same point on
    the same data: the comparison isolates what caching saves (map
    evaluation, ordering, symbolic and numeric setup), and on degenerate
    instances with a nearly flat solution set the two paths cannot drift
    apart inside the tolerance ball.
    """
    times = np.empty(len(updates))
    sols = []
    cp = None
    ws = None
    for t, changed in enumerate(updates):
        start = time.perf_counter_ns()
        if t == 0:
            cp = eval_params(canon, changed)
            ws = setup(canon.P_with(cp.P_values), cp.q,
                       canon.A_with(cp.A_values), cp.l, cp.u, settings)
        else:
            _apply_updates(canon, cp, ws, changed)
            ws.cold_start()
        res = solve(ws)
        times[t] = (time.perf_counter_ns() - start) * 1e-9
        if res.status != "solved":
            raise BenchError(f"cached path: step {t} ended {res.status}")
        sols.append(np.concatenate(
            [v.ravel(order="F") for v in retrieve(canon, res.x_tilde).values()]))
    return times, sols


def _replay_full(canon, updates, settings: Settings):
    """Per-solve full rebuild: evaluation, fresh workspace, cold solve."""
    times = np.empty(len(updates))
    sols = []
    values: dict = {}
    for t, changed in enumerate(updates):
        values.update(changed)
        snapshot = dict(values)
        start = time.perf_counter_ns()
        cp = eval_params(canon, snapshot)
        ws = setup(canon.P_with(cp.P_values), cp.q,
                   canon.A_with(cp.A_values), cp.l, cp.u, settings)
        res = solve(ws)
        times[t] = (time.perf_counter_ns() - start) * 1e-9
        if res.status != "solved":
            raise BenchError(f"full path: step {t} ended {res.status}")
        sols.append(np.concatenate(
            [v.ravel(order="F") for v in retrieve(canon, res.x_tilde).values()]))
    return times, sols


def _source_metrics(canon, settings: Settings) -> tuple:
    bundle = generate(canon, canon.cmap, canon.rmap, canon.deps,
                      GenConfig(emit_fixtures=False), settings=settings)
    return (bundle.manifest["total_bytes"],
            bundle.manifest["static_data_bytes"])


def _stats_ms(samples: np.ndarray) -> tuple:
    ms = samples * 1e3
    return (float(np.mean(ms)), float(np.median(ms)),
            float(np.percentile(ms, 95)))


def run_bench(config: BenchConfig) -> BenchReport:
    """Time both paths over identical sequences for every configured size."""
    config.validate()
    settings = MPC_SETTINGS if config.family == "mpc" else PORTFOLIO_SETTINGS
    results = []
    for size in config.effective_sizes:
        fam, updates = _record_sequence(config.family, size, config.steps,
                                        config.seed, settings)
        canon = canonicalize(fam.problem)
        source_bytes, static_bytes = _source_metrics(canon, settings)

        # equivalence gate: identical sequences must give matching solutions
        # before any timing is trusted
        _, sols_cached = _replay_cached(canon, updates, settings)
        _, sols_full = _replay_full(canon, updates, settings)
        max_dev = max(
            float(np.max(np.abs(a - b))) if a.size else 0.0
            for a, b in zip(sols_cached, sols_full))
        if max_dev > EQUIV_TOL:
            results.append(SizeResult(
                size=size, n=canon.n, m=canon.m, steps=config.steps,
                equivalent=False, max_dev=max_dev,
                source_bytes=source_bytes, static_data_bytes=static_bytes))
            continue

        # step 0 is the bootstrap assignment on both paths; per-solve
        # samples start at step 1 so every sample measures the same thing
        full_times = []
        cached_times = []
        for rep in range(config.warmup + config.repeats):
            t_cached, _ = _replay_cached(canon, updates, settings)
            t_full, _ = _replay_full(canon, updates, settings)
            if rep >= config.warmup:
                cached_times.append(t_cached[1:])
                full_times.append(t_full[1:])
        full_pool = np.concatenate(full_times)
        cached_pool = np.concatenate(cached_times)
        f_mean, f_med, f_p95 = _stats_ms(full_pool)
        c_mean, c_med, c_p95 = _stats_ms(cached_pool)
        results.append(SizeResult(
            size=size, n=canon.n, m=canon.m, steps=config.steps,
            equivalent=True, max_dev=max_dev,
            full_mean_ms=f_mean, full_median_ms=f_med, full_p95_ms=f_p95,
            cached_mean_ms=c_mean, cached_median_ms=c_med,
            cached_p95_ms=c_p95,
            speedup=f_med / c_med if c_med > 0 else math.inf,
            break_even_solves=break_even(config.onetime_ms, f_med, c_med),
            source_bytes=source_bytes, static_data_bytes=static_bytes))
    return BenchReport(config=config, results=tuple(results))
