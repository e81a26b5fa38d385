"""Delimited trace output and figure rendering for the command-line tool.

The library keeps benchmark and simulation results as plain data; this
module turns them into CSV text and, when an output directory is given,
renders matplotlib figures next to the delimited files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import BenchReport
from .zoo import SimTrace

__all__ = ["render_bench_figures", "render_trace_figures", "trace_to_csv"]

TRACE_FIELDS = ("step", "objective", "iterations", "wall_ns",
                "refactorized", "feasibility_violation")


def trace_to_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(TRACE_FIELDS)
    for r in trace.steps:
        writer.writerow([r.step, repr(r.objective), r.iterations, r.wall_ns,
                         r.refactorized, repr(r.feasibility_violation)])
    return buf.getvalue()


def render_trace_figures(trace: SimTrace, out_dir: str | Path) -> list:
    """Objective, per-step solver effort, and a family-specific view."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps = [r.step for r in trace.steps]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.objective for r in trace.steps], lw=1.5)
    ax.set_xlabel("step")
    ax.set_ylabel("objective")
    ax.set_title(f"{trace.family}: objective per solve")
    ax.grid(True, alpha=0.3)
    path = out / "trace_objective.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    ax1.plot(steps, [r.iterations for r in trace.steps], lw=1.2)
    ax1.set_ylabel("iterations")
    ax1.grid(True, alpha=0.3)
    ax2.plot(steps, [r.wall_ns * 1e-6 for r in trace.steps], lw=1.2,
             color="tab:orange")
    ax2.set_ylabel("wall time [ms]")
    ax2.set_xlabel("step")
    ax2.grid(True, alpha=0.3)
    ax1.set_title(f"{trace.family}: solver effort per step")
    path = out / "trace_effort.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    if trace.family == "mpc" and trace.steps[0].state is not None:
        norms = [float(np.linalg.norm(r.state)) for r in trace.steps]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(steps, np.maximum(norms, 1e-16), lw=1.5)
        ax.set_xlabel("step")
        ax.set_ylabel("state norm")
        ax.set_title("closed-loop state decay")
        ax.grid(True, which="both", alpha=0.3)
        path = out / "trace_state_norm.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    elif trace.family == "portfolio":
        gross = [float(np.abs(r.values["w"][:-1]).sum())
                 for r in trace.steps]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(steps, gross, lw=1.5)
        ax.set_xlabel("period")
        ax.set_ylabel("gross risky exposure")
        ax.set_title("back-test exposure")
        ax.grid(True, alpha=0.3)
        path = out / "trace_exposure.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def render_bench_figures(report: BenchReport, out_dir: str | Path) -> list:
    """Median per-solve times and speedup across problem sizes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timed = [r for r in report.results if r.equivalent]
    if not timed:
        return []
    sizes = [r.size for r in timed]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(sizes, [r.full_median_ms for r in timed], "o-",
              label="full pipeline")
    ax.loglog(sizes, [r.cached_median_ms for r in timed], "s-",
              label="cached workspace")
    ax.set_xlabel("problem size")
    ax.set_ylabel("median solve [ms]")
    ax.set_title(f"{report.config.family}: per-solve time")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    path = out / "bench_times.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(sizes, [r.speedup for r in timed], "o-")
    ax.axhline(1.0, color="gray", lw=1, ls="--")
    ax.set_xlabel("problem size")
    ax.set_ylabel("speedup (full / cached)")
    ax.set_title(f"{report.config.family}: caching speedup")
    ax.grid(True, which="both", alpha=0.3)
    path = out / "bench_speedup.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written
