"""Command-line interface.

Subcommands: canonicalize (structure dump), solve (one-shot solve from a
problem file plus values), generate (emit a C bundle), simulate-mpc and
backtest (closed-loop traces), bench (cached vs full-pipeline timing).
Trace and bench subcommands write delimited output; given an output
directory they render figures next to it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import DEFAULT_SIZES, BenchConfig, run_bench
from .canon import canonicalize, eval_params, retrieve
from .codegen import GenConfig, build_fixtures, generate, write_bundle
from .problem_io import parse_problem
from .solver import Settings, setup, solve
from .zoo import (MPC_SETTINGS, PORTFOLIO_SETTINGS, backtest, build_mpc,
                  build_nnls, build_portfolio, simulate_mpc)

FAMILY_BUILDERS = {
    "nnls": lambda m, n=None: build_nnls(m, m if n is None else n),
    "mpc": build_mpc,
    "portfolio": build_portfolio,
}


def _load_values(path: str) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    return {name: np.asarray(value, dtype=float)
            for name, value in raw.items()}


def _csc_doc(mat) -> dict:
    return {"nrows": mat.nrows, "ncols": mat.ncols,
            "col_ptr": mat.col_ptr.tolist(),
            "row_idx": mat.row_idx.tolist(),
            "values": mat.values.tolist()}


def _settings_from(args, base: Settings | None = None) -> Settings:
    base = base or Settings()
    overrides = {}
    for name in ("rho", "sigma", "alpha", "eps_abs", "eps_rel",
                 "max_iter", "check_interval"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if not overrides:
        return base
    from dataclasses import replace
    return replace(base, **overrides)


def _add_settings_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--eps-abs", dest="eps_abs", type=float, default=None)
    p.add_argument("--eps-rel", dest="eps_rel", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--check-interval", dest="check_interval", type=int,
                   default=None)


def cmd_canonicalize(args) -> int:
    problem = parse_problem(Path(args.problem).read_text())
    canon = canonicalize(problem)
    doc = {
        "name": canon.name,
        "n_user": canon.n_user, "n": canon.n, "m": canon.m,
        "theta_size": canon.theta_size,
        "segments": {"P": [canon.seg[0], canon.seg[1]],
                     "q": [canon.seg[1], canon.seg[2]],
                     "l": [canon.seg[2], canon.seg[3]],
                     "u": [canon.seg[3], canon.seg[4]],
                     "A": [canon.seg[4], canon.seg[5]]},
        "variables": [{"name": name, "rows": rows, "cols": cols,
                       "offset": off}
                      for name, rows, cols, off in canon.var_info],
        "parameters": [{"name": p.name, "rows": p.shape.rows,
                        "cols": p.shape.cols,
                        "flat_entries": canon.layout.sizes[p.id]}
                       for p in canon.params],
        "P_pattern": _csc_doc(canon.P_pattern),
        "A_pattern": _csc_doc(canon.A_pattern),
        "C": _csc_doc(canon.cmap.C),
        "R": {"selector": canon.rmap.selector,
              "indices": canon.rmap.indices.tolist()},
        "dependencies": {
            name: rows.tolist()
            for name, rows in canon.deps.rows_by_param.items()},
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_solve(args) -> int:
    problem = parse_problem(Path(args.problem).read_text())
    canon = canonicalize(problem)
    values = _load_values(args.values)
    cp = eval_params(canon, values)
    ws = setup(canon.P_with(cp.P_values), cp.q, canon.A_with(cp.A_values),
               cp.l, cp.u, _settings_from(args))
    res = solve(ws)
    variables = {name: value.tolist()
                 for name, value in retrieve(canon, res.x_tilde).items()}
    doc = {
        "status": res.status,
        "objective": res.obj_val + cp.obj_offset,
        "iterations": res.iterations,
        "primal_res": res.primal_res,
        "dual_res": res.dual_res,
        "variables": variables,
    }
    print(json.dumps(doc, indent=2))
    return 0 if res.status == "solved" else 1


def cmd_generate(args) -> int:
    if args.family:
        fam = FAMILY_BUILDERS[args.family](*args.size)
        problem = fam.problem
        base = {"mpc": MPC_SETTINGS,
                "portfolio": PORTFOLIO_SETTINGS}.get(args.family)
        settings = _settings_from(args, base)
    else:
        if not args.problem:
            print("generate: need --family/--size or a problem file",
                  file=sys.stderr)
            return 2
        problem = parse_problem(Path(args.problem).read_text())
        settings = _settings_from(args)
    canon = canonicalize(problem)

    fixtures = ()
    if not args.no_fixtures:
        rng = np.random.default_rng(args.seed)
        if args.family == "mpc":
            z0 = np.concatenate([rng.uniform(-1, 1, 3),
                                 rng.uniform(-0.3, 0.3, 3)]).reshape(6, 1)
            trace = simulate_mpc(fam, z0, args.fixture_steps,
                                 settings=settings)
            steps = [r.params for r in trace.steps]
        elif args.family == "portfolio":
            trace = backtest(fam, args.fixture_steps, args.seed,
                             settings=settings)
            steps = [r.params for r in trace.steps]
        elif args.family == "nnls":
            steps = [fam.default_values(rng)]
            for _ in range(args.fixture_steps - 1):
                steps.append({"h": rng.standard_normal((fam.m, 1))})
        else:
            steps = []
        if steps:
            fixtures = build_fixtures(canon, steps, settings)

    config = GenConfig(prefix=args.prefix, float_width=args.float_width,
                       emit_fixtures=not args.no_fixtures,
                       out_dir=args.out)
    bundle = generate(canon, canon.cmap, canon.rmap, canon.deps, config,
                      settings=settings, fixtures=fixtures)
    out = write_bundle(bundle, args.out)
    print(json.dumps({"out_dir": str(out),
                      "files": sorted(bundle.files),
                      "static_data_bytes":
                          bundle.manifest["static_data_bytes"],
                      "total_bytes": bundle.manifest["total_bytes"],
                      "fixture_count": bundle.manifest["fixture_count"]},
                     indent=2))
    return 0


def _emit_trace(trace, args) -> int:
    from .report import render_trace_figures, trace_to_csv
    csv_text = trace_to_csv(trace)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.csv").write_text(csv_text)
        figures = render_trace_figures(trace, out)
        doc = {"family": trace.family, "steps": len(trace),
               "factor_count": trace.factor_count,
               "csv": str(out / "trace.csv"),
               "figures": [str(f) for f in figures]}
        print(json.dumps(doc, indent=2))
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_simulate_mpc(args) -> int:
    fam = build_mpc(args.horizon)
    rng = np.random.default_rng(args.seed)
    z0 = np.concatenate([rng.uniform(-1, 1, 3),
                         rng.uniform(-0.3, 0.3, 3)]).reshape(6, 1)
    trace = simulate_mpc(fam, z0, args.steps,
                         settings=_settings_from(args, MPC_SETTINGS))
    return _emit_trace(trace, args)


def cmd_backtest(args) -> int:
    fam = build_portfolio(args.assets)
    trace = backtest(fam, args.periods, args.seed,
                     settings=_settings_from(args, PORTFOLIO_SETTINGS))
    return _emit_trace(trace, args)


def cmd_bench(args) -> int:
    from .report import render_bench_figures
    config = BenchConfig(family=args.family,
                         sizes=tuple(args.sizes or ()),
                         steps=args.steps, repeats=args.repeats,
                         warmup=args.warmup, seed=args.seed,
                         onetime_ms=args.onetime_ms)
    report = run_bench(config)
    csv_text = report.to_csv()
    json_text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(csv_text)
        (out / "bench.json").write_text(json_text)
        figures = render_bench_figures(report, out)
        print(json.dumps({"csv": str(out / "bench.csv"),
                          "json": str(out / "bench.json"),
                          "figures": [str(f) for f in figures]}, indent=2))
    else:
        sys.stdout.write(csv_text)
        sys.stderr.write(json_text)
    return 0 if all(r.equivalent for r in report.results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpgen",
        description="parametrized QP modeling, solving, and C generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("canonicalize",
                       help="dump canonical structure as JSON")
    p.add_argument("problem", help="problem file")
    p.add_argument("--out", default=None, help="write JSON here instead "
                   "of stdout")
    p.set_defaults(fn=cmd_canonicalize)

    p = sub.add_parser("solve", help="solve one instance from files")
    p.add_argument("problem", help="problem file")
    p.add_argument("values", help="JSON file: parameter name -> array")
    _add_settings_flags(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("generate", help="emit an embedded C solver bundle")
    p.add_argument("problem", nargs="?", default=None, help="problem file")
    p.add_argument("--family", choices=sorted(FAMILY_BUILDERS),
                   default=None)
    p.add_argument("--size", type=int, nargs="+", default=[10],
                   help="family size: horizon, asset count, or rows [cols]")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--prefix", default="cpg")
    p.add_argument("--float-width", dest="float_width", type=int,
                   choices=(32, 64), default=64)
    p.add_argument("--no-fixtures", dest="no_fixtures", action="store_true")
    p.add_argument("--fixture-steps", dest="fixture_steps", type=int,
                   default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_settings_flags(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("simulate-mpc", help="closed-loop control trace")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="directory for trace.csv "
                   "and figures; stdout CSV otherwise")
    _add_settings_flags(p)
    p.set_defaults(fn=cmd_simulate_mpc)

    p = sub.add_parser("backtest", help="sequential rebalancing trace")
    p.add_argument("--assets", type=int, default=20)
    p.add_argument("--periods", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="directory for trace.csv "
                   "and figures; stdout CSV otherwise")
    _add_settings_flags(p)
    p.set_defaults(fn=cmd_backtest)

    p = sub.add_parser("bench", help="cached vs full-pipeline timing")
    p.add_argument("--family", choices=sorted(DEFAULT_SIZES),
                   required=True)
    p.add_argument("--sizes", type=int, nargs="+", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--onetime-ms", dest="onetime_ms", type=float,
                   default=0.0)
    p.add_argument("--out", default=None, help="directory for bench.csv, "
                   "bench.json, and figures; stdout CSV otherwise")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
