"""Command-line front end: batch solving, Pareto sweeps, self-checks, benchmarks."""

from __future__ import annotations

import argparse
import json
import sys

from . import advisor, synth
from .errors import AdvisorError, InfeasibleProblem
from .solver import SolverOptions

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleProblem as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        for origin in exc.report:
            print(f"  conflicting constraint: {origin}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AdvisorError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advisor",
        description="Index-tuning workbench: what-if costing and exact anytime solving",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="recommend an index configuration")
    _session_args(solve)
    _solver_args(solve)
    solve.add_argument("--out", help="write the recommendation JSON here (default stdout)")
    solve.add_argument("--progress-log", help="write progress events as CSV")
    solve.add_argument("--dump-bip", help="write the integer program in LP-style text")
    solve.add_argument("--dump-templates", help="write the template caches as JSON")
    solve.set_defaults(func=cmd_solve)

    par = sub.add_parser("pareto", help="trace the soft-constraint trade-off curve")
    _session_args(par)
    _solver_args(par)
    par.add_argument("--epsilon", type=float, default=0.05,
                     help="refinement threshold in normalized objective space")
    par.add_argument("--max-points", type=int, default=16)
    par.add_argument("--out", help="write the Pareto points JSON here (default stdout)")
    par.add_argument("--svg", help="optional scatter plot of the first two objectives")
    par.set_defaults(func=cmd_pareto)

    oracle = sub.add_parser("oracle-check", help="randomized equivalence suite vs. the exhaustive oracle")
    oracle.add_argument("--seeds", type=int, default=50, help="number of random instances")
    oracle.add_argument("--start-seed", type=int, default=1)
    oracle.add_argument("--threads", type=int, default=1)
    oracle.set_defaults(func=cmd_oracle_check)

    bench = sub.add_parser("bench", help="synthetic scaling benchmark with a time breakdown")
    bench.add_argument("--statements", type=int, nargs="+", default=[100, 300, 1000])
    bench.add_argument("--tables", type=int, default=8)
    bench.add_argument("--min-candidates", type=int, default=0)
    bench.add_argument("--gap", type=float, default=0.05)
    bench.add_argument("--threads", type=int, default=1)
    bench.add_argument("--out", help="write the CSV here (default stdout)")
    bench.set_defaults(func=cmd_bench)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--listen", default="127.0.0.1:7911", help="bind address host:port")
    serve.set_defaults(func=cmd_serve)
    return parser


def _session_args(p):
    p.add_argument("--catalog", required=True, help="catalog JSON document")
    p.add_argument("--workload", required=True, help="workload text file")
    p.add_argument("--constraints", help="constraint DSL file")
    p.add_argument("--dba-candidates", help="JSON list of administrator indexes")


def _solver_args(p):
    p.add_argument("--gap", type=float, default=0.05, help="optimality-gap threshold")
    p.add_argument("--time-limit", type=float, help="wall-clock limit in seconds")
    p.add_argument("--threads", type=int, default=1)


def _load_session(args) -> advisor.Session:
    with open(args.catalog) as fp:
        catalog_doc = json.load(fp)
    with open(args.workload) as fp:
        workload_text = fp.read()
    constraints_text = ""
    if args.constraints:
        with open(args.constraints) as fp:
            constraints_text = fp.read()
    dba = None
    if args.dba_candidates:
        with open(args.dba_candidates) as fp:
            dba = json.load(fp)
    return advisor.create_session(catalog_doc, workload_text, constraints_text, dba)


def _solver_options(args, progress=None) -> SolverOptions:
    return SolverOptions(
        gap_threshold=args.gap,
        time_limit=args.time_limit,
        threads=args.threads,
        progress=progress,
    )


def _write_json(payload, path: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fp:
            fp.write(text + "\n")
    else:
        print(text)


def cmd_solve(args) -> int:
    session = _load_session(args)

    progress_rows = []
    progress = progress_rows.append if args.progress_log else None
    rec = advisor.recommend(session, _solver_options(args, progress))

    if args.progress_log:
        with open(args.progress_log, "w") as fp:
            fp.write("elapsed_ms,incumbent,lower_bound,gap,nodes_explored\n")
            for ev in progress_rows:
                fp.write(
                    f"{ev.elapsed_ms:.3f},{ev.incumbent!r},{ev.lower_bound!r},"
                    f"{ev.gap!r},{ev.nodes_explored}\n"
                )
    if args.dump_bip:
        with open(args.dump_bip, "w") as fp:
            session.problem.bip.dump_lp(fp)
    if args.dump_templates:
        _write_json(
            [tps.to_debug_dict() for tps in session.problem.caches.values()],
            args.dump_templates,
        )
    _write_json(rec.to_dict(), args.out)
    return EXIT_OK


def cmd_pareto(args) -> int:
    session = _load_session(args)
    points = advisor.run_pareto(
        session, epsilon=args.epsilon, max_points=args.max_points,
        options=_solver_options(args),
    )
    payload = [p.to_dict() for p in points]
    _write_json(payload, args.out)
    if args.svg:
        _write_scatter_svg(points, args.svg)
    return EXIT_OK


def _write_scatter_svg(points, path: str):
    xs = [p.objectives[1] for p in points]
    ys = [p.objectives[0] for p in points]
    w, h, margin = 480, 320, 40
    xr = max(xs) - min(xs) or 1.0
    yr = max(ys) - min(ys) or 1.0

    def sx(x):
        return margin + (x - min(xs)) / xr * (w - 2 * margin)

    def sy(y):
        return h - margin - (y - min(ys)) / yr * (h - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    parts.append(f'<rect width="{w}" height="{h}" fill="white"/>')
    coords = sorted(zip(xs, ys))
    path_d = " ".join(f"{'M' if i == 0 else 'L'}{sx(x):.1f},{sy(y):.1f}"
                      for i, (x, y) in enumerate(coords))
    parts.append(f'<path d="{path_d}" stroke="#888" fill="none"/>')
    for x, y in coords:
        parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="4" fill="#c33"/>')
    parts.append("</svg>")
    with open(path, "w") as fp:
        fp.write("\n".join(parts))


def cmd_oracle_check(args) -> int:
    seeds = range(args.start_seed, args.start_seed + args.seeds)
    failures = 0
    print(f"{'seed':>6}  {'|S|':>4}  {'|W|':>4}  result")
    for seed in seeds:
        built = synth.build_instance(synth.random_instance(seed))
        row = synth.check_equivalence(built, threads=args.threads)
        mark = "PASS" if row.agree else f"FAIL ({row.detail})"
        if not row.agree:
            failures += 1
        print(f"{row.seed:>6}  {row.candidates:>4}  {row.statements:>4}  {mark}")
    print(f"{args.seeds - failures}/{args.seeds} instances agree with the oracle")
    return EXIT_OK if failures == 0 else EXIT_ERROR


def cmd_bench(args) -> int:
    lines = [synth.BENCH_CSV_HEADER]
    for n in args.statements:
        instance = synth.bench_instance(
            n, n_tables=args.tables, min_candidates=args.min_candidates
        )
        row = synth.run_bench(
            instance, label=f"w{n}",
            options=SolverOptions(gap_threshold=args.gap, threads=args.threads),
        )
        lines.append(row.as_csv())
        print(lines[-1], file=sys.stderr)
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fp:
            fp.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.listen.rpartition(":")
    app = create_app()
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
