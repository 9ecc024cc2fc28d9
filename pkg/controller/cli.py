"""
Command-line front end.

    main.py run SCENARIO.json [--config C.json] [--seed S] [--out-dir D] [--mode quad|hyperplane]
    main.py bench "scenarios/passage_*.json" [--runs 10] [--out table.json] [--workers W]
    main.py separate A.csv B.csv [--degree 2] [--margin 0.01] [--plot out.svg]

Exit codes:
    run       0 success, 2 completed with a collision, 3 failed, 1 config error
    bench     0 done (per-run failures are recorded in the table), 1 no scenario / config error
    separate  0 certificate, 4 infeasible, 3 LP breakdown, 1 bad input
"""

import argparse
import glob
import logging
import os
import sys

from model.scenario import ConfigError, load_scenario
from solver.obstacle_pipeline import RawCloud
from solver.separation import SeparationError, find_separator
from view.report_panel import format_certificate, format_run, format_table

from .bench import run_battery, write_table_json, write_timing_json
from .config import load_config
from .sim_controller import run_scenario, write_run_artifacts

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INCOMPLETE = 2
EXIT_FAILED = 3
EXIT_INFEASIBLE = 4


def cmd_run(args):
    try:
        scenario = load_scenario(args.scenario)
        config = load_config(args.config)
    except ConfigError as e:
        print(f"[Run] config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_scenario(scenario, config, seed=args.seed, mode=args.mode)
    out_dir = os.path.join(args.out_dir, scenario.name)
    paths = write_run_artifacts(result, scenario, out_dir)
    print(format_run(result.metrics))
    print(f"[Run] artifacts in {out_dir} ({', '.join(sorted(paths))})")
    if result.metrics.success:
        return EXIT_OK
    if result.metrics.completion:
        return EXIT_INCOMPLETE
    return EXIT_FAILED


def cmd_bench(args):
    files = sorted(glob.glob(args.scenarios))
    if not files:
        print(f"[Bench] no scenario matches {args.scenarios!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scenarios = [load_scenario(f) for f in files]
        config = load_config(args.config)
    except ConfigError as e:
        print(f"[Bench] config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.runs < 1:
        print("[Bench] --runs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    rows, per_run = run_battery(scenarios, config, runs=args.runs, mode=args.mode,
                                workers=args.workers, cache_dir=args.cache_dir,
                                base_seed=args.seed)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_table_json(rows, per_run, args.out)
    stem, _ = os.path.splitext(args.out)
    write_timing_json(per_run, stem + "_timing.json")
    print(format_table(rows))
    return EXIT_OK


def cmd_separate(args):
    try:
        A = RawCloud.from_csv(args.points_a).points
        B = RawCloud.from_csv(args.points_b).points
        cert = find_separator(A, B, args.degree, args.margin)
    except (OSError, ValueError) as e:
        print(f"[Separate] bad input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SeparationError as e:
        print(f"[Separate] LP breakdown: {e}", file=sys.stderr)
        return EXIT_FAILED
    if args.plot:
        from view.plot_renderer import render_separation

        render_separation(A, B, cert, args.plot)
    if cert is None:
        print(f"[Separate] INFEASIBLE: no degree-{args.degree} separator at margin {args.margin:g}")
        return EXIT_INFEASIBLE
    print(format_certificate(cert))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Trajectory planning with polynomial separating hypersurfaces.")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--config", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out-dir", default="runs")
    p_run.add_argument("--mode", choices=("quad", "hyperplane"), default=None)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="seeded batteries over scenario files")
    p_bench.add_argument("scenarios", help="glob pattern of scenario files")
    p_bench.add_argument("--runs", type=int, default=10)
    p_bench.add_argument("--out", default="table.json")
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--mode", choices=("quad", "hyperplane"), default=None)
    p_bench.add_argument("--seed", type=int, default=0, help="first seed of each battery")
    p_bench.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p_bench.add_argument("--cache-dir", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_sep = sub.add_parser("separate", help="find a separator between two point sets")
    p_sep.add_argument("points_a")
    p_sep.add_argument("points_b")
    p_sep.add_argument("--degree", type=int, choices=(1, 2), default=2)
    p_sep.add_argument("--margin", type=float, default=0.01)
    p_sep.add_argument("--plot", default=None)
    p_sep.set_defaults(func=cmd_separate)
    return parser


def setup_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    return args.func(args)
