"""Command-line front end.

Exit codes: 0 when an effect is estimated (or a command succeeds), 2 when
the search returns NA, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import rows_csv, run_bench, summarize, summary_csv, summary_table
from .data import read_csv, write_csv
from .discovery import FisherZBackend, LearnerConfig, OracleBackend, learn_pag
from .exceptions import AivgtError
from .graph import Dag, GraphKind, MixedGraph
from .graphio import read_graph, serialize_graph, write_graph
from .search import AivgtConfig, run_aivgt, run_shared_conditioning_baseline
from .simdata import Scenario, SimConfig, generate, observed_columns, true_beta, true_dag
from .stats import VARIANCE_MODES, cov_matrix

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NA = 2

log = logging.getLogger("aivgt")


def _alpha(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=_alpha, default=0.05, help="CI and tetrad test level (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--tetrad-var", choices=VARIANCE_MODES, default="bootstrap",
                   help="variance estimate for the tetrad test")
    p.add_argument("--n-boot", type=_positive, default=500, help="bootstrap replicates")
    p.add_argument("--max-cond-size", type=_nonneg, default=None,
                   help="cap on conditioning-set size in the skeleton search")


def _config(args) -> AivgtConfig:
    return AivgtConfig(args.alpha, args.tetrad_var, args.n_boot, args.seed, args.max_cond_size)


def cmd_estimate(args) -> int:
    data = read_csv(args.data)
    cfg = _config(args)
    graph = None
    if args.graph:
        graph = read_graph(args.graph)
        if not isinstance(graph, MixedGraph) or graph.kind is not GraphKind.PAG:
            raise AivgtError("--graph must be a PAG file")
    run = run_shared_conditioning_baseline if args.shared_conditioning else run_aivgt
    report = run(data, args.treatment, args.outcome, cfg, graph=graph)
    print(report.summary())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if report.estimated else EXIT_NA


def cmd_learn_graph(args) -> int:
    cfg = LearnerConfig(args.alpha, args.max_cond_size)
    if args.oracle:
        dag = read_graph(args.oracle)
        if not isinstance(dag, Dag):
            raise AivgtError("--oracle must be a DAG file")
        res = learn_pag(OracleBackend(dag), cfg=cfg)
    else:
        data = read_csv(args.data)
        res = learn_pag(FisherZBackend(cov_matrix(data), args.alpha), cfg=cfg)
    text = serialize_graph(res.graph)
    if args.out:
        write_graph(res.graph, args.out)
    else:
        sys.stdout.write(text)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.list:
        for sc in Scenario:
            print(f"{sc.value}: {', '.join(observed_columns(sc, False))} (+{20} noise columns)")
        return EXIT_OK
    if args.scenario is None or args.out is None:
        raise AivgtError("simulate needs --scenario and --out (or --list)")
    sc = Scenario.parse(args.scenario)
    data = generate(sc, SimConfig(n=args.n, seed=args.seed, noise_block=not args.no_noise))
    write_csv(data, args.out)
    print(f"wrote {data.n} rows x {data.p} columns to {args.out}")
    print(f"true beta: {true_beta(sc)}")
    if args.dag_out:
        write_graph(true_dag(sc, noise_block=not args.no_noise), args.dag_out)
        print(f"true DAG: {args.dag_out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    rows = run_bench(args.scenarios, args.reps, args.n, cfg, seed0=args.seed)
    summary = summarize(rows)
    print(summary_table(summary))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench_rows.csv").write_text(rows_csv(rows), encoding="utf-8")
        (out / "bench_summary.csv").write_text(summary_csv(summary), encoding="utf-8")
        print(f"wrote {out / 'bench_rows.csv'} and {out / 'bench_summary.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aivgt", description="Instrument search and effect estimation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the effect of a treatment on an outcome")
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--treatment", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--graph", help="use this PAG file instead of learning one")
    p.add_argument("--json", help="write the full report as JSON")
    p.add_argument("--shared-conditioning", action="store_true",
                   help="condition both instruments on all other covariates")
    _add_search_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("learn-graph", help="learn a PAG from data or from a DAG oracle")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV file")
    src.add_argument("--oracle", help="DAG file; d-separation replaces CI tests")
    p.add_argument("--out", help="output PAG file (default stdout)")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--max-cond-size", type=_nonneg, default=None)
    p.set_defaults(func=cmd_learn_graph)

    p = sub.add_parser("simulate", help="draw a synthetic scenario dataset")
    p.add_argument("--scenario", help="one of a-e")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV")
    p.add_argument("--dag-out", help="also write the true DAG")
    p.add_argument("--no-noise", action="store_true", help="omit the 20 noise columns")
    p.add_argument("--list", action="store_true", help="list scenarios and exit")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="percent-bias table over scenarios and seeds")
    p.add_argument("--scenario", dest="scenarios", default="abcde",
                   help="scenario letters to run, e.g. 'cde' (default all)")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=_positive, default=30)
    p.add_argument("--out", help="directory for bench_rows.csv and bench_summary.csv")
    _add_search_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AivgtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
