"""Command-line entry point.

Exit codes: 0 success, 1 usage/configuration error, 2 stage failure.
BLAS threading is pinned before numpy loads: the small-matrix GEMMs here
run faster single-threaded and a fixed thread count keeps artifacts
bit-reproducible; parallelism comes from the pipeline's worker pool.
"""

from __future__ import annotations

import argparse
import os
import sys

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


STAGE_COMMANDS = {
    "gen-data": "data",
    "train-supernets": "supernets",
    "build-sets": "sets",
    "merge": "merge",
    "noise-campaign": "noise",
    "augment": "augment",
    "fit-predictor": "predictor",
    "search": "search",
}


def build_parser() -> _Parser:
    parser = _Parser(prog="soapnas", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text, needs_out=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file (default: desk preset)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if needs_out:
            p.add_argument("--out", required=True, help="run directory")
        return p

    for name, stage in STAGE_COMMANDS.items():
        add(name, f"run the pipeline through the '{stage}' stage")
    add("run-full", "run every stage and write run_report.json")
    p = add("ablate", "k / x ablation sweeps")
    p.add_argument("--k-values", default="1,2,3,4,5,6,7,8", help="comma-separated k list")
    p.add_argument("--x-values", default="1,3,5,7", help="comma-separated x list")
    p.add_argument("--repeats", type=int, default=3)
    p = add("bench-latency", "time single-map queries of the finalized model")
    p.add_argument("--iters", type=int, default=200)
    add("report", "re-emit the report bundle from run artifacts")
    return parser


def _load_config(args):
    from .config import RunConfig, load_config

    config = load_config(args.config) if args.config else RunConfig().validate()
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed).validate()
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 1

    from .errors import BadConfig, SoapNasError
    from . import pipeline as pl

    try:
        config = _load_config(args)
    except BadConfig as exc:
        print(f"soapnas: configuration error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command in STAGE_COMMANDS:
            pipe = pl.Pipeline(config, args.out)
            pipe.run_through(STAGE_COMMANDS[args.command])
            print(f"pipeline is complete through '{STAGE_COMMANDS[args.command]}' in {args.out}")
        elif args.command == "run-full":
            report = pl.Pipeline(config, args.out).run_full()
            print(f"run complete: {args.out}")
            for key, value in report.headline.items():
                print(f"  {key} = {value}")
        elif args.command == "ablate":
            k_values = [int(v) for v in args.k_values.split(",") if v]
            x_values = [int(v) for v in args.x_values.split(",") if v]
            k_path, x_path = pl.ablation_sweep(
                config, k_values, x_values, args.repeats, args.out
            )
            print(f"wrote {k_path} and {x_path}")
        elif args.command == "bench-latency":
            stats = pl.benchmark_query_latency(args.out, n_iters=args.iters)
            print(
                f"median {stats['median_ms']:.3f} ms, p90 {stats['p90_ms']:.3f} ms "
                f"over {stats['n_iters']} iterations"
            )
        elif args.command == "report":
            out = pl.report(args.out)
            print(f"report bundle written to {out}")
        else:  # pragma: no cover - argparse restricts choices
            parser.print_help(sys.stderr)
            return 1
    except BadConfig as exc:
        print(f"soapnas: configuration error: {exc}", file=sys.stderr)
        return 1
    except SoapNasError as exc:
        print(f"soapnas: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
