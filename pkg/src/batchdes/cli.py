"""Command-line entry point: ``batchdes run|counts|smax``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .analytics import DegenerateProbability
from .codec import CodecError
from .core import ModelError
from .engine import EngineError


def _add_run(sub):
    p = sub.add_parser("run", help="time batched vs one-by-one execution of the Increment/Set model")
    p.add_argument("--max-batch-len", type=int, default=5)
    p.add_argument("--p-set", type=float, default=0.5)
    p.add_argument("--events", type=int, default=10_000)
    p.add_argument("--iterations", type=int, default=100_000)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=bench.MODES, default="both")
    p.add_argument("--out", default=None, help="CSV output path (default: CSV on stdout)")
    p.add_argument("--backend", choices=("numba", "python"), default="numba")
    p.add_argument("--repeats", type=int, default=3, help="timed executions per mode and run; the fastest counts")
    p.add_argument("--no-warmup", action="store_true")


def _add_counts(sub):
    p = sub.add_parser("counts", help="batch counts for an alphabet size and batch length")
    p.add_argument("--types", type=int, required=True, help="number of event types |Σ|")
    p.add_argument("--max-batch-len", type=int, required=True)
    p.add_argument("--composed", action="store_true", help="also generate the table and check its counts")


def _add_smax(sub):
    p = sub.add_parser("smax", help="closed-form expected costs and maximum speedup")
    p.add_argument("--max-batch-len", type=int, required=True)
    p.add_argument("--p-set", type=float, required=True)
    p.add_argument("--monte-carlo", action="store_true")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="batchdes", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_counts(sub)
    _add_smax(sub)
    return parser


def _print_table(res: dict, file=None):
    file = file or sys.stdout
    width = max(len(k) for k in res)
    for k, v in res.items():
        val = f"{v:.6g}" if isinstance(v, float) else str(v)
        print(f"{k:<{width}}  {val}", file=file)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = bench.BenchConfig(
                max_batch_len=args.max_batch_len, p_set=args.p_set, events=args.events,
                iterations=args.iterations, runs=args.runs, seed=args.seed, mode=args.mode,
                out=args.out, backend=args.backend, warmup=not args.no_warmup, repeats=args.repeats,
            )
            records = bench.cmd_run(cfg)
            summary = bench.summarize(records, cfg)
            if args.out is None:
                sys.stdout.write(bench.records_to_csv(records))
                print(bench.format_summary(summary), file=sys.stderr)
            else:
                print(bench.format_summary(summary))
        elif args.command == "counts":
            _print_table(bench.cmd_counts(args.types, args.max_batch_len, args.composed))
        elif args.command == "smax":
            _print_table(bench.cmd_smax(args.max_batch_len, args.p_set, args.monte_carlo,
                                        args.samples, args.seed))
    except (CodecError, ModelError, EngineError, DegenerateProbability, ValueError, AssertionError) as exc:
        print(f"batchdes {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
