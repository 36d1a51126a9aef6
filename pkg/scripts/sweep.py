"""Run the 24-configuration sweep (p_set x batch length) and write one CSV.

    python3 scripts/sweep.py --out sweep.csv [--events 10000 --iterations 100000 --runs 5]
"""
import argparse
import logging

from batchdes import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="sweep.csv")
    ap.add_argument("--events", type=int, default=10_000)
    ap.add_argument("--iterations", type=int, default=100_000)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    summaries = bench.sweep(events=args.events, iterations=args.iterations, runs=args.runs,
                            seed=args.seed, out=args.out)
    print(f"{'n':>2} {'p_set':>6} {'speedup':>8} {'s_max':>7} {'ratio':>6}")
    for s in summaries:
        print(f"{s['n']:>2} {s['p_set']:>6.2f} {s['mean_speedup']:>8.3f} {s['s_max']:>7.3f} "
              f"{s['mean_speedup'] / s['s_max']:>6.2f}")


if __name__ == "__main__":
    main()
