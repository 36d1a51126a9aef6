"""Compare measured speedups in a bench CSV against the analytic maximum.

    python3 scripts/overlay.py sweep.csv
"""
import csv
import statistics
import sys
from collections import defaultdict

from batchdes.analytics import SpeedupModel, max_speedup


def main(path):
    groups = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["mode"] == "batched":
                groups[(int(row["n"]), float(row["p_set"]))].append(float(row["speedup"]))
    print(f"{'n':>2} {'p_set':>6} {'runs':>4} {'mean':>7} {'stdev':>6} {'s_max':>7}")
    for (n, p), vals in sorted(groups.items()):
        sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
        s_max = max_speedup(SpeedupModel.from_p_set(n, p), allow_limit=True)
        print(f"{n:>2} {p:>6.2f} {len(vals):>4} {statistics.fmean(vals):>7.3f} {sd:>6.3f} {s_max:>7.3f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "sweep.csv")
