"""Print the generated source of the composed Increment/Set batches.

    python3 scripts/dump_batches.py --max-batch-len 2
"""
import argparse

from batchdes.composer import generate_batch_table, report_generation_stats
from batchdes.poc_model import make_poc_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-batch-len", type=int, default=2)
    args = ap.parse_args()
    table = generate_batch_table(make_poc_model(), args.max_batch_len, backend="python")
    total, reachable, redundant = report_generation_stats(table)
    print(f"# {total} batches: {reachable} reachable, {redundant} redundant (aliased)")
    print(table.source)


if __name__ == "__main__":
    main()
