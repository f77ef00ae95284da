"""Problem size and solve time against horizon length, both formulations.

Thin wrapper over ``chebmpc bench`` that also prints the warm-time spread
per method, which is the number to look at for horizon independence.
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

from chebmpc.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("bench.csv"))
    ap.add_argument("--q", default="6")
    ap.add_argument("--p", default="5,10,15,20")
    ap.add_argument("--repeats", type=int, default=21)
    args = ap.parse_args()

    code = cli_main(["bench", "--out", str(args.out), "--q", args.q, "--p", args.p, "--repeats", str(args.repeats)])
    if code:
        return code
    with open(args.out) as fh:
        next(fh)  # schema line
        rows = list(csv.DictReader(fh))
    warm = defaultdict(list)
    for r in rows:
        warm[(r["method"], r["q"])].append(float(r["warm_us"]))
    for (method, q), times in sorted(warm.items()):
        print(f"{method} q={q}: warm max/min {max(times) / min(times):.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
