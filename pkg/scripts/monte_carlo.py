"""Monte Carlo docking batch with a reproducibility check.

Runs the batch, writes runs.csv and s_band.csv, then optionally reruns it and
compares the files byte for byte.
"""

import argparse
import filecmp
import sys
import time
from pathlib import Path

from chebmpc.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("mc"))
    ap.add_argument("--runs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--verify", action="store_true", help="rerun and compare outputs")
    args = ap.parse_args()

    def batch(out: Path) -> int:
        argv = ["mc", "--out", str(out), "--runs", str(args.runs), "--seed", str(args.seed), "--jobs", str(args.jobs)]
        if args.config:
            argv += ["--config", str(args.config)]
        return cli_main(argv)

    t0 = time.perf_counter()
    if code := batch(args.out):
        return code
    print(f"batch took {time.perf_counter() - t0:.0f} s")
    if args.verify:
        again = args.out / "rerun"
        if code := batch(again):
            return code
        same = all(filecmp.cmp(args.out / f, again / f, shallow=False) for f in ("runs.csv", "s_band.csv"))
        print(f"rerun identical: {same}")
        return 0 if same else 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
