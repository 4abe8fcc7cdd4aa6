#!/usr/bin/env python3
"""Train and evaluate the full five-row experiment matrix.

Builds the default dataset if it does not exist, then runs every
input/label pairing for the requested architectures and writes
matrix.csv with the published reference numbers side by side.

Usage: python3 scripts/run_matrix.py [--dataset DIR] [--out DIR]
           [--archs all|fcn_tiny,...] [--steps N] [--seed N]
Set RADAR_OPENSPACE_THREADS to run matrix cells in parallel processes.
"""

import argparse
import sys
from pathlib import Path

from radar_openspace import cli, dataio


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--out", default="matrix")
    p.add_argument("--archs", default="all")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    if not (Path(a.dataset) / dataio.MANIFEST_NAME).exists():
        rc = cli.main(["simulate", "--out", a.dataset, "--seed", str(a.seed)])
        if rc != 0:
            return rc
    return cli.main([
        "matrix", "--dataset", a.dataset, "--out", a.out,
        "--archs", a.archs, "--steps", str(a.steps), "--seed", str(a.seed),
    ])


if __name__ == "__main__":
    sys.exit(main())
