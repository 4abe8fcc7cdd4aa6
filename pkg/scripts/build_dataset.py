#!/usr/bin/env python3
"""Build the default synthetic dataset (11 sequences x 32 frames, seed 0).

Usage: python3 scripts/build_dataset.py [out_dir] [--seed N]
"""

import argparse
import sys

from radar_openspace import cli


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out_dir", nargs="?", default="dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sequences", type=int, default=11)
    p.add_argument("--frames-per-seq", type=int, default=32)
    a = p.parse_args()
    return cli.main([
        "simulate", "--out", a.out_dir, "--seed", str(a.seed),
        "--n-sequences", str(a.n_sequences),
        "--frames-per-seq", str(a.frames_per_seq),
    ])


if __name__ == "__main__":
    sys.exit(main())
