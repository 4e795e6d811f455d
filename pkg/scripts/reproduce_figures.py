#!/usr/bin/env python3
"""Regenerate the three figure-ready CSV bundles in one go.

Thin wrapper around the `figures` subcommand so every bundle lands in
one directory with its manifest.  Pass --curve to base the G_eps and
eps-vs-n bundles on a swept numeric curve instead of the analytic
reference.
"""

import argparse
import pathlib

from discert.disctl import main as disctl


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="figures")
    ap.add_argument("--curve", default=None, help="numeric curve JSON from `extract`")
    ap.add_argument("--deltas", default="0.05,0.02", help="two spacings for the comparison bundle")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    based = ["--curve", args.curve] if args.curve else []
    threaded = ["--threads", str(args.threads)] if args.threads is not None else []
    jobs = [
        ["figures", "--which", "g-eps", *based, "--out-dir", args.out_dir],
        ["figures", "--which", "eps-vs-n", *based, "--out-dir", args.out_dir],
        ["figures", "--which", "xi-vs-analytic", "--delta", args.deltas, *threaded, "--out-dir", args.out_dir],
    ]
    for argv in jobs:
        rc = disctl(argv)
        if rc != 0:
            return rc
    print(f"figure CSVs in {pathlib.Path(args.out_dir).resolve()}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
