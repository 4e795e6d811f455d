#!/usr/bin/env python3
"""Refinement experiment: sweep the CHSH extractability bound at several
grid spacings and report how the certified curve approaches the analytic
reference.  Writes one curve JSON/CSV pair per spacing.
"""

import argparse
import pathlib
import time

import numpy as np

from discert.bellops import chsh
from discert.extract import GridSpec, bardyn_locc, xi_lower_bound


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", default="0.04,0.02,0.01", help="comma-separated grid spacings")
    ap.add_argument("--mode", choices=("paper", "tight"), default="paper")
    ap.add_argument("--threads", type=int, default=None, help="worker processes (default: auto)")
    ap.add_argument("--out-dir", default="sweeps")
    args = ap.parse_args()

    f = chsh()
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'delta':>7} {'penalty':>8} {'value(2)':>9} {'value(qmax)':>12} {'max gap':>8} {'wall':>7}")
    for d in (float(s) for s in args.deltas.split(",")):
        t0 = time.perf_counter()
        curve = xi_lower_bound(f, GridSpec(delta=d, mode=args.mode), workers=args.threads)
        wall = time.perf_counter() - t0
        ana = np.array([bardyn_locc(k) for k in curve.omegas])
        gap = float(np.max(ana - curve.values))
        stem = f"curve_{args.mode}_d{d:g}"
        (out / f"{stem}.json").write_text(curve.to_json())
        (out / f"{stem}.csv").write_text(curve.to_csv())
        print(
            f"{d:7g} {curve.penalty:8.4f} {curve.evaluate(2.0):9.6f} "
            f"{curve.evaluate(curve.omegas[-1]):12.6f} {gap:8.6f} {wall:6.1f}s"
        )
    print(f"curves written to {out.resolve()}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
