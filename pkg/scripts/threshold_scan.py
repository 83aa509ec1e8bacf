"""Stationary Duan sum across the entanglement threshold, closed form vs full model.

    python3 scripts/threshold_scan.py --gm 5 --gp 1 --fock-dim 14 > scan.csv

Rows past the stability boundary g = (gm - gp)/2 have no stationary state; the
simulated column there reflects the Fock cutoff only.
"""
import argparse
import sys

import numpy as np

from feedbacksim.lindblad import format_float
from feedbacksim.squeeze import SqueezeParams, crossing, threshold_scan


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gm", type=float, default=5.0)
    ap.add_argument("--gp", type=float, default=1.0)
    ap.add_argument("--from", dest="lo", type=float, default=0.5)
    ap.add_argument("--to", dest="hi", type=float, default=1.5)
    ap.add_argument("--points", type=int, default=21)
    ap.add_argument("--fock-dim", type=int, default=12)
    args = ap.parse_args(argv)

    gs = np.linspace(args.lo, args.hi, args.points) * args.gp
    rows = threshold_scan(gs, args.gm, args.gp, fock_dim=args.fock_dim)
    out = sys.stdout
    out.write("g,closed_duan_sum,sim_duan_sum,truncation,stable\n")
    for g, r in zip(gs, rows):
        stable = SqueezeParams(float(g), args.gm, args.gp).stable
        out.write(",".join([format_float(g), format_float(r["duan_sum"]), format_float(r["sim_duan_sum"]),
                            format_float(r["truncation"]), str(stable).lower()]) + "\n")
    closed = crossing(gs, [r["duan_sum"] for r in rows], 1.0)
    sim = crossing(gs, [r["sim_duan_sum"] for r in rows], 1.0)
    sys.stderr.write(f"crossing closed={closed} simulated={sim} "
                     f"stability_boundary={(args.gm - args.gp) / 2:g}\n")


if __name__ == "__main__":
    main()
