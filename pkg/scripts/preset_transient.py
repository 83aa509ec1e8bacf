"""Joint-quadrature variances of the feedback squeezing preset from vacuum.

Prints both quadrature pairs against time for several Fock cutoffs: the pair
squeezed by a1 a2 + h.c. stays at the vacuum level 1/2 until the cutoff is
felt, while the (x1 - x2, y1 + y2) pair grows as 1/2 + kappa t.

    python3 scripts/preset_transient.py --t-final 1 --dims 8 10 12
"""
import argparse

from feedbacksim.feedback import squeeze_feedback
from feedbacksim.lindblad import evolve, vacuum
from feedbacksim.squeeze import joint_moments


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--t-final", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--dims", type=int, nargs="+", default=[8, 10, 12])
    args = ap.parse_args(argv)

    print("fock_dim,t,squeezed_V_minus,squeezed_V_plus,literal_V_minus,literal_V_plus,top_level")
    for d in args.dims:
        spec = squeeze_feedback(args.kappa, d)
        traj = evolve(spec, vacuum(spec.space), args.t_final, args.dt, stride=args.stride)
        for t, s in zip(traj.times, traj.states):
            sq = joint_moments(s)
            lit = joint_moments(s, phase=0.0)
            print(f"{d},{t:.6g},{sq[0]:.10f},{sq[1]:.10f},{lit[0]:.10f},{lit[1]:.10f},"
                  f"{s.top_level_population():.3e}")


if __name__ == "__main__":
    main()
