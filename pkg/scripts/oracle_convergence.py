"""Discrete measurement + feedback map vs the synthesized generator, over the step size.

For a few random dim-4 channels prints the relative error of the
Richardson-extrapolated map generator and of the raw one-step difference
quotient, showing the first-order bias the extrapolation removes.

    python3 scripts/oracle_convergence.py --channels 3
"""
import argparse

import numpy as np

from feedbacksim.feedback import channel_generator, discrete_map_oracle, oracle_generator
from feedbacksim.verify import oracle_dt, random_channel, random_density


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    print("channel,dt_over_default,raw_error,extrapolated_error")
    for k in range(args.channels):
        ch = random_channel(rng, 4)
        rho = random_density(rng, 4)
        gen = channel_generator(ch).apply(rho)
        norm = np.linalg.norm(gen, 2)
        base = oracle_dt(ch)
        for f in (100.0, 10.0, 1.0):
            dt = base * f
            raw = (discrete_map_oracle(ch, rho, dt) - rho) / dt
            ext = oracle_generator(ch, rho, dt)
            print(f"{k},{f:g},{np.linalg.norm(raw - gen, 2) / norm:.3e},"
                  f"{np.linalg.norm(ext - gen, 2) / norm:.3e}")


if __name__ == "__main__":
    main()
