"""Bootstrap test calibration experiment: empirical null rejection rate at a
chosen level, plus power against a single stretched inter-landmark distance.

Usage: python3 scripts/bootstrap_calibration.py [--trials 50] [--boot 100]
       [--n 25] [--stretch 0.2] [--level 0.1]
"""

import argparse

import numpy as np

from ellipform.data import LandmarkSample
from ellipform.formdiff import bootstrap_test
from ellipform.models import EllipticalModel, MatrixEllipticalSpec, sample_matrix_elliptical


def hexagon():
    ang = 2.0 * np.pi * np.arange(6) / 6.0
    return np.column_stack([np.cos(ang), np.sin(ang)])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--boot", type=int, default=100)
    ap.add_argument("--n", type=int, default=25)
    ap.add_argument("--noise", type=float, default=0.01,
                    help="landmark covariance scale (sigma_K = noise * I)")
    ap.add_argument("--stretch", type=float, default=0.2,
                    help="relative stretch of the (1,2) distance under the "
                         "alternative")
    ap.add_argument("--level", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=5000)
    args = ap.parse_args()

    model = EllipticalModel("gaussian")
    mu = hexagon()
    mu_alt = mu.copy()
    mu_alt[0] += args.stretch * (mu[0] - mu[1])
    spec = MatrixEllipticalSpec(mu, args.noise * np.eye(6), np.eye(2), model)
    spec_alt = MatrixEllipticalSpec(mu_alt, args.noise * np.eye(6), np.eye(2),
                                    model)

    null_p, power_p = [], []
    for trial in range(args.trials):
        draw = lambda sp, off: LandmarkSample.from_specimens(
            "g%d" % off, sample_matrix_elliptical(
                sp, args.n, seed=args.seed + 3 * trial + off))
        ga, gb, gc = draw(spec, 0), draw(spec, 1), draw(spec_alt, 2)
        null_p.append(bootstrap_test(ga, gb, model, boot_size=args.boot,
                                     seed=7000 + trial).p_value)
        power_p.append(bootstrap_test(ga, gc, model, boot_size=args.boot,
                                      seed=8000 + trial).p_value)

    null_p = np.asarray(null_p)
    power_p = np.asarray(power_p)
    print("trials=%d boot=%d n=%d noise=%g" %
          (args.trials, args.boot, args.n, args.noise))
    print("null: rejection rate at %.2f = %.3f   (median p %.3f)"
          % (args.level, float((null_p <= args.level).mean()),
             float(np.median(null_p))))
    print("alt (stretch %.0f%%): rejection rate = %.3f   (median p %.3f)"
          % (100 * args.stretch, float((power_p <= args.level).mean()),
             float(np.median(power_p))))


if __name__ == "__main__":
    main()
