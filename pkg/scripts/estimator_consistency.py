"""Consistency experiment: relative error of the closed-form estimators of
the mean product matrix and the landmark covariance as the sample size grows.

Prints the median (over seeds) relative Frobenius errors per sample size.

Usage: python3 scripts/estimator_consistency.py [--model kotz:N=2,s=1,r=0.5]
       [--ns 2500 10000 40000] [--trials 20]
"""

import argparse

import numpy as np

from ellipform.estimators import center_sample, estimate_dependent, gram_matrices, sample_moments
from ellipform.linalg import centering_matrix
from ellipform.models import MatrixEllipticalSpec, parse_model_spec, sample_matrix_elliptical


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="kotz:N=2,s=1,r=0.5")
    ap.add_argument("--ns", type=int, nargs="+",
                    default=[2500, 10000, 20000, 40000])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=9000)
    args = ap.parse_args()

    model = parse_model_spec(args.model)
    mu = np.array([[2.0, 1.0], [1.5, -1.0], [-1.6, -0.8], [-1.9, 0.8]])
    h = centering_matrix(4)
    sigma = h @ (np.diag([1.5, 1.0, 2.0, 1.2]) + 0.3) @ h
    m_true = mu @ mu.T
    spec = MatrixEllipticalSpec(mu, sigma, np.eye(2), model)

    print("model:", model.label())
    print("%8s  %12s  %12s  %8s" % ("n", "med rel |dS|", "med rel |dM|", "fails"))
    for idx, n in enumerate(args.ns):
        errs, fails = [], 0
        for trial in range(args.trials):
            ys = sample_matrix_elliptical(spec, n,
                                          seed=args.seed + 10 * trial + idx)
            sm = sample_moments(gram_matrices(center_sample(ys)))
            est = estimate_dependent(sm, model, 2)
            if not (np.isfinite(est.sigmaK).all() and np.isfinite(est.M).all()):
                fails += 1
                continue
            errs.append((
                np.linalg.norm(est.sigmaK - sigma) / np.linalg.norm(sigma),
                np.linalg.norm(est.M - m_true) / np.linalg.norm(m_true)))
        med = np.median(np.asarray(errs), axis=0)
        print("%8d  %12.5f  %12.5f  %8d" % (n, med[0], med[1], fails))


if __name__ == "__main__":
    main()
