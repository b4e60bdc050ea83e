"""Form matrices, form-difference matrices, the T statistic, and the
bootstrap test of mean-form equality between two groups."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import LandmarkSample
from .estimators import (
    center_sample,
    estimate_dependent,
    estimate_independent,
    gram_matrices,
    reconstruct_mean_form,
    sample_moments,
)
from .linalg import centering_matrix


@dataclass
class FormMatrix:
    """Euclidean inter-landmark distance matrix of one configuration."""

    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be symmetric")
        if np.diag(d).any():
            raise ValueError("distance matrix must have a zero diagonal")
        if d.min() < 0:
            raise ValueError("distances must be nonnegative")
        gap = d[:, :, None] - d[:, None, :] - d.T[None, :, :]
        if gap.max() > 1e-8 * max(1.0, d.max()):
            raise ValueError("distances violate the triangle inequality")
        self.dist = d


@dataclass
class FormDifferenceResult:
    """Observed form difference plus its bootstrap null distribution."""

    fdm: np.ndarray
    T_obs: float
    boot_T: list
    p_value: float
    boot_size: int
    n_exceed: int = 0
    n_failed: int = 0

    def __post_init__(self):
        f = np.asarray(self.fdm, dtype=float)
        if np.diag(f).any():
            raise ValueError("form-difference diagonal must be zero")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value must lie in [0, 1]")
        if self.boot_size < 1:
            raise ValueError("boot_size must be positive")
        self.fdm = f

    def to_dict(self):
        return {
            "fdm": self.fdm.tolist(),
            "T_obs": self.T_obs,
            "boot_T": list(self.boot_T),
            "p_value": self.p_value,
            "boot_size": self.boot_size,
            "n_exceed": self.n_exceed,
            "n_failed": self.n_failed,
        }


def form_matrix(x):
    """Euclidean distances between the rows of a landmark matrix.

    Invariant under translation, rotation, and reflection of the rows; scales
    linearly under scaling.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a K x D landmark matrix with K >= 2")
    return FormMatrix(squareform(pdist(x)))


def fdm(mu_x, mu_y):
    """Form-difference matrix: entrywise quotient of two form matrices.

    0/0 entries (the diagonal, and landmark pairs coincident in both forms)
    are set to 0.  A zero denominator under a nonzero numerator means the
    second form is degenerate there: the entry is set to +inf and a warning
    names the offending landmark pairs.
    """
    mu_x = np.asarray(mu_x, dtype=float)
    mu_y = np.asarray(mu_y, dtype=float)
    if mu_x.shape[0] != mu_y.shape[0]:
        raise ValueError("the two mean forms must share the landmark count")
    num = form_matrix(mu_x).dist
    den = form_matrix(mu_y).dist
    out = np.zeros_like(num)
    ok = den > 0
    np.divide(num, den, out=out, where=ok)
    bad = ~ok & (num > 0)
    if bad.any():
        out[bad] = np.inf
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(bad)) if i < j]
        warnings.warn(
            "degenerate denominator form: coincident landmark pairs %s" % pairs,
            RuntimeWarning, stacklevel=2)
    return out


def t_statistic(f):
    """Ratio of the largest to the smallest off-diagonal entry."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] < 2:
        raise ValueError("need a square matrix with off-diagonal entries")
    off = f[~np.eye(f.shape[0], dtype=bool)]
    if not (off > 0).all():
        raise ValueError("off-diagonal form-difference entries must be positive")
    return float(off.max() / off.min())


def group_mean_form(group, model, case="dependent", branch_tol=None):
    """Estimated mean configuration (K x D) of one landmark group.

    Centers the specimens, runs the closed-form moment estimator for the
    chosen case, centers the mean product matrix, and factors it back into
    coordinates (permissive spectral truncation).
    """
    centered = center_sample(group.specimens)
    sm = sample_moments(gram_matrices(centered))
    if case == "dependent":
        est = estimate_dependent(sm, model, group.D, branch_tol=branch_tol)
    elif case == "independent":
        est = estimate_independent(sm, model, group.D, branch_tol=branch_tol)
    else:
        raise ValueError("case must be 'dependent' or 'independent'")
    if not np.isfinite(est.M).all():
        raise ValueError("mean product estimate has non-finite entries")
    h = centering_matrix(group.K)
    return reconstruct_mean_form(h @ est.M @ h, group.D, strict=False)


def _replicate_t(pooled, n_x, n_y, k, d, model, case, rng):
    take_x = [pooled[i] for i in rng.integers(0, len(pooled), size=n_x)]
    take_y = [pooled[i] for i in rng.integers(0, len(pooled), size=n_y)]
    px = LandmarkSample("boot_x", take_x, K=k, D=d)
    py = LandmarkSample("boot_y", take_y, K=k, D=d)
    return t_statistic(fdm(group_mean_form(px, model, case=case),
                           group_mean_form(py, model, case=case)))


def bootstrap_test(group_x, group_y, model, case="dependent", boot_size=100,
                   seed=0):
    """Bootstrap test of equal mean forms between two landmark groups.

    The observed T compares the groups' estimated mean forms.  The null
    distribution resamples both pseudo-groups (original sizes kept) with
    replacement from the pooled specimens, which forces equal mean forms in
    the resampling world, and recomputes T per replicate.  Replicates whose
    estimate fails are dropped and counted; more than 20 percent failures
    aborts.  p uses the add-one correction over the completed replicates.
    """
    if boot_size < 1:
        raise ValueError("boot_size must be positive")
    if (group_x.K, group_x.D) != (group_y.K, group_y.D):
        raise ValueError("groups must share the landmark matrix shape K x D")
    k, d = group_x.K, group_x.D
    for g in (group_x, group_y):
        if g.n < k:
            raise ValueError(
                f"group {g.name!r} needs at least K={k} specimens, has {g.n}")

    diff = fdm(group_mean_form(group_x, model, case=case),
               group_mean_form(group_y, model, case=case))
    t_obs = t_statistic(diff)

    pooled = list(group_x.specimens) + list(group_y.specimens)
    boot = []
    failed = 0
    for child in np.random.SeedSequence(seed).spawn(boot_size):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                t_b = _replicate_t(pooled, group_x.n, group_y.n, k, d, model,
                                   case, np.random.default_rng(child))
        except (ValueError, np.linalg.LinAlgError):
            failed += 1
            continue
        if not np.isfinite(t_b):
            failed += 1
            continue
        boot.append(float(t_b))
    if failed > 0.2 * boot_size:
        raise ValueError(
            f"bootstrap aborted: {failed} of {boot_size} replicates failed to "
            "produce a mean-form estimate")
    n_exceed = int(sum(t >= t_obs for t in boot))
    p = (n_exceed + 1) / (len(boot) + 1)
    return FormDifferenceResult(fdm=diff, T_obs=float(t_obs), boot_T=boot,
                                p_value=float(p), boot_size=int(boot_size),
                                n_exceed=n_exceed, n_failed=failed)
