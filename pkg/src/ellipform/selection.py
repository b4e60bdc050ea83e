"""Distances between estimated covariance structures and mean shapes, the
coefficient-of-variation criterion, and the model-selection report."""

from dataclasses import dataclass

import numpy as np

from .estimators import reconstruct_mean_form
from .linalg import centering_matrix


def _psd_factor(s, side):
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"{side} covariance must be a square matrix")
    if not np.isfinite(s).all():
        raise ValueError(f"{side} covariance has non-finite entries")
    if np.abs(s - s.T).max() > 1e-8 * max(np.abs(s).max(), 1.0):
        raise ValueError(f"{side} covariance must be symmetric")
    lam, v = np.linalg.eigh((s + s.T) / 2)
    if lam.min() < -1e-8 * max(lam.max(), 1.0):
        raise ValueError(f"{side} covariance must be positive semidefinite")
    return v * np.sqrt(np.clip(lam, 0.0, None))


def cov_distance(s1, s2):
    """Procrustes size-and-shape distance between two PSD matrices.

    Square-root factors are matched over the orthogonal group, so the value
    does not depend on which factor either input gets.  Rank-deficient
    inputs are fine.
    """
    a1 = np.asarray(s1, dtype=float)
    a2 = np.asarray(s2, dtype=float)
    l1 = _psd_factor(a1, "first")
    l2 = _psd_factor(a2, "second")
    if l1.shape != l2.shape:
        raise ValueError("covariance matrices must share their size")
    if np.array_equal(a1, a2):
        return 0.0
    # canonical factor order keeps the value bit-identical under argument swap
    if a2.tobytes() < a1.tobytes():
        l1, l2 = l2, l1
    cross = np.linalg.svd(l2.T @ l1, compute_uv=False).sum()
    d2 = float((l1 * l1).sum() + (l2 * l2).sum() - 2.0 * cross)
    return float(np.sqrt(max(d2, 0.0)))


def _preshape(mu, side):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 2:
        raise ValueError(f"{side} configuration must be a K x D matrix")
    if not np.isfinite(mu).all():
        raise ValueError(f"{side} configuration has non-finite entries")
    z = mu - mu.mean(axis=0)
    size = np.linalg.norm(z)
    if size <= 1e-12 * max(np.abs(mu).max(), 1.0):
        raise ValueError(f"{side} configuration has zero size after centering")
    return z / size


def shape_distance(mu1, mu2, allow_reflection=False):
    """Riemannian shape distance between two landmark configurations.

    Centers and unit-norms both configurations, then rotates one optimally
    onto the other; translation, rotation, and positive scaling of either
    argument leave the value unchanged.  Reflected configurations count as
    different shapes unless allow_reflection is set.
    """
    z1 = _preshape(mu1, "first")
    z2 = _preshape(mu2, "second")
    if z1.shape != z2.shape:
        raise ValueError("configurations must share their K x D shape")
    if np.array_equal(z1, z2):
        # arccos near 1 would otherwise leave ~1e-8 of roundoff here
        return 0.0
    u, sig, vt = np.linalg.svd(z1.T @ z2)
    corr = sig.sum()
    if not allow_reflection and np.linalg.det(u) * np.linalg.det(vt) < 0:
        corr -= 2.0 * sig[-1]
    return float(np.arccos(np.clip(corr, -1.0, 1.0)))


def cv_criterion(d_sc, d_lc):
    """Percent coefficient of variation of the two control distances.

    Population standard deviation of the pair over its mean, times 100.
    """
    if d_sc < 0 or d_lc < 0:
        raise ValueError("distances must be nonnegative")
    mean = (d_sc + d_lc) / 2.0
    if mean == 0.0:
        raise ValueError("both distances are zero")
    return float(100.0 * (abs(d_sc - d_lc) / 2.0) / mean)


def _cv_percent(dists):
    arr = np.asarray(dists, dtype=float)
    mean = arr.mean()
    if mean == 0.0:
        return 0.0
    if arr.size == 2:
        return float(100.0 * (abs(arr[0] - arr[1]) / 2.0) / mean)
    return float(100.0 * arr.std() / mean)


@dataclass
class SelectionReport:
    """Pairwise distance tables plus the per-model CV criterion."""

    models: list
    groups: list
    control: str
    cov_labels: list
    cov_dist: np.ndarray
    cv_pct: dict
    shape_labels: list
    shape_dist: np.ndarray

    def __post_init__(self):
        for name in ("cov_dist", "shape_dist"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.array_equal(mat, mat.T) or np.diag(mat).any():
                raise ValueError(f"{name} must be symmetric with a zero diagonal")
            if mat.min() < 0:
                raise ValueError(f"{name} must be nonnegative")
            setattr(self, name, mat)
        if len(self.cov_labels) != self.cov_dist.shape[0]:
            raise ValueError("cov_dist size must match its labels")
        if len(self.shape_labels) != self.shape_dist.shape[0]:
            raise ValueError("shape_dist size must match its labels")

    def to_dict(self):
        return {
            "models": list(self.models),
            "groups": list(self.groups),
            "control": self.control,
            "cov_labels": list(self.cov_labels),
            "cov_dist": self.cov_dist.tolist(),
            "cv_pct": dict(self.cv_pct),
            "shape_labels": list(self.shape_labels),
            "shape_dist": self.shape_dist.tolist(),
        }


def _psd_clip(s):
    # misspecified fits can leave small negative eigenvalues in sigmaK
    s = np.asarray(s, dtype=float)
    s = (s + s.T) / 2
    lam, v = np.linalg.eigh(s)
    if lam.min() >= 0.0:
        return s
    return (v * np.clip(lam, 0.0, None)) @ v.T


def _mean_shape(est, d):
    if est.mu is not None:
        return np.asarray(est.mu, dtype=float)
    if d is None:
        raise ValueError(
            "pass the coordinate dimension d to rebuild mean shapes from "
            "estimates without stored coordinates")
    m = np.asarray(est.M, dtype=float)
    h = centering_matrix(m.shape[0])
    return reconstruct_mean_form(h @ m @ h, d, strict=False)


def build_selection_report(fits, references=(), d=None):
    """Assemble the distance tables and the CV criterion per model.

    fits: list of (model label, {group name: MomEstimate}); every model must
    cover the same groups.  The control group is the one named 'control'
    (case-insensitive) when present, else the last group in input order; the
    CV per model comes from its non-control-to-control covariance distances.
    references: optional (label, K x D configuration) pairs appended to the
    shape-distance table.
    """
    if not fits:
        raise ValueError("need at least one fitted model")
    labels = [lab for lab, _ in fits]
    if len(set(labels)) != len(labels):
        raise ValueError("model labels must be distinct")
    groups = list(fits[0][1].keys())
    for lab, ests in fits:
        if set(ests) != set(groups):
            raise ValueError(
                f"model {lab!r} does not cover the group set {sorted(groups)}")
    control = next((g for g in groups if g.lower() == "control"), groups[-1])

    pairs = [(lab, g) for lab in labels for g in groups]
    covs = {(lab, g): _psd_clip(ests[g].sigmaK)
            for lab, ests in fits for g in groups}
    m = len(pairs)
    cov_mat = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            val = cov_distance(covs[pairs[i]], covs[pairs[j]])
            cov_mat[i, j] = cov_mat[j, i] = val

    cv = {}
    for lab, _ in fits:
        dists = [cov_distance(covs[(lab, g)], covs[(lab, control)])
                 for g in groups if g != control]
        # a lone control group leaves the criterion undefined
        cv[lab] = _cv_percent(dists) if dists else None

    shapes = [_mean_shape(ests[control], d) for _, ests in fits]
    shape_labels = list(labels)
    for lab, ref in references:
        shapes.append(np.asarray(ref, dtype=float))
        shape_labels.append(lab)
    r = len(shapes)
    shape_mat = np.zeros((r, r))
    for i in range(r):
        for j in range(i + 1, r):
            val = shape_distance(shapes[i], shapes[j])
            shape_mat[i, j] = shape_mat[j, i] = val

    return SelectionReport(models=labels, groups=groups, control=control,
                           cov_labels=["%s:%s" % p for p in pairs],
                           cov_dist=cov_mat, cv_pct=cv,
                           shape_labels=shape_labels, shape_dist=shape_mat)
