"""Closed-form method-of-moments estimation from landmark configurations.

Pipeline pieces: centering and Gram reduction of raw configurations,
first/second sample moments of the Gram matrices, quadratic-solver
estimators for the mean form and landmark covariance, eigendecomposition
reconstruction of a mean configuration, an alternating refinement for the
column covariance, and an unconstrained maximum-likelihood baseline.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .linalg import centering_matrix, sym_ginverse, vec
from .models import moment_constants


@dataclass
class SampleMoments:
    """Mean Gram matrix and covariance of its stacked entries.

    S uses divisor n and is indexed by column-stacked (vec) positions, so
    the variance of entry (i, j) sits at diagonal position j*K + i.
    """

    Bbar: np.ndarray
    S: np.ndarray
    n: int

    def __post_init__(self):
        self.Bbar = np.asarray(self.Bbar, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        k = self.Bbar.shape[0]
        if self.Bbar.shape != (k, k):
            raise ValueError("Bbar must be square")
        if np.abs(self.Bbar - self.Bbar.T).max() > 1e-8 * max(1.0, np.abs(self.Bbar).max()):
            raise ValueError("Bbar must be symmetric")
        if self.S.shape != (k * k, k * k):
            raise ValueError("S must be K^2 x K^2")
        if self.n < 2:
            raise ValueError("need at least two configurations")


@dataclass
class MomEstimate:
    """Estimated mean form M, landmark covariance, and solver diagnostics.

    mu and sigmaD stay None until reconstruction / refinement fill them.
    """

    M: np.ndarray
    sigmaK: np.ndarray
    mu: np.ndarray | None = None
    sigmaD: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class FlipFlopResult:
    sigmaK: np.ndarray
    sigmaD: np.ndarray
    iterations: int
    converged: bool
    deltas: list


def center_sample(sample):
    """Remove the landmark-mean of every configuration (rows sum to zero)."""
    arrs = [np.asarray(x, dtype=float) for x in sample]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("configurations must share one landmark/dimension shape")
    h = centering_matrix(shape[0])
    return [h @ a for a in arrs]


def gram_matrices(centered):
    """Landmark Gram matrix of every configuration."""
    return [x @ x.T for x in centered]


def sample_moments(b_list):
    """First and second sample moments of a list of Gram matrices."""
    if len(b_list) < 2:
        raise ValueError("need at least two configurations")
    stack = np.stack([np.asarray(b, dtype=float) for b in b_list])
    bbar = stack.mean(axis=0)
    dev = np.stack([vec(b - bbar) for b in stack])
    s = dev.T @ dev / len(b_list)
    return SampleMoments(Bbar=bbar, S=s, n=len(b_list))


def _variant_coefficients(case, formulas, c0, k0, d):
    """Quadratic (P), off-diagonal quadratic (R) and the linear half-weights
    used by each estimator variant.  Returns (P, R, q_half_fn, l_half_fn)."""
    c2 = c0 * c0
    if case == "independent":
        p = d * (3 * k0 - 5 * c2)
        r = d * (2 * k0 - 3 * c2)
        return p, r, lambda bii: 2 * c0 * bii, lambda bij: c0 * bij
    if formulas == "moment-consistent":
        p = d * ((d + 2) * k0 - (d + 4) * c2)
        r = d * ((d + 1) * k0 - (d + 2) * c2)
        return p, r, lambda bii: 2 * c0 * bii, lambda bij: c0 * bij
    if formulas == "as-published":
        p = d * (3 * k0 - (7 - 2 * d) * c2)
        r = d * (2 * k0 - (5 - 2 * d) * c2)
        return p, r, lambda bii: c0 * (3 - d) * bii, lambda bij: (2 - d) * c0 * bij
    raise ValueError(f"unknown formulas variant: {formulas!r}")


def _aux_cov_prediction(d, c0, k0, quad_weight, s_ii, m_ii, r_cand, m_cand):
    """Model-implied Cov(b_ij, b_ii) at a candidate (sigma_ij, m_ij) pair."""
    return (2 * k0 * d * s_ii * r_cand
            + 2 * c0 * (m_ii * r_cand + m_cand * s_ii)
            + quad_weight * (k0 - c0 * c0) * s_ii * r_cand)


def _solve_quadratic_system(sm, d, c0, k0, p, r, q_half, l_half, branch_tol,
                            quad_weight, select_roots, diagnostics):
    k = sm.Bbar.shape[0]
    bbar = sm.Bbar
    sigma = np.full((k, k), np.nan)
    failures = diagnostics["failures"]
    fallback = diagnostics["fallback_entries"]
    branches = diagnostics["diag_branches"]
    off_branches = diagnostics["offdiag_branches"]

    def s_entry(i, j, l, m):
        return sm.S[j * k + i, m * k + l]

    p_zero = abs(p) <= branch_tol
    r_zero = abs(r) <= branch_tol
    diagnostics["P_zero_branch"] = p_zero
    diagnostics["R_zero_branch"] = r_zero

    for i in range(k):
        s_ii = s_entry(i, i, i, i)
        qh = q_half(bbar[i, i])
        if p_zero:
            if abs(qh) <= branch_tol:
                failures.append({"entry": [i, i],
                                 "reason": "P=0 branch with zero linear weight"})
                branches.append("failed")
                continue
            sigma[i, i] = s_ii / (2 * qh)
            branches.append("linear")
            continue
        disc = qh * qh + p * s_ii
        if disc < 0:
            failures.append({"entry": [i, i], "reason": "negative discriminant"})
            branches.append("failed")
            continue
        root = np.sqrt(disc)
        cand = (-qh + root) / p
        if cand >= 0:
            sigma[i, i] = cand
            branches.append("+sqrt")
        else:
            other = (-qh - root) / p
            if other >= 0:
                sigma[i, i] = other
                branches.append("-sqrt")
                fallback.append([i, i])
            else:
                failures.append({"entry": [i, i],
                                 "reason": "both roots negative"})
                branches.append("failed")

    for i in range(k):
        for j in range(i + 1, k):
            if not (np.isfinite(sigma[i, i]) and np.isfinite(sigma[j, j])):
                failures.append({"entry": [i, j],
                                 "reason": "diagonal estimate unavailable"})
                continue
            s_ij = s_entry(i, j, i, j)
            t_ij = (d * (k0 - 2 * c0 * c0) * sigma[i, i] * sigma[j, j]
                    + c0 * (bbar[j, j] * sigma[i, i] + bbar[i, i] * sigma[j, j]))
            lh = l_half(bbar[i, j])
            if r_zero:
                if abs(lh) <= branch_tol:
                    failures.append({"entry": [i, j],
                                     "reason": "R=0 branch with zero linear weight"})
                    continue
                sigma[i, j] = sigma[j, i] = (s_ij - t_ij) / (2 * lh)
                off_branches.append([i, j, "linear"])
                continue
            disc = lh * lh - r * (t_ij - s_ij)
            if disc < 0:
                failures.append({"entry": [i, j],
                                 "reason": "negative discriminant"})
                continue
            root = np.sqrt(disc)
            plus = (root - lh) / r
            if not select_roots:
                sigma[i, j] = sigma[j, i] = plus
                off_branches.append([i, j, "+sqrt"])
                continue
            # the quadratic cannot tell its two roots apart, but the sampled
            # covariances of b_ij with the diagonal entries can: keep the
            # root whose implied moment structure matches them better
            minus = (-root - lh) / r
            m_ii = bbar[i, i] - d * c0 * sigma[i, i]
            m_jj = bbar[j, j] - d * c0 * sigma[j, j]
            resid = []
            for cand in (plus, minus):
                m_cand = bbar[i, j] - d * c0 * cand
                c1 = _aux_cov_prediction(d, c0, k0, quad_weight,
                                         sigma[i, i], m_ii, cand, m_cand)
                c2 = _aux_cov_prediction(d, c0, k0, quad_weight,
                                         sigma[j, j], m_jj, cand, m_cand)
                resid.append((c1 - s_entry(i, j, i, i)) ** 2
                             + (c2 - s_entry(i, j, j, j)) ** 2)
            if resid[0] <= resid[1]:
                sigma[i, j] = sigma[j, i] = plus
                off_branches.append([i, j, "+sqrt"])
            else:
                sigma[i, j] = sigma[j, i] = minus
                off_branches.append([i, j, "-sqrt"])
    return sigma


def _estimate(sm, model, d, case, formulas, branch_tol, constants):
    if d < 1:
        raise ValueError("need at least one coordinate dimension")
    k = sm.Bbar.shape[0]
    if constants is None:
        c0, k0 = moment_constants(model, dim=k * d)
    else:
        c0, k0 = constants
    p, r, q_half, l_half = _variant_coefficients(case, formulas, c0, k0, d)
    if branch_tol is None:
        branch_tol = 1e-10 * d * max(1.0, c0 * c0, k0)
    select_roots = not (case == "dependent" and formulas == "as-published")
    quad_weight = d * d if case == "dependent" else d
    diagnostics = {
        "case": case,
        "P": p,
        "R": r,
        "branch_tol": branch_tol,
        "constants": [c0, k0],
        "root_selection": select_roots,
        "diag_branches": [],
        "offdiag_branches": [],
        "fallback_entries": [],
        "failures": [],
    }
    if case == "dependent":
        diagnostics["formulas"] = formulas
    sigma = _solve_quadratic_system(sm, d, c0, k0, p, r, q_half, l_half,
                                    branch_tol, quad_weight, select_roots,
                                    diagnostics)
    m_hat = sm.Bbar - d * c0 * sigma
    return MomEstimate(M=m_hat, sigmaK=sigma, diagnostics=diagnostics)


def estimate_dependent(sm, model, d, formulas="moment-consistent",
                       branch_tol=None, constants=None):
    """Mean form and landmark covariance assuming one elliptical draw couples
    all coordinate columns.

    formulas picks the solver constants: "moment-consistent" (derived from
    the exact fourth-moment structure of the coupled law, the default) or
    "as-published" (a historical variant kept for comparison; it is not
    consistent for non-Gaussian laws, degenerates at two coordinate
    dimensions, and always takes the "+sqrt" off-diagonal root).  The
    default resolves each off-diagonal root ambiguity against the sampled
    covariances between that Gram entry and the two diagonal entries.
    constants=(c0, kappa0) overrides the model-derived radial moment
    constants.
    """
    if formulas not in ("moment-consistent", "as-published"):
        raise ValueError(f"unknown formulas variant: {formulas!r}")
    return _estimate(sm, model, d, "dependent", formulas, branch_tol, constants)


def estimate_independent(sm, model, d, branch_tol=None, constants=None):
    """Mean form and landmark covariance assuming independent coordinate
    columns, each its own elliptical draw."""
    return _estimate(sm, model, d, "independent", None, branch_tol, constants)


def reconstruct_mean_form(m, d, rank_tol=None, strict=True):
    """Mean configuration (K x d) whose Gram matrix matches m.

    Columns are eigenvectors scaled by root-eigenvalues in decreasing order,
    each signed so its largest-magnitude entry is nonnegative; missing rank
    pads with zero columns.  strict mode rejects significantly negative
    eigenvalues and spectral mass beyond the first d eigenvalues; permissive
    mode clips and truncates instead.
    """
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    if m.shape != (k, k) or np.abs(m - m.T).max() > 1e-8 * max(1.0, np.abs(m).max()):
        raise ValueError("mean form must be a symmetric square matrix")
    if not 1 <= d <= k:
        raise ValueError("coordinate dimension must be between 1 and K")
    lam, vecs = np.linalg.eigh(m)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    scale = max(np.abs(lam).max(), 1.0)
    tol = rank_tol if rank_tol is not None else 1e-9 * scale
    if strict:
        if lam.min() < -tol:
            raise ValueError(f"mean form has a negative eigenvalue {lam.min():.3e}")
        spill = float(np.clip(lam[d:], 0, None).sum())
        if spill > tol:
            raise ValueError(
                f"mean form rank exceeds {d}: unassigned spectral mass {spill:.3e}")
    top = np.clip(lam[:d], 0, None)
    out = vecs[:, :d] * np.sqrt(top)
    for col in range(d):
        peak = np.argmax(np.abs(out[:, col]))
        if out[peak, col] < 0:
            out[:, col] = -out[:, col]
    return out


def flipflop(centered, mu, sigma_k_init, eps1=5e-6, eps2=5e-6, max_iter=500):
    """Alternating estimation of the landmark and column covariances from
    centered configurations around a fixed mean.

    The column covariance is trace-normalized to its dimension each pass, so
    the overall scale accumulates in the landmark factor.  Stops when both
    Frobenius update deltas drop below the epsilons; hitting max_iter
    returns the last iterates unconverged.
    """
    resid = np.stack([np.asarray(x, dtype=float) - mu for x in centered])
    n, k, d = resid.shape
    sk = np.asarray(sigma_k_init, dtype=float)
    sd_prev = None
    deltas = []
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        skinv = sym_ginverse(sk)
        sd_raw = np.einsum("nki,kl,nlj->ij", resid, skinv, resid) / (n * k)
        lam = np.linalg.eigvalsh(sd_raw)
        if lam.min() <= 1e-12 * max(lam.max(), 1.0):
            raise ValueError("column covariance update lost positive definiteness")
        sd = sd_raw * (d / np.trace(sd_raw))
        sdinv = np.linalg.inv(sd)
        sk_new = np.einsum("nik,kl,njl->ij", resid, sdinv, resid) / (n * d)
        sk_new = (sk_new + sk_new.T) / 2
        delta_d = np.inf if sd_prev is None else np.linalg.norm(sd - sd_prev)
        delta_k = np.linalg.norm(sk_new - sk)
        deltas.append((float(delta_d), float(delta_k)))
        sk, sd_prev = sk_new, sd
        if delta_d <= eps1 and delta_k <= eps2:
            converged = True
            break
    return FlipFlopResult(sigmaK=sk, sigmaD=sd_prev, iterations=iterations,
                          converged=converged, deltas=deltas)


def _profile_log_kernel(model, y, n, kd):
    """Log of the scale-profile generator at summed squared radius y."""
    fam = model.family
    if fam == "gaussian":
        return -y / 2
    if fam == "kotz":
        big_n, s, r = model.params["N"], model.params["s"], model.params["r"]
        return (big_n - 1) * np.log(y) - r * y ** s
    if fam == "student_t":
        m = model.params["m"]
        return -(m + n * kd) / 2 * np.log1p(y / m)
    raise ValueError(
        f"{fam} has no usable scale profile for maximum likelihood here")


def mle_unconstrained(sample, model):
    """Maximum-likelihood mean and unstructured vec-covariance of row-stacked
    configurations, profiled over the scale of the total scatter.

    Returns (mu_hat, xi_hat, unbiased_scale); unbiased_scale times the total
    scatter is the moment-unbiased covariance estimate.  Requires more
    configurations than K*D and a family with finite second moments.
    """
    if model.family not in ("gaussian", "kotz", "student_t"):
        raise ValueError(
            f"{model.family} has no usable scale profile for maximum likelihood here")
    arr = np.stack([np.asarray(x, dtype=float) for x in sample])
    n, k, d = arr.shape
    kd = k * d
    if n <= kd:
        raise ValueError("need more configurations than K*D for a full-rank scatter")
    mu_hat = arr.mean(axis=0)
    dev = (arr - mu_hat).reshape(n, kd)  # row-major: coordinates of one row adjacent
    scatter = dev.T @ dev

    def neg_profile(t):
        lam = np.exp(t)
        return kd * n / 2 * t - _profile_log_kernel(model, kd / lam, n, kd)

    lo, hi = np.log(1e-12), np.log(1e6)
    res = minimize_scalar(neg_profile, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-11, "maxiter": 500})
    if not res.success or res.x <= lo + 1e-6 or res.x >= hi - 1e-6:
        raise ValueError("scale profile has no interior maximum")
    lam = float(np.exp(res.x))
    xi_hat = lam * scatter
    c0, _ = moment_constants(model, dim=kd)
    unbiased_scale = 1.0 / ((n - 1) * c0)
    return mu_hat, xi_hat, unbiased_scale
