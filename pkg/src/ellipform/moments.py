"""Analytic moments of the centered landmark matrix and its Gram matrix.

Conventions: Y is K x D with columns y_1..y_D, z = vec(Y) stacks columns,
B = Y Y'. The row scale Sigma may be rank-deficient (the centered case);
the column scale Theta must be positive definite. The constants (c0,
kappa0) are supplied explicitly so callers control the dimension they are
evaluated at; ``ModelMoments.from_model`` fills them in at dim = K*D.
"""

from dataclasses import dataclass

import numpy as np

from ellipform.linalg import commutation_matrix, kron, vec
from ellipform.models import moment_constants

__all__ = [
    "ModelMoments",
    "MomentPair",
    "moment2_vecY",
    "moment4_vecY",
    "pair_moment",
    "moments_B_dependent",
    "moments_B_independent",
    "entry_moments",
]


@dataclass(frozen=True)
class ModelMoments:
    """Parameters entering the moment formulas.

    mu: K x D centered mean; sigma: K x K row scale (PSD); theta: D x D
    column scale (PD); c0, kappa0: the family's moment constants.
    """

    mu: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray
    c0: float
    kappa0: float

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        k, d = mu.shape
        sigma = np.asarray(self.sigma, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if sigma.shape != (k, k) or theta.shape != (d, d):
            raise ValueError(
                "sigma must be %dx%d and theta %dx%d to match mu" % (k, k, d, d)
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))
        object.__setattr__(self, "theta", 0.5 * (theta + theta.T))

    @classmethod
    def from_model(cls, model, mu, sigma, theta, dim=None):
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        if dim is None:
            dim = mu.size
        c0, k0 = moment_constants(model, dim=dim)
        return cls(mu=mu, sigma=sigma, theta=theta, c0=c0, kappa0=k0)


@dataclass(frozen=True)
class MomentPair:
    """E(B) and Cov(vec B) for the Gram matrix B = Y Y'."""

    expected_B: np.ndarray
    cov_vecB: np.ndarray


def moment2_vecY(m):
    """E(vec Y vec'Y) = c0 (Theta kron Sigma) + vec mu vec'mu."""
    mv = vec(m.mu)
    return m.c0 * kron(m.theta, m.sigma) + np.outer(mv, mv)


def _sym_pair(n):
    return np.eye(n * n) + commutation_matrix(n, n)


def moment4_vecY(m):
    """Fourth moment E(zz' kron zz') of z = vec Y, as an (KD)^2 square array.

    Materialized only for K*D <= 8; the array is a test oracle, not a
    production path.
    """
    k, d = m.mu.shape
    n = k * d
    if n > 8:
        raise ValueError("fourth-moment array materialized only for K*D <= 8")
    xi = kron(m.theta, m.sigma)
    mv = vec(m.mu)
    mm = np.outer(mv, mv)
    sym = _sym_pair(n)
    vxi, vmm = vec(xi), vec(mm)
    out = m.kappa0 * (sym @ kron(xi, xi) + np.outer(vxi, vxi))
    out += m.c0 * (sym @ (kron(mm, xi) + kron(xi, mm)))
    out += m.c0 * (np.outer(vxi, vmm) + np.outer(vmm, vxi))
    out += kron(mm, mm)
    return out


def pair_moment(m, d, s):
    """Second and fourth cross moments of columns d and s of Y (0-based).

    Returns (E(y_d y_s'), E(y_d y_s' kron y_d y_s')).
    """
    k, dcols = m.mu.shape
    if not (0 <= d < dcols and 0 <= s < dcols):
        raise ValueError("column indices out of range")
    sig, th = m.sigma, m.theta
    mu_d, mu_s = m.mu[:, d], m.mu[:, s]
    first = m.c0 * th[d, s] * sig + np.outer(mu_d, mu_s)
    sym = _sym_pair(k)
    vs = vec(sig)
    mds = np.outer(mu_d, mu_s)
    mdd = np.outer(mu_d, mu_d)
    mss = np.outer(mu_s, mu_s)
    second = m.kappa0 * (
        th[d, s] ** 2 * (sym @ kron(sig, sig))
        + th[d, d] * th[s, s] * np.outer(vs, vs)
    )
    second += m.c0 * th[d, s] * (sym @ (kron(mds, sig) + kron(sig, mds)))
    second += m.c0 * (
        th[d, d] * np.outer(vs, vec(mss)) + th[s, s] * np.outer(vec(mdd), vs)
    )
    second += kron(mds, mds)
    return first, second


def _check_psd_theta(theta):
    lam = np.linalg.eigvalsh(theta)
    if lam.min() <= 0:
        raise ValueError("theta must be positive definite")


def moments_B_dependent(m):
    """E(B) and Cov(vec B) under dependent columns (general Theta).

    E(B) = c0 tr(Theta) Sigma + mu mu'; the covariance assembles the
    symmetrized kron terms with weights tr(Theta^2) and the block sum
    G = sum_{d,s} theta_ds mu_d mu_s', plus (kappa0 - c0^2) tr(Theta)^2
    on the vec(Sigma) outer product.
    """
    _check_psd_theta(m.theta)
    sig, th, mu = m.sigma, m.theta, m.mu
    k = sig.shape[0]
    tr1, tr2 = np.trace(th), np.trace(th @ th)
    g = mu @ th @ mu.T
    expected = m.c0 * tr1 * sig + mu @ mu.T
    sym = _sym_pair(k)
    vs = vec(sig)
    cov = sym @ (
        m.kappa0 * tr2 * kron(sig, sig)
        + m.c0 * (kron(g, sig) + kron(sig, g))
    )
    cov += (m.kappa0 - m.c0 ** 2) * tr1 ** 2 * np.outer(vs, vs)
    return MomentPair(expected_B=expected, cov_vecB=cov)


def moments_B_independent(m):
    """E(B) and Cov(vec B) with independently drawn columns (diagonal Theta)."""
    th = m.theta
    if np.abs(th - np.diag(np.diag(th))).max() > 0:
        raise ValueError("independent-column moments require a diagonal theta")
    _check_psd_theta(th)
    sig, mu = m.sigma, m.mu
    k = sig.shape[0]
    tdiag = np.diag(th)
    tr1, tr2 = tdiag.sum(), (tdiag ** 2).sum()
    gd = (mu * tdiag) @ mu.T
    expected = m.c0 * tr1 * sig + mu @ mu.T
    sym = _sym_pair(k)
    vs = vec(sig)
    cov = sym @ (
        m.kappa0 * tr2 * kron(sig, sig)
        + m.c0 * (kron(gd, sig) + kron(sig, gd))
    )
    cov += (m.kappa0 - m.c0 ** 2) * tr2 * np.outer(vs, vs)
    return MomentPair(expected_B=expected, cov_vecB=cov)


def entry_moments(m, i, j, case):
    """Mean and variance of the Gram entry b_ij at identity column scale.

    Only the canonical order i <= j is accepted (B is symmetric). ``case``
    selects the dependent or independent covariance structure.
    """
    if case not in ("dependent", "independent"):
        raise ValueError("case must be 'dependent' or 'independent'")
    k, d = m.mu.shape
    if not (0 <= i <= j < k):
        raise ValueError("need 0 <= i <= j < K; symmetric entries are canonical")
    if np.abs(m.theta - np.eye(d)).max() > 1e-12:
        raise ValueError("entry moments are defined at theta = identity")
    sig = m.sigma
    mm = m.mu @ m.mu.T
    c0, k0 = m.c0, m.kappa0
    eb = d * c0 * sig[i, j] + mm[i, j]
    quad = d * d if case == "dependent" else d
    varb = d * k0 * (sig[i, i] * sig[j, j] + sig[i, j] ** 2)
    varb += quad * (k0 - c0 ** 2) * sig[i, j] ** 2
    varb += c0 * (
        mm[j, j] * sig[i, i] + mm[i, i] * sig[j, j] + 2 * mm[i, j] * sig[i, j]
    )
    return eb, varb
