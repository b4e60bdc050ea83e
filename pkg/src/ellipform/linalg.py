"""Dense matrix utilities for the moment formulas.

Everything follows the column-major vec convention: ``vec`` stacks columns,
and entry (i, j) of a K x K matrix sits at position j*K + i of its vec
(0-based). The block operators (`khatri_rao`, `box_plus`) act on conformably
partitioned matrices described by a :class:`BlockPartition`.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BlockPartition",
    "vec",
    "unvec",
    "kron",
    "commutation_matrix",
    "khatri_rao",
    "box_plus",
    "hadamard_inverse",
    "centering_matrix",
    "sym_ginverse",
    "spectral_nonsingular",
]


@dataclass(frozen=True)
class BlockPartition:
    """Partition of a matrix into an m x n grid of r x s blocks.

    r, s describe the block size of the matrix the partition is applied to;
    matrices combined blockwise only need to share the outer grid (m, n).
    """

    r: int
    s: int
    m: int
    n: int


def vec(a):
    """Stack the columns of ``a`` into one vector (column-major)."""
    a = np.asarray(a)
    return a.reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec` for a rows x cols matrix."""
    return np.asarray(v).reshape(rows, cols, order="F")


def kron(a, b):
    """Kronecker product, blocks a_ij * B."""
    return np.kron(np.asarray(a), np.asarray(b))


def commutation_matrix(k, d):
    """Permutation matrix with K_kd vec(A) = vec(A.T) for every k x d A."""
    kd = k * d
    m = np.zeros((kd, kd))
    rows = np.arange(kd)
    # vec(A.T) position i*d + j receives vec(A) position j*k + i
    i, j = rows // d, rows % d
    m[rows, j * k + i] = 1.0
    return m


def _check_partition(a, part):
    a = np.asarray(a)
    if a.shape != (part.m * part.r, part.n * part.s):
        raise ValueError(
            "partition (%d x %d grid of %d x %d blocks) does not tile a %s matrix"
            % (part.m, part.n, part.r, part.s, "x".join(map(str, a.shape)))
        )
    return a


def khatri_rao(a, b, part):
    """Blockwise Kronecker product of conformably partitioned matrices.

    ``part`` describes the partition of ``a``; ``b`` must split into the same
    m x n outer grid, its block size is inferred. Block (i, j) of the result
    is A_ij kron B_ij. With 1 x 1 blocks in ``a`` this is the scalar-weighted
    block matrix (c_ij * B_ij).
    """
    a = _check_partition(a, part)
    b = np.asarray(b)
    if b.shape[0] % part.m or b.shape[1] % part.n:
        raise ValueError(
            "second factor %s does not split into a %d x %d block grid"
            % (b.shape, part.m, part.n)
        )
    rb, sb = b.shape[0] // part.m, b.shape[1] // part.n
    # einsum over the block indices: out[i,p,u, j,q,v] = a[i,p,j,q] * b[i,u,j,v]
    a4 = a.reshape(part.m, part.r, part.n, part.s)
    b4 = b.reshape(part.m, rb, part.n, sb)
    out = np.einsum("ipjq,iujv->ipujqv", a4, b4)
    return out.reshape(part.m * part.r * rb, part.n * part.s * sb)


def box_plus(a, part):
    """Sum of all blocks of a partitioned matrix (an r x s result)."""
    a = _check_partition(a, part)
    a4 = a.reshape(part.m, part.r, part.n, part.s)
    return a4.sum(axis=(0, 2))


def hadamard_inverse(a):
    """Entrywise reciprocal with the 0 -> 0 convention."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    nz = a != 0
    out[nz] = 1.0 / a[nz]
    return out


def centering_matrix(k):
    """The rank k-1 projector I - (1/k) 1 1' removing translations."""
    return np.eye(k) - np.full((k, k), 1.0 / k)


def _symmetrize_or_fail(a, what):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("%s requires a square matrix, got %s" % (what, a.shape))
    scale = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > 1e-8 * scale:
        raise ValueError("%s requires a symmetric matrix" % what)
    return 0.5 * (a + a.T)


def sym_ginverse(a, rank_tol=None):
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Satisfies A A^- A = A; reduces to the ordinary inverse when A is
    nonsingular. ``rank_tol`` defaults to 1e-9 times the largest absolute
    eigenvalue.
    """
    a = _symmetrize_or_fail(a, "sym_ginverse")
    lam, v = np.linalg.eigh(a)
    tol = rank_tol if rank_tol is not None else 1e-9 * max(np.abs(lam).max(), 1e-300)
    inv = np.where(np.abs(lam) > tol, 1.0 / np.where(lam == 0, 1.0, lam), 0.0)
    return (v * inv) @ v.T


def spectral_nonsingular(a, rank_tol=None):
    """Nonsingular part of the spectral decomposition of a PSD matrix.

    Returns (V1, lam) with eigenvalues descending and V1'V1 = I. Eigenvalues
    in [-rank_tol, rank_tol] are treated as zero and dropped; an eigenvalue
    below -rank_tol raises (the matrix is not PSD at the working tolerance).
    """
    a = _symmetrize_or_fail(a, "spectral_nonsingular")
    lam, v = np.linalg.eigh(a)
    tol = rank_tol if rank_tol is not None else 1e-9 * max(np.abs(lam).max(), 1e-300)
    if lam.min() < -tol:
        raise ValueError(
            "matrix has negative eigenvalue %g below -%g; not PSD" % (lam.min(), tol)
        )
    order = np.argsort(lam)[::-1]
    keep = lam[order] > tol
    return v[:, order[keep]], lam[order[keep]]
