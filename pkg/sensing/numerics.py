#!/usr/bin/env python3
"""
Dense linear-algebra kernels used by every other module.

- cpqr: Householder QR with greedy column pivoting and a deterministic
  pivot order over all columns (ties go to the smallest column index)
- econ_svd / sym_eig: thin wrappers over LAPACK with shape and finiteness
  checks, outputs sorted descending
- min_norm_solve / pseudo_inverse: truncated-SVD Moore-Penrose solves
- logdet_spd: Cholesky log-determinant that names the failing minor

Rank tolerance everywhere is max(rows, cols) * eps * (largest value).
All functions are pure; nothing here draws random numbers.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from sensing.utils import InputError, NumericalError

EPS = np.finfo(np.float64).eps
TIE_RTOL = 1e-12
SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class CpqrFactorization:
    pivots: np.ndarray       # permutation of all input columns
    r_factor: np.ndarray     # min(m, n) x n, upper triangular
    q_factor: np.ndarray     # m x min(m, n), orthonormal columns
    numerical_rank: int


@dataclass(frozen=True)
class EconSvd:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def as_matrix(m, name="matrix"):
    """Return `m` as a finite float64 2-D array or raise InputError."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        i, j = bad[0]
        raise InputError(f"{name} has a non-finite entry at row {i}, col {j}")
    return arr


def as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def rank_tolerance(shape, largest):
    return max(shape) * EPS * float(largest)


def cpqr(m):
    """Column-pivoted Householder QR, M[:, pivots] = Q @ R.

    At each step the column with the largest residual norm is pivoted in.
    Residual norms under the rank tolerance count as zero, and exact ties
    (within TIE_RTOL) go to the smallest original column index, so the
    pivot order is deterministic over every column, including those past
    the numerical rank.
    """
    a = as_matrix(m, "cpqr input")
    rows, cols = a.shape
    if cols == 0:
        raise InputError("cpqr needs at least one column")

    r = a.copy()
    q = np.eye(rows)
    perm = np.arange(cols)
    steps = min(rows, cols)
    tol = rank_tolerance(a.shape, np.linalg.norm(a, axis=0).max(initial=0.0))

    for j in range(steps):
        norms = np.linalg.norm(r[j:, j:], axis=0)
        norms = np.where(norms <= tol, 0.0, norms)
        best = norms.max()
        tied = np.flatnonzero(norms >= best * (1.0 - TIE_RTOL))
        p = j + tied[np.argmin(perm[j + tied])]

        if p != j:
            r[:, [j, p]] = r[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]

        x = r[j:, j]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        alpha = -norm_x if x[0] >= 0 else norm_x
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        r[j:, :] -= 2.0 * np.outer(v, v @ r[j:, :])
        q[:, j:] -= 2.0 * np.outer(q[:, j:] @ v, v)
        r[j + 1:, j] = 0.0

    # columns past min(rows, cols) have no residual left
    if cols > steps:
        tail = steps + np.argsort(perm[steps:], kind="stable")
        r[:, steps:] = r[:, tail]
        perm[steps:] = perm[tail]

    r_factor = np.triu(r[:steps, :])
    diag = np.abs(np.diag(r_factor))
    rank_tol = rank_tolerance(a.shape, diag[0] if diag.size else 0.0)
    numerical_rank = int(np.count_nonzero(diag > rank_tol))

    return CpqrFactorization(
        pivots=perm,
        r_factor=r_factor,
        q_factor=q[:, :steps],
        numerical_rank=numerical_rank,
    )


def econ_svd(m):
    """Economical SVD with descending singular values."""
    a = as_matrix(m, "svd input")
    if a.size == 0:
        raise InputError(f"svd input is empty (shape {a.shape})")
    try:
        u, s, vt = la.svd(a, full_matrices=False, lapack_driver="gesdd")
    except la.LinAlgError:
        # gesdd occasionally fails to converge where the QR-iteration driver succeeds
        try:
            u, s, vt = la.svd(a, full_matrices=False, lapack_driver="gesvd")
        except la.LinAlgError as e:
            raise NumericalError(
                f"SVD did not converge on a {a.shape[0]}x{a.shape[1]} matrix "
                f"(gesdd and gesvd both failed, ||M||_F = {np.linalg.norm(a):.3e}): {e}"
            )
    return EconSvd(u=u, s=s, vt=vt)


def sym_eig(m):
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix."""
    a = as_matrix(m, "symmetric input")
    if a.shape[0] != a.shape[1]:
        raise InputError(f"symmetric input must be square, got {a.shape}")
    if a.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = np.abs(a).max()
    asym = np.abs(a - a.T).max()
    if asym > SYMMETRY_RTOL * scale:
        raise InputError(f"matrix is not symmetric: max |M - M^T| = {asym:.3e} (scale {scale:.3e})")
    try:
        w, v = la.eigh(0.5 * (a + a.T))
    except la.LinAlgError as e:
        raise NumericalError(f"symmetric eigensolver failed on {a.shape[0]}x{a.shape[0]} matrix: {e}")
    return w[::-1], v[:, ::-1]


def singular_values(m):
    a = as_matrix(m, "matrix")
    if a.size == 0:
        return np.zeros(0)
    return econ_svd(a).s


def numerical_rank(m):
    s = singular_values(m)
    if s.size == 0:
        return 0
    return int(np.count_nonzero(s > rank_tolerance(np.shape(m), s[0])))


def pseudo_inverse(m):
    """Moore-Penrose pseudoinverse via truncated SVD."""
    a = as_matrix(m, "matrix")
    rows, cols = a.shape
    if a.size == 0:
        return np.zeros((cols, rows))
    svd = econ_svd(a)
    keep = svd.s > rank_tolerance(a.shape, svd.s[0])
    return (svd.vt[keep].T / svd.s[keep]) @ svd.u[:, keep].T


def min_norm_solve(a, y):
    """A^+ y: the least-squares minimizer of ||y - A x|| with smallest ||x||.

    `y` may be a vector or a matrix of right-hand sides (one per column).
    """
    mat = as_matrix(a, "A")
    rhs = np.asarray(y, dtype=np.float64)
    if rhs.ndim not in (1, 2) or rhs.shape[0] != mat.shape[0]:
        raise InputError(f"right-hand side has shape {rhs.shape}, A has {mat.shape[0]} rows")
    if not np.all(np.isfinite(rhs)):
        raise InputError("right-hand side has non-finite entries")
    return pseudo_inverse(mat) @ rhs


def logdet_spd(m):
    """log det of an SPD matrix from its Cholesky factor."""
    a = as_matrix(m, "SPD input")
    if a.shape[0] != a.shape[1]:
        raise InputError(f"SPD input must be square, got {a.shape}")
    if a.size == 0:
        return 0.0
    c, info = la.lapack.dpotrf(a, lower=1)
    if info > 0:
        raise NumericalError(
            f"Cholesky failed: leading minor of order {info} is not positive definite"
        )
    if info < 0:
        raise InputError(f"Cholesky rejected argument {-info}")
    return float(2.0 * np.log(np.diag(c)).sum())


def spectral_norm(m):
    """||M||_2 from the largest eigenvalue of the smaller Gram matrix."""
    a = as_matrix(m, "matrix")
    if a.size == 0:
        return 0.0
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    w, _ = sym_eig(gram)
    return float(np.sqrt(max(w[0], 0.0)))


def sqrtm_psd(m, rtol=1e-12):
    """Symmetric square root of a PSD matrix; eigenvalues below rtol*lambda_max clamp to 0."""
    w, v = sym_eig(m)
    if w.size == 0:
        return np.zeros((0, 0))
    floor = rtol * max(w[0], 0.0)
    if w[-1] < -floor:
        raise InputError(f"matrix is not positive semidefinite (min eigenvalue {w[-1]:.3e})")
    w = np.where(w < floor, 0.0, w)
    return (v * np.sqrt(w)) @ v.T
