"""Sparse generalized eigensolver with optional linear constraints.

Solves ``A x = lam M x`` for the lowest eigenvalues, restricted to
``{x : C x = 0}`` when constraint rows ``C`` are given. The restricted problem
is handled by shift-invert ARPACK with a bordered (Schur complement) solve, so
no explicit basis of the constrained subspace is ever formed.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalFailure

DENSE_MAX = 600


def _as_dense_rows(C, n):
    if C is None:
        return None
    C = C.toarray() if sp.issparse(C) else np.atleast_2d(np.asarray(C, dtype=float))
    if C.size == 0:
        return None
    if C.shape[1] != n:
        raise ValueError(f"constraint rows have {C.shape[1]} columns, expected {n}")
    return C


def _dense_path(A, M, k, C):
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    if C is not None:
        Z = sla.null_space(C)
        Ar, Mr = Z.T @ A @ Z, Z.T @ M @ Z
    else:
        Z, Ar, Mr = None, A, M
    w, v = sla.eigh(Ar, Mr, subset_by_index=[0, k - 1])
    if Z is not None:
        v = Z @ v
    return w, v


def lowest_eigenpairs(A, M, k: int, sigma: float, C=None, dense_max: int = DENSE_MAX):
    """Lowest ``k`` eigenpairs of the symmetric pencil ``(A, M)``.

    ``sigma`` must lie below the wanted part of the spectrum; ``A - sigma M``
    is factorized once. Eigenvectors are returned M-orthonormal, columns
    ordered by increasing eigenvalue.
    """
    n = A.shape[0]
    C = _as_dense_rows(C, n)
    m = 0 if C is None else C.shape[0]
    if k < 1 or k > n - m:
        raise ValueError(f"cannot compute {k} eigenpairs of a {n - m}-dimensional problem")
    if n <= dense_max or k >= n - m - 1:
        w, v = _dense_path(A, M, k, C)
        return w, v

    S = (sp.csc_matrix(A) - sigma * sp.csc_matrix(M)).tocsc()
    try:
        lu = spla.splu(S)
    except RuntimeError as exc:
        raise NumericalFailure(f"factorization of A - sigma M failed: {exc}") from None

    if C is None:
        solve = lu.solve
    else:
        Y = lu.solve(np.ascontiguousarray(C.T))
        schur = C @ Y
        schur_lu = sla.lu_factor(schur)

        def solve(b):
            x0 = lu.solve(np.asarray(b, dtype=float).ravel())
            return x0 - Y @ sla.lu_solve(schur_lu, C @ x0)

    op = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    rng = np.random.default_rng(0)
    v0 = solve(rng.standard_normal(n))
    try:
        w, v = spla.eigsh(A, k=k, M=M, sigma=sigma, which="LM", OPinv=op, v0=v0,
                          tol=1e-13, maxiter=5000)
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure(f"eigensolver did not converge: {exc}") from None
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    # re-normalize in M
    Mv = M @ v
    v = v / np.sqrt(np.einsum("ij,ij->j", v, Mv))
    return w, v


def abs_kernel_apply(x: np.ndarray, g: np.ndarray, self_term: np.ndarray | None = None) -> np.ndarray:
    """``out_i = sum_j |x_i - x_j| g_j`` in O(n) for increasing ``x``.

    ``self_term`` (optional, per node) is added as ``self_term_i * g_i`` to
    account for the kernel average over a node's own cell.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    G = np.cumsum(g)
    XG = np.cumsum(x * g)
    total_g, total_xg = G[-1], XG[-1]
    # sum_{j<=i} (x_i - x_j) g_j + sum_{j>i} (x_j - x_i) g_j
    left = x * G - XG
    right = (total_xg - XG) - x * (total_g - G)
    out = left + right
    if self_term is not None:
        out = out + self_term * g
    return out
