"""Dense SVD and small linear solves backing POD and DEIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, InputError, SingularMatrixError

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class SvdResult:
    """Economy SVD ``A = U @ diag(sigma) @ Vt`` with ``r = min(n, N)``."""

    U: np.ndarray
    sigma: np.ndarray
    Vt: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.Vt


def _complete_rows(R: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace rows flagged invalid with unit vectors orthogonal to the rest.

    Candidates are the canonical vectors e_0, e_1, ... in order, so the result
    is deterministic.
    """
    R = R.copy()
    dim = R.shape[1]
    basis = [R[i] for i in range(R.shape[0]) if valid[i]]
    cand = 0
    for i in range(R.shape[0]):
        if valid[i]:
            continue
        while cand < dim:
            v = np.zeros(dim)
            v[cand] = 1.0
            cand += 1
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                R[i] = v
                basis.append(v)
                break
    return R


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # first index wins ties in argmax, keeping the convention deterministic
    piv = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[piv, np.arange(U.shape[1])] < 0.0, -1.0, 1.0)
    return U * signs, Vt * signs[:, None]


def thin_svd(A, tol: float = 1e-15, max_sweeps: int = 80) -> SvdResult:
    """Economy SVD by one-sided Jacobi rotations.

    Singular values come out sorted in descending order. Each left singular
    vector is sign-fixed so that its largest-magnitude entry is positive.
    Left vectors belonging to (numerically) zero singular values are
    completed to an orthonormal set.

    Parameters
    ----------
    A : array_like, shape (n, N)
    tol : float
        Relative off-orthogonality below which a column pair is left alone.
    max_sweeps : int
        Upper bound on cyclic sweeps.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"thin_svd expects a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("thin_svd input contains non-finite entries")

    n, N = A.shape
    transposed = n < N
    # rows of W are the columns being orthogonalised
    W = np.ascontiguousarray(A if transposed else A.T).copy()
    k, m = W.shape
    Q = np.eye(k)
    sweeps = kernels.jacobi_orthogonalize(W, Q, tol, max_sweeps)

    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    order = np.argsort(-norms, kind="stable")
    sigma = norms[order]
    W = W[order]
    Q = Q[order]

    cutoff = (sigma[0] if sigma.size else 0.0) * max(n, N) * _EPS * 10.0
    valid = sigma > cutoff
    R = np.zeros_like(W)
    R[valid] = W[valid] / sigma[valid, None]
    if not np.all(valid):
        R = _complete_rows(R, valid)

    if transposed:
        # A^T = R^T diag(sigma) Q  =>  A = Q^T diag(sigma) R
        U, Vt = Q.T, R
    else:
        # A = R^T diag(sigma) Q
        U, Vt = R.T, Q
    U, Vt = _fix_signs(np.ascontiguousarray(U), np.ascontiguousarray(Vt))
    return SvdResult(U=U, sigma=sigma, Vt=Vt, sweeps=int(sweeps))


def orthonormality_error(Q) -> float:
    """Max-abs entry of ``Q^T Q - I``."""
    Q = np.asarray(Q)
    return float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1])))) if Q.size else 0.0


def lu_factor(M, singular_tol: float = 1e-12):
    """Partial-pivot LU. Returns ``(LU, perm)`` with ``M[perm] = L @ U``.

    Raises SingularMatrixError when a pivot falls below
    ``singular_tol * max|M|``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"LU needs a square matrix, got shape {M.shape}")
    n = M.shape[0]
    LU = np.array(M, dtype=np.float64, order="C")
    perm = np.arange(n, dtype=np.int64)
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    if scale == 0.0 and n:
        raise SingularMatrixError(0, 0.0)
    k = kernels.lu_inplace(LU, perm, singular_tol * scale)
    if k >= 0:
        raise SingularMatrixError(int(k), float(np.max(np.abs(LU[k:, k]))))
    return LU, perm


def _substitute(LU, perm, B, transposed: bool) -> np.ndarray:
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    B2 = np.ascontiguousarray(B[:, None] if vec else B)
    X = kernels.lu_substitute(LU, perm, B2, transposed)
    return X[:, 0] if vec else X


def lu_solve(LU, perm, B) -> np.ndarray:
    """Solve with factors from :func:`lu_factor`; ``B`` may be a vector or matrix."""
    return _substitute(LU, perm, B, False)


def lu_solve_transposed(LU, perm, B) -> np.ndarray:
    """Solve ``M^T X = B`` reusing the factors of ``M``."""
    return _substitute(LU, perm, B, True)


def solve_small(M, B, *, singular_tol: float = 1e-12, return_residual: bool = False):
    """Solve ``M X = B`` for a small square ``M`` by partial-pivot LU.

    With ``return_residual=True`` a tuple ``(X, max|M X - B|)`` is returned.
    """
    M = np.asarray(M, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"solve_small needs square M, got {M.shape}")
    if B.shape[0] != M.shape[0]:
        raise DimensionError(f"solve_small: M is {M.shape} but B is {B.shape}")
    LU, perm = lu_factor(M, singular_tol)
    X = lu_solve(LU, perm, B)
    if return_residual:
        return X, float(np.max(np.abs(M @ X - B))) if B.size else 0.0
    return X
