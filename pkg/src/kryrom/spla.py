"""Linear-algebra kernels: reusable SPD solves, small symmetric eigenproblems, A-inner products."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_RTOL = 1e-10


class NotSPDError(np.linalg.LinAlgError):
    pass


def _as_sparse(A) -> sp.csc_matrix:
    if sp.issparse(A):
        return sp.csc_matrix(A)
    return sp.csc_matrix(np.atleast_2d(np.asarray(A, dtype=float)))


@dataclass(frozen=True)
class SpdFactorization:
    """Reusable solver for one SPD matrix.

    ``method`` is ``"direct"`` (symmetric-ordering sparse LU without pivoting,
    which for an SPD matrix is a scaled Cholesky factor) or ``"cg"``
    (Jacobi-preconditioned conjugate gradients). Both are safe to share
    across threads for concurrent solves.
    """

    matrix: sp.csc_matrix
    method: str
    lu: Any = None
    perm: np.ndarray | None = None
    diag: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, B: np.ndarray) -> np.ndarray:
        return solve(self, B)


def factorize(A, method: str = "direct") -> SpdFactorization:
    """Factor an SPD matrix once for repeated solves.

    Raises
    ------
    NotSPDError
        On a non-positive pivot (direct) or diagonal entry (cg).
    """
    mat = _as_sparse(A)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"matrix must be square, got {mat.shape}")
    if method == "direct":
        try:
            lu = spla.splu(
                mat,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(f"factorization failed: {exc}") from exc
        pivots = lu.U.diagonal()
        # without row pivoting an SPD matrix has positive pivots
        if np.any(pivots <= 0) or not np.all(lu.perm_r == lu.perm_c):
            raise NotSPDError("non-positive pivot: matrix is not SPD")
        return SpdFactorization(matrix=mat, method=method, lu=lu, perm=lu.perm_c)
    if method == "cg":
        diag = mat.diagonal()
        if np.any(diag <= 0):
            raise NotSPDError("non-positive diagonal entry: matrix is not SPD")
        return SpdFactorization(matrix=mat, method=method, diag=diag)
    raise ValueError(f"unknown method {method!r}")


def _cg(f: SpdFactorization, b: np.ndarray) -> np.ndarray:
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    precond = spla.LinearOperator(f.matrix.shape, matvec=lambda x: x / f.diag, dtype=float)
    x, info = spla.cg(f.matrix, b, rtol=0.1 * RESIDUAL_RTOL, atol=0.0, M=precond, maxiter=20 * f.n)
    if info != 0:
        raise np.linalg.LinAlgError(f"CG did not converge (info={info})")
    return x


def solve(f: SpdFactorization, B) -> np.ndarray:
    """Solve ``A X = B`` for a vector or for each column of a matrix."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != f.n:
        raise ValueError(f"right-hand side has {B.shape[0]} rows, expected {f.n}")
    if B.size == 0:
        return np.zeros_like(B)
    if f.method == "direct":
        return f.lu.solve(B)
    if B.ndim == 1:
        return _cg(f, B)
    return np.column_stack([_cg(f, B[:, j]) for j in range(B.shape[1])])


def sym_eig(K, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small dense symmetric matrix.

    Returns ``(Psi, Lam)`` with orthonormal eigenvectors in the columns of
    ``Psi`` and eigenvalues ``Lam`` in descending order.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"matrix must be square, got {K.shape}")
    scale = np.abs(K).max() if K.size else 0.0
    if np.abs(K - K.T).max(initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric")
    lam, psi = np.linalg.eigh(0.5 * (K + K.T))
    return psi[:, ::-1], lam[::-1]


def a_inner(A, x, y) -> float:
    """A-weighted inner product ``x^T A y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape}, {y.shape}, {A.shape}")
    return float(x @ (A @ y))


def a_norm(A, x) -> float:
    return math.sqrt(max(a_inner(A, x, x), 0.0))
