"""Krylov reduced basis built from problem data.

The sequence ``A u_1 = b``, ``A u_i = M u_{i-1}`` is compressed through the
eigen-decomposition of its Gram matrix ``K = U^T A U``. Because the solve
operator is self-adjoint in the mass inner product, ``K`` is a Hankel
matrix, so it can be grown one row at a time with two new inner products.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import spla
from .fem import DENSE_CAP_BYTES, to_dense

# normalized-Gram eigenvalue below which a new Krylov vector counts as linearly dependent
NULL_TOL = 1e-13


class ZeroDataError(ValueError):
    def __init__(self, msg: str = "zero data"):
        super().__init__(msg)


@dataclass(frozen=True)
class KrylovBasis:
    """Krylov vectors and the reduced basis derived from them.

    Attributes
    ----------
    U : ndarray (N, l)
        Krylov vectors actually generated.
    K : ndarray (l, l)
        Gram matrix ``U^T A U``.
    Psi, Lambda : ndarray
        Eigenvectors (columns) and eigenvalues of ``K``, descending.
    r : int
        Dimension of the reduced space.
    Q : ndarray (N, r)
        A-orthonormal reduced basis, ``U Psi[:, :r] Lambda[:r]**-0.5``.
    break_step : int or None
        Step at which the adaptive loop stopped early.
    """

    U: np.ndarray
    K: np.ndarray
    Psi: np.ndarray
    Lambda: np.ndarray
    r: int
    Q: np.ndarray
    break_step: int | None = None

    @property
    def ell(self) -> int:
        return self.U.shape[1]


def krylov_sequence(factor: spla.SpdFactorization, M, b, ell: int) -> np.ndarray:
    """Generate ``ell`` Krylov vectors (or blocks, for a matrix seed ``b``).

    For a seed with ``p`` columns the result has ``ell * p`` columns, block
    ``i`` being ``A^{-1} M`` applied to block ``i - 1``.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    seed = np.asarray(b, dtype=float)
    block = factor.solve(seed)
    blocks = [block]
    for _ in range(1, ell):
        block = factor.solve(M @ block)
        blocks.append(block)
    if seed.ndim == 1:
        return np.column_stack(blocks)
    return np.hstack(blocks)


def gram_extend(K_prev: np.ndarray, U: np.ndarray, A) -> np.ndarray:
    """Grow the Hankel Gram matrix by one row and column.

    ``U`` holds the first ``i`` Krylov vectors and ``K_prev`` is the Gram
    matrix of the first ``i - 1``. Only ``u_{i-1}^T A u_i`` and
    ``u_i^T A u_i`` are computed; the remaining new entries are copied
    along anti-diagonals.
    """
    K_prev = np.atleast_2d(np.asarray(K_prev, dtype=float)) if np.size(K_prev) else np.zeros((0, 0))
    i = K_prev.shape[0] + 1
    if U.shape[1] < i:
        raise ValueError(f"need {i} columns of U, got {U.shape[1]}")
    u_new = U[:, i - 1]
    Au_new = A @ u_new
    beta = float(u_new @ Au_new)
    if i == 1:
        return np.array([[beta]])
    alpha = np.empty(i - 1)
    alpha[: i - 2] = K_prev[i - 2, 1 : i - 1]
    alpha[i - 2] = float(U[:, i - 2] @ Au_new)
    K = np.empty((i, i))
    K[: i - 1, : i - 1] = K_prev
    K[i - 1, : i - 1] = alpha
    K[: i - 1, i - 1] = alpha
    K[i - 1, i - 1] = beta
    return K


def select_rank_energy(Lambda, tol: float) -> int:
    """Smallest ``r`` whose leading eigenvalues hold a ``1 - tol`` share of the total."""
    lam = np.clip(np.asarray(Lambda, dtype=float), 0.0, None)
    total = lam.sum()
    if total <= 0.0:
        raise ZeroDataError()
    share = np.cumsum(lam) / total
    return int(np.searchsorted(share, 1.0 - tol, side="left") + 1)


def a_orthonormalize(Q: np.ndarray, A, passes: int = 2) -> np.ndarray:
    """Restore ``Q^T A Q = I`` without changing the column span.

    Each pass multiplies by the inverse transposed Cholesky factor of the
    A-Gram matrix, so columns that are already nearly orthonormal barely move.
    """
    for _ in range(passes):
        G = Q.T @ (A @ Q)
        G = 0.5 * (G + G.T)
        if np.abs(G - np.eye(G.shape[0])).max(initial=0.0) < 1e-14:
            break
        L = np.linalg.cholesky(G)
        Q = scipy.linalg.solve_triangular(L, Q.T, lower=True).T
    return Q


def basis_from_eigs(U: np.ndarray, Psi: np.ndarray, Lambda: np.ndarray, r: int, A) -> np.ndarray:
    """Reduced basis ``U Psi[:, :r] diag(Lambda[:r])^{-1/2}``, A-orthonormalized."""
    if r == 0:
        return np.zeros((U.shape[0], 0))
    Q = U[:, : Psi.shape[0]] @ (Psi[:, :r] / np.sqrt(Lambda[:r]))
    return a_orthonormalize(Q, A)


def _normalized_min_eig(K: np.ndarray) -> float:
    d = np.sqrt(np.clip(np.diag(K), np.finfo(float).tiny, None))
    return float(np.linalg.eigvalsh(K / np.outer(d, d))[0])


def krylov_basis(factor: spla.SpdFactorization, M, b, ell: int, tol: float) -> KrylovBasis:
    """Fixed-length variant: ``ell`` vectors, rank from the energy criterion."""
    A = factor.matrix
    if not np.any(b):
        raise ZeroDataError()
    U = krylov_sequence(factor, M, b, ell)
    K = U.T @ (A @ U)
    K = 0.5 * (K + K.T)
    Psi, Lam = spla.sym_eig(K)
    r = select_rank_energy(Lam, tol)
    # never divide by a non-positive eigenvalue
    r = min(r, int(np.count_nonzero(Lam > 0)))
    return KrylovBasis(U=U, K=K, Psi=Psi, Lambda=Lam, r=r, Q=basis_from_eigs(U, Psi, Lam, r, A))


def adaptive_basis(
    factor: spla.SpdFactorization,
    M,
    b,
    ell_max: int,
    tol: float,
    tol_mode: str = "absolute",
    null_tol: float = NULL_TOL,
) -> KrylovBasis:
    """Grow the Krylov sequence until the Gram matrix becomes (nearly) singular.

    At step ``i`` the loop stops when the smallest eigenvalue of ``K_i`` is at
    most ``tol`` (``tol_mode="absolute"``) or ``tol * K[0, 0]``
    (``tol_mode="relative"``), or when ``u_i`` is numerically dependent on
    the earlier vectors (smallest eigenvalue of the unit-diagonal scaling of
    ``K_i`` at most ``null_tol``). A dependent last vector is dropped; every
    other generated vector contributes a basis direction. If ``ell_max`` is
    reached without stopping, the rank comes from the energy criterion.
    """
    if ell_max < 1:
        raise ValueError(f"ell_max must be >= 1, got {ell_max}")
    if tol_mode not in ("absolute", "relative"):
        raise ValueError(f"unknown tol_mode {tol_mode!r}")
    A = factor.matrix
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        raise ZeroDataError()

    N = b.shape[0]
    U = np.empty((N, ell_max))
    U[:, 0] = factor.solve(b)
    K = gram_extend(np.zeros((0, 0)), U[:, :1], A)
    if K[0, 0] <= 0.0:
        raise ZeroDataError()
    threshold = tol if tol_mode == "absolute" else tol * K[0, 0]
    Psi, Lam = np.ones((1, 1)), K[0].copy()

    for i in range(2, ell_max + 1):
        U[:, i - 1] = factor.solve(M @ U[:, i - 2])
        K = gram_extend(K, U[:, :i], A)
        Psi, Lam = spla.sym_eig(K)
        dependent = _normalized_min_eig(K) <= null_tol
        if dependent or Lam[-1] <= threshold:
            r = i - 1 if dependent else i
            return KrylovBasis(
                U=U[:, :i].copy(), K=K, Psi=Psi, Lambda=Lam, r=r,
                Q=basis_from_eigs(U[:, :i], Psi, Lam, r, A), break_step=i,
            )

    r = min(select_rank_energy(Lam, tol), int(np.count_nonzero(Lam > 0)))
    return KrylovBasis(U=U, K=K, Psi=Psi, Lambda=Lam, r=r, Q=basis_from_eigs(U, Psi, Lam, r, A))


def hankel_defect(K: np.ndarray) -> float:
    """Largest anti-diagonal deviation ``|K[i, j] - K[i-1, j+1]|`` relative to ``K[0, 0]``."""
    n = K.shape[0]
    if n < 2:
        return 0.0
    dev = np.abs(K[1:, :-1] - K[:-1, 1:]).max()
    return float(dev / K[0, 0])


# --- eigenvalue decay of the Hankel matrix -------------------------------------


@dataclass(frozen=True)
class DecayRecord:
    index: int
    eigenvalue: float
    bound: float | None
    passed: bool | None
    ratio: float | None


def hankel_decay_bound(index: int, r: int, lam1: float) -> float:
    """Upper bound for the ``index``-th (1-based, odd) eigenvalue of an ``r x r`` positive definite Hankel matrix."""
    k = (index - 1) // 2
    rho = math.exp(math.pi**2 / (4.0 * math.log(8.0 * (r // 2) / math.pi)))
    return float(16.0 * rho ** (-2 * k + 2) * lam1)


def decay_report(Lambda) -> list[DecayRecord]:
    """One record per eigenvalue: the bound check at odd indices ``2k+1 >= 3``
    and the observed ratio to the previous eigenvalue.

    Returns an empty list when no index ``2k + 1 >= 3`` fits in ``r``.
    """
    lam = np.asarray(Lambda, dtype=float)
    r = lam.size
    if r < 3:
        return []
    records = []
    for i in range(1, r + 1):
        bound = passed = None
        if i >= 3 and i % 2 == 1:
            bound = hankel_decay_bound(i, r, lam[0])
            passed = bool(lam[i - 1] <= bound)
        ratio = float(lam[i - 1] / lam[i - 2]) if i >= 2 else None
        records.append(DecayRecord(i, float(lam[i - 1]), bound, passed, ratio))
    return records


def write_decay_csv(records: list[DecayRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "theorem_bound", "ratio"])
        for rec in records:
            writer.writerow([
                rec.index,
                repr(rec.eigenvalue),
                "" if rec.bound is None else repr(rec.bound),
                "" if rec.ratio is None else repr(rec.ratio),
            ])


def vandermonde_factor(M, A, b, r: int, cap_bytes: int = DENSE_CAP_BYTES) -> np.ndarray:
    """The ``r x N`` matrix ``V_d W`` built from all discrete eigenpairs.

    Row ``i`` (0-based) holds ``b_j * mu_j**(i + 1)`` where ``mu_j = 1/lambda_j``
    and ``b_j`` are the A-coefficients of ``M^{-1} b`` in the eigenbasis.
    """
    Ad = to_dense(A, cap_bytes // 3)
    Md = to_dense(M, cap_bytes // 3)
    lam, phi = scipy.linalg.eigh(Ad, Md)
    phi = phi / np.sqrt(lam)[None, :]
    b_hat = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Md), np.asarray(b, dtype=float))
    coeff = phi.T @ (Ad @ b_hat)
    mu = 1.0 / lam
    powers = mu[None, :] ** np.arange(r)[:, None]
    return powers * (coeff * mu)[None, :]


def vandermonde_check(M, A, b, r: int, cap_bytes: int = DENSE_CAP_BYTES) -> float:
    """Max-abs discrepancy between ``K_r`` and ``(V_d W)(V_d W)^T``."""
    VW = vandermonde_factor(M, A, b, r, cap_bytes)
    factor = spla.factorize(A)
    U = krylov_sequence(factor, M, b, r)
    K = U.T @ (A @ U)
    return float(np.abs(K - VW @ VW.T).max())
