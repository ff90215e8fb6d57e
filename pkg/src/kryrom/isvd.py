"""Incremental core SVD in an A-weighted inner product.

A core SVD of ``U`` (N x n) is ``U = Q diag(Sigma) R^T`` with ``Q^T A Q = I``
and ``R^T R = I``. Columns are ingested one at a time through the bordered
identity

    [U | c] = [Q | e/p] [[diag(Sigma), Q^T A c], [0, p]] blockdiag(R, 1)^T,

where ``e = c - Q Q^T A c`` and ``p = ||e||_A``. Only the small bordered
matrix is decomposed, so no factor of ``A`` is ever needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TRUNC_TOL = 1e-12
REORTH_DRIFT = 1e-10


@dataclass(frozen=True)
class IsvdState:
    """Truncated core SVD of the columns ingested so far.

    ``AQ`` caches ``A @ Q`` so that projections cost one dense product per
    update instead of a sparse multiply per basis vector.
    """

    Q: np.ndarray
    Sigma: np.ndarray
    R: np.ndarray
    trunc_tol: float = DEFAULT_TRUNC_TOL
    AQ: np.ndarray = field(default=None, repr=False)

    @property
    def rank(self) -> int:
        return self.Sigma.size

    @property
    def n_ingested(self) -> int:
        return self.R.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.Q * self.Sigma) @ self.R.T


def isvd_init(trunc_tol: float = DEFAULT_TRUNC_TOL) -> IsvdState:
    """State of an empty matrix (rank 0, nothing ingested)."""
    if not 0.0 <= trunc_tol < 1.0:
        raise ValueError(f"trunc_tol must lie in [0, 1), got {trunc_tol}")
    return IsvdState(Q=np.zeros((0, 0)), Sigma=np.zeros(0), R=np.zeros((0, 0)), trunc_tol=trunc_tol)


def _a_gram_schmidt(Q: np.ndarray, A) -> tuple[np.ndarray, np.ndarray]:
    """A-orthonormalize the columns of ``Q`` by two passes of modified Gram-Schmidt.

    Returns ``(Q_new, T)`` with ``Q = Q_new @ T`` and ``T`` upper triangular.
    """
    Q = Q.copy()
    d = Q.shape[1]
    T = np.eye(d)
    for _ in range(2):
        step = np.zeros((d, d))
        for j in range(d):
            AQj = A @ Q[:, j]
            for i in range(j):
                # Q[:, i] is already normalized in this pass
                coef = float(Q[:, i] @ AQj)
                Q[:, j] -= coef * Q[:, i]
                AQj = AQj - coef * (A @ Q[:, i])
                step[i, j] = coef
            norm = math.sqrt(max(float(Q[:, j] @ AQj), 0.0))
            Q[:, j] /= norm
            step[j, j] = norm
        T = step @ T
    return Q, T


def isvd_update(state: IsvdState, c, A) -> IsvdState:
    """Ingest one column ``c`` and return the updated state.

    A column whose residual after projection is at most
    ``trunc_tol * max(sigma_1, ||c||_A)`` is treated as lying in the current
    span: it still gets a row in ``R`` but the rank does not grow. Singular
    values at or below ``trunc_tol * sigma_1`` are dropped after the update.
    """
    c = np.asarray(c, dtype=float)
    tol = state.trunc_tol
    d = state.rank
    n = state.n_ingested
    if d and c.shape[0] != state.Q.shape[0]:
        raise ValueError(f"column has length {c.shape[0]}, expected {state.Q.shape[0]}")
    Ac = A @ c
    c_norm = math.sqrt(max(float(c @ Ac), 0.0))

    if d == 0:
        if c_norm == 0.0:
            # record the zero column so that R keeps one row per ingested column
            return IsvdState(Q=np.zeros((c.shape[0], 0)), Sigma=np.zeros(0), R=np.zeros((n + 1, 0)),
                             trunc_tol=tol, AQ=np.zeros((c.shape[0], 0)))
        R = np.zeros((n + 1, 1))
        R[n, 0] = 1.0
        return IsvdState(Q=(c / c_norm)[:, None], Sigma=np.array([c_norm]), R=R, trunc_tol=tol,
                         AQ=(Ac / c_norm)[:, None])

    Q, AQ = state.Q, state.AQ
    # classical Gram-Schmidt, applied twice for stability
    h = AQ.T @ c
    e = c - Q @ h
    h2 = AQ.T @ e
    e -= Q @ h2
    h += h2
    Ae = A @ e
    p = math.sqrt(max(float(e @ Ae), 0.0))

    sigma1 = state.Sigma[0]
    in_span = p <= tol * max(sigma1, c_norm)
    core = np.zeros((d + 1, d + 1))
    core[:d, :d] = np.diag(state.Sigma)
    core[:d, d] = h
    if not in_span:
        core[d, d] = p
    Qt, S, Rt_T = np.linalg.svd(core)
    Rt = Rt_T.T

    R_ext = np.zeros((n + 1, d + 1))
    R_ext[:n, :d] = state.R
    R_ext[n, d] = 1.0
    if in_span:
        Q_ext, AQ_ext = Q, AQ
        Qt = Qt[:d, :d]
        S = S[:d]
        Rt = Rt[:, :d]
    else:
        Q_ext = np.hstack([Q, (e / p)[:, None]])
        AQ_ext = np.hstack([AQ, (Ae / p)[:, None]])

    keep = S > tol * S[0]
    Q_new = Q_ext @ Qt[:, keep]
    AQ_new = AQ_ext @ Qt[:, keep]
    S = S[keep]
    R_new = R_ext @ Rt[:, keep]

    drift = np.abs(Q_new.T @ AQ_new - np.eye(S.size)).max(initial=0.0)
    if drift > REORTH_DRIFT:
        Q_new, T = _a_gram_schmidt(Q_new, A)
        # Q S R^T = Q_new (T S) R^T: re-diagonalize the small middle factor
        U2, S, V2_T = np.linalg.svd(T * S)
        Q_new = Q_new @ U2
        AQ_new = A @ Q_new
        R_new = R_new @ V2_T.T
    return IsvdState(Q=Q_new, Sigma=S, R=R_new, trunc_tol=tol, AQ=AQ_new)


def isvd_ingest(state: IsvdState, columns, A) -> IsvdState:
    """Ingest the columns of a matrix left to right."""
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    for j in range(columns.shape[1]):
        state = isvd_update(state, columns[:, j], A)
    return state


def thin_svd(B) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euclidean thin SVD ``B = Q_F diag(Sigma_F) R_F^T``."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[1] > B.shape[0]:
        raise ValueError(f"thin SVD needs at most as many columns as rows, got {B.shape}")
    Q_F, S, R_T = np.linalg.svd(B, full_matrices=False)
    return Q_F, S, R_T.T


def rank_cut(Sigma, tol: float) -> int:
    """Smallest ``p`` with ``Sigma[p] <= tol * Sigma[0]`` (0-based), i.e. the number of kept values."""
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.size == 0 or Sigma[0] <= 0.0:
        return 0
    small = np.flatnonzero(Sigma <= tol * Sigma[0])
    return int(small[0]) if small.size else Sigma.size
