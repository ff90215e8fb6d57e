"""Galerkin reduced model, time stepping and the end-to-end solve.

The same BDF2 integrator (started by one backward Euler step) advances the
full finite element system and the reduced one; only the operator type
differs, sparse ``N x N`` or dense ``r x r``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import fem, isvd, krylov, spla
from .mesh import build_mesh
from .sources import Problem, at_time

DT_RULES = ("h", "h^(k+1)/2")
METHODS = ("adaptive", "eig", "isvd")


class PipelineError(RuntimeError):
    """Failure inside one phase of the reduced solve; ``phase`` names it."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause


# --- time grid -----------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N_T: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if self.N_T < 2:
            raise ValueError(f"need at least 2 time steps, got {self.N_T}")

    @property
    def dt(self) -> float:
        return self.T / self.N_T

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.N_T + 1)

    @classmethod
    def from_rule(cls, T: float, spacing: float, degree: int, rule: str = "h") -> "TimeGrid":
        """Uniform grid whose step is at most ``spacing`` (rule ``"h"``) or
        ``spacing**((degree + 1) / 2)`` (rule ``"h^(k+1)/2"``), shortened so it divides ``T``."""
        if rule == "h":
            target = spacing
        elif rule == "h^(k+1)/2":
            target = spacing ** ((degree + 1) / 2)
        else:
            raise ValueError(f"unknown dt rule {rule!r}; choose from {DT_RULES}")
        # guard against ceil(8.000000000001) for dyadic ratios
        steps = math.ceil(T / target - 1e-9)
        return cls(T=T, N_T=max(2, steps))


# --- separable sources -----------------------------------------------------------


def chebyshev_nodes(m: int, T: float) -> np.ndarray:
    if m < 1 or not T > 0:
        raise ValueError(f"need m >= 1 and T > 0, got m={m}, T={T}")
    i = np.arange(1, m + 1)
    return T / 2 + (T / 2) * np.cos((2 * i - 1) * np.pi / (2 * m))


def lagrange_eval(nodes: Sequence[float], i: int, t):
    """Value of the ``i``-th (0-based) Lagrange cardinal polynomial on ``nodes`` at ``t``."""
    nodes = np.asarray(nodes, dtype=float)
    if np.unique(nodes).size != nodes.size:
        raise ValueError("nodes must be distinct")
    others = np.delete(nodes, i)
    t = np.asarray(t, dtype=float)
    val = np.ones_like(t)
    for tj in others:
        val = val * (t - tj) / (nodes[i] - tj)
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class SeparableSource:
    """``f(t, x) ~ sum_i time_factors[i](t) g_i(x)`` with assembled loads of the ``g_i``."""

    time_factors: tuple[Callable, ...]
    space_loads: np.ndarray
    mode: str
    nodes: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.time_factors)

    def weights(self, t: float) -> np.ndarray:
        return np.array([f(t) for f in self.time_factors], dtype=float)

    def rhs(self, t: float) -> np.ndarray:
        return self.space_loads @ self.weights(t)

    def reduced(self, Q: np.ndarray) -> "SeparableSource":
        return SeparableSource(self.time_factors, Q.T @ self.space_loads, self.mode, self.nodes)


def _one(t):
    return 1.0


def exact_source(loads, time_factors: Sequence[Callable] | None = None) -> SeparableSource:
    """Wrap loads whose time dependence is known in closed form (constant by default)."""
    loads = np.asarray(loads, dtype=float)
    if loads.ndim == 1:
        loads = loads[:, None]
    factors = tuple(time_factors) if time_factors is not None else (_one,) * loads.shape[1]
    if len(factors) != loads.shape[1]:
        raise ValueError(f"{len(factors)} time factors for {loads.shape[1]} loads")
    return SeparableSource(factors, loads, "exact")


def build_source(space: fem.FemSpace, problem: Problem, mode: str = "chebyshev", m: int = 8,
                 T: float = 1.0) -> SeparableSource:
    """Assemble a separable representation of ``problem.f``.

    A time-independent problem always yields the exact one-term split.
    """
    if problem.time_independent:
        return exact_source(fem.assemble_load(space, problem.spatial))
    if mode != "chebyshev":
        raise ValueError("a time-dependent source needs mode='chebyshev' or a caller-built exact split")
    nodes = chebyshev_nodes(m, T)
    loads = fem.assemble_loads(space, [at_time(problem.f, tn) for tn in nodes])
    factors = tuple(_cardinal(nodes, i) for i in range(m))
    return SeparableSource(factors, loads, "chebyshev", nodes)


def _cardinal(nodes: np.ndarray, i: int) -> Callable:
    return lambda t: lagrange_eval(nodes, i, t)


# --- reduction -----------------------------------------------------------------


@dataclass(frozen=True)
class RomSystem:
    M_r: np.ndarray
    A_r: np.ndarray
    loads: np.ndarray
    Q: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.Q.shape[1]


def reduce(M, A, Q: np.ndarray, loads=None) -> RomSystem:
    """Project mass, stiffness and the given load columns onto ``range(Q)``."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    if Q.shape[0] != M.shape[0] or M.shape != A.shape:
        raise ValueError(f"dimension mismatch: Q {Q.shape}, M {M.shape}, A {A.shape}")
    M_r = Q.T @ (M @ Q)
    A_r = Q.T @ (A @ Q)
    if loads is None:
        loads = np.zeros((Q.shape[0], 0))
    loads = np.asarray(loads, dtype=float)
    if loads.ndim == 1:
        loads = loads[:, None]
    if loads.shape[0] != Q.shape[0]:
        raise ValueError(f"loads have {loads.shape[0]} rows, expected {Q.shape[0]}")
    return RomSystem(
        M_r=0.5 * (M_r + M_r.T), A_r=0.5 * (A_r + A_r.T), loads=Q.T @ loads, Q=Q
    )


def lift(Q: np.ndarray, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[0] != Q.shape[1]:
        raise ValueError(f"alpha has {alpha.shape[0]} entries, basis has {Q.shape[1]} columns")
    return Q @ alpha


def rom_initial(M_r: np.ndarray, Q: np.ndarray, b0) -> np.ndarray:
    """Coefficients of the L2 projection of the initial value onto ``range(Q)``.

    ``b0`` holds the moments ``(u0, phi_i)`` of the initial value.
    """
    rhs = Q.T @ np.asarray(b0, dtype=float)
    if not np.any(rhs):
        return np.zeros(Q.shape[1])
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(M_r), rhs)


def fom_initial(M, b0, factor: spla.SpdFactorization | None = None) -> np.ndarray:
    b0 = np.asarray(b0, dtype=float)
    if not np.any(b0):
        return np.zeros(M.shape[0])
    return (factor or spla.factorize(M)).solve(b0)


# --- time integration ----------------------------------------------------------


def _step_solver(mat) -> Callable[[np.ndarray], np.ndarray]:
    if sp.issparse(mat):
        return spla.factorize(mat).solve
    try:
        cho = scipy.linalg.cho_factor(mat)
    except np.linalg.LinAlgError as exc:
        raise spla.NotSPDError(f"step matrix is not SPD: {exc}") from exc
    return lambda v: scipy.linalg.cho_solve(cho, v)


def integrate(Msys, Asys, rhs: Callable[[float], np.ndarray], alpha0, grid: TimeGrid,
              keep: str = "all") -> np.ndarray:
    """Backward Euler for the first step, BDF2 afterwards.

    ``rhs(t)`` returns the load at time ``t``. With ``keep="all"`` the result
    has shape ``(N_T + 1, n)`` (row 0 is ``alpha0``); with ``keep="final"``
    only the last state is returned.
    """
    if keep not in ("all", "final"):
        raise ValueError(f"keep must be 'all' or 'final', got {keep!r}")
    dt = grid.dt
    alpha0 = np.asarray(alpha0, dtype=float)
    n = alpha0.shape[0]
    if Msys.shape != (n, n) or Asys.shape != (n, n):
        raise ValueError(f"operators {Msys.shape}, {Asys.shape} do not match state size {n}")
    euler = _step_solver(Msys / dt + Asys)
    bdf2 = _step_solver(1.5 / dt * Msys + Asys)

    traj = np.empty((grid.N_T + 1, n)) if keep == "all" else None
    prev2 = alpha0
    prev = euler(Msys @ alpha0 / dt + rhs(dt))
    if traj is not None:
        traj[0], traj[1] = alpha0, prev
    for step in range(2, grid.N_T + 1):
        nxt = bdf2(Msys @ (2.0 * prev - 0.5 * prev2) / dt + rhs(step * dt))
        prev2, prev = prev, nxt
        if traj is not None:
            traj[step] = nxt
    return traj if traj is not None else prev


def write_trajectory_csv(path: str | Path, grid: TimeGrid, Q: np.ndarray, traj: np.ndarray, M) -> None:
    """CSV rows ``n, t_n, L2 norm of the lifted state``."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "t", "l2_norm"])
        for k, (t, alpha) in enumerate(zip(grid.times, traj)):
            writer.writerow([k, repr(float(t)), repr(fem.l2_norm(M, lift(Q, alpha)))])


# --- basis construction --------------------------------------------------------


@dataclass(frozen=True)
class BasisInfo:
    Q: np.ndarray
    method: str
    seed_rank: int
    peak_dim: int
    krylov: krylov.KrylovBasis | None = None
    svd: isvd.IsvdState | None = None


def _nonzero_columns(B: np.ndarray) -> np.ndarray:
    return B[:, np.any(B != 0.0, axis=0)]


def build_basis(factor: spla.SpdFactorization, M, B: np.ndarray, method: str, ell: int,
                tol: float, tol_svd: float = 1e-10, tol_mode: str = "absolute") -> BasisInfo:
    """Reduced basis for the data columns ``B`` (initial moments and source loads).

    ``adaptive`` grows a single-seed sequence until its Gram matrix turns
    singular; ``eig`` compresses the full block sequence through the
    eigenvalues of its Gram matrix; ``isvd`` first compresses ``B`` by a thin
    SVD and then feeds each block to the incremental core SVD, continuing
    the sequence from the compressed directions.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    N = M.shape[0]
    B = _nonzero_columns(np.asarray(B, dtype=float).reshape(N, -1))
    if B.shape[1] == 0:
        return BasisInfo(Q=np.zeros((N, 0)), method=method, seed_rank=0, peak_dim=0)

    if method == "adaptive":
        if B.shape[1] != 1:
            raise ValueError("the adaptive method needs a single data column; use 'isvd' or 'eig'")
        kb = krylov.adaptive_basis(factor, M, B[:, 0], ell, tol, tol_mode=tol_mode)
        return BasisInfo(Q=kb.Q, method=method, seed_rank=1, peak_dim=kb.ell, krylov=kb)

    if method == "eig":
        kb = krylov.krylov_basis(factor, M, B, ell, tol)
        return BasisInfo(Q=kb.Q, method=method, seed_rank=B.shape[1], peak_dim=kb.U.shape[1], krylov=kb)

    Q_F, S_F, _ = isvd.thin_svd(B)
    p = isvd.rank_cut(S_F, tol_svd)
    A = factor.matrix
    state = isvd.isvd_init(tol_svd)
    block = factor.solve(Q_F[:, :p])
    peak = p
    for i in range(ell):
        if i:
            block = factor.solve(M @ block)
        compressed = _compress_block(block, A, tol_svd)
        if compressed.shape[1] == 0:
            break
        state = isvd.isvd_ingest(state, compressed, A)
        block = compressed
        peak = max(peak, state.rank)
    Q = krylov.a_orthonormalize(state.Q, A)
    return BasisInfo(Q=Q, method=method, seed_rank=p, peak_dim=peak, svd=state)


def _compress_block(block: np.ndarray, A, tol: float) -> np.ndarray:
    """Directions ``Q_b diag(S_b)`` of the A-weighted core SVD of one block, truncated at ``tol``.

    They span the same space as ``block`` up to the truncation and carry
    its singular values, so ingesting them instead of the raw columns
    leaves the accumulated singular values unchanged.
    """
    if block.shape[1] == 0:
        return block
    G = block.T @ (A @ block)
    lam, V = np.linalg.eigh(0.5 * (G + G.T))
    lam, V = lam[::-1], V[:, ::-1]
    if lam[0] <= 0.0:
        return block[:, :0]
    sig = np.sqrt(np.clip(lam, 0.0, None))
    keep = sig > tol * sig[0]
    # block V = Q_b diag(sig); the eigenvector rotation keeps column norms
    return block @ V[:, keep]


# --- full and reduced solves ---------------------------------------------------


@dataclass(frozen=True)
class RomConfig:
    """Everything needed to run one reduced solve on a structured mesh."""

    problem: Problem
    level: int
    degree: int = 1
    T: float = 1.0
    dt_rule: str = "h"
    method: str = "adaptive"
    ell: int = 10
    tol: float = 1e-14
    tol_svd: float = 1e-10
    m: int = 8
    tol_mode: str = "absolute"

    @property
    def dim(self) -> int:
        return self.problem.dim


@dataclass
class Discretization:
    space: fem.FemSpace
    M: sp.csr_matrix
    A: sp.csr_matrix
    source: SeparableSource
    b0: np.ndarray
    grid: TimeGrid
    seconds: float


def discretize(cfg: RomConfig) -> Discretization:
    start = time.perf_counter()
    mesh = build_mesh(cfg.dim, cfg.level)
    space = fem.function_space(mesh, cfg.degree)
    if space.n_dofs == 0:
        raise ValueError(f"level {cfg.level} mesh has no interior degrees of freedom")
    M, A = fem.assemble_operators(space)
    source = build_source(space, cfg.problem, "chebyshev", cfg.m, cfg.T)
    if cfg.problem.u0 is None:
        b0 = np.zeros(space.n_dofs)
    else:
        b0 = fem.assemble_load(space, cfg.problem.u0)
    grid = TimeGrid.from_rule(cfg.T, mesh.spacing, cfg.degree, cfg.dt_rule)
    return Discretization(space, M, A, source, b0, grid, time.perf_counter() - start)


@dataclass
class RomResult:
    Q: np.ndarray
    trajectory: np.ndarray
    final: np.ndarray
    grid: TimeGrid
    diagnostics: dict


def reduced_solve(M, A, source: SeparableSource, b0, grid: TimeGrid, *, method: str = "adaptive",
                  ell: int = 10, tol: float = 1e-14, tol_svd: float = 1e-10,
                  tol_mode: str = "absolute") -> RomResult:
    """Basis, projection, time stepping and lift of the final state.

    Every phase is timed; failures are re-raised as :class:`PipelineError`.
    """
    timings = {}

    def phase(name, fn):
        start = time.perf_counter()
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - relabelled and re-raised
            raise PipelineError(name, exc) from exc
        finally:
            timings[name] = time.perf_counter() - start

    b0 = np.asarray(b0, dtype=float)
    B = np.column_stack([b0, source.space_loads])
    factor = phase("factorize", lambda: spla.factorize(A))
    info = phase("basis", lambda: build_basis(factor, M, B, method, ell, tol, tol_svd, tol_mode))
    Q = info.Q
    system = phase("reduce", lambda: reduce(M, A, Q, source.space_loads))

    if system.r == 0:
        traj = np.zeros((grid.N_T + 1, 0))
        timings["integrate"] = 0.0
    else:
        reduced = SeparableSource(source.time_factors, system.loads, source.mode, source.nodes)
        alpha0 = phase("initial", lambda: rom_initial(system.M_r, Q, b0))
        traj = phase("integrate", lambda: integrate(system.M_r, system.A_r, reduced.rhs, alpha0, grid))
    final = phase("lift", lambda: lift(Q, traj[-1]))
    diagnostics = {
        "r": system.r,
        "method": method,
        "seed_rank": info.seed_rank,
        "peak_dim": info.peak_dim,
        "timings": timings,
        "seconds": sum(timings.values()),
    }
    if info.krylov is not None:
        diagnostics["break_step"] = info.krylov.break_step
    return RomResult(Q=Q, trajectory=traj, final=final, grid=grid, diagnostics=diagnostics)


def solve_fom(M, A, source: SeparableSource, b0, grid: TimeGrid, keep: str = "all") -> tuple[np.ndarray, float]:
    """Full finite element solve; returns the trajectory (or final state) and the wall time.

    The time covers the step-matrix factorizations and the time loop only.
    """
    start = time.perf_counter()
    alpha0 = fom_initial(M, b0)
    out = integrate(M, A, source.rhs, alpha0, grid, keep=keep)
    return out, time.perf_counter() - start


def solve_rom_pipeline(cfg: RomConfig) -> tuple[np.ndarray, np.ndarray, dict]:
    """Discretize, build the reduced basis, integrate; returns ``(Q, trajectory, diagnostics)``."""
    try:
        disc = discretize(cfg)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("discretize", exc) from exc
    res = reduced_solve(disc.M, disc.A, disc.source, disc.b0, disc.grid, method=cfg.method,
                        ell=cfg.ell, tol=cfg.tol, tol_svd=cfg.tol_svd, tol_mode=cfg.tol_mode)
    res.diagnostics["timings"]["discretize"] = disc.seconds
    res.diagnostics["n_dofs"] = disc.space.n_dofs
    res.diagnostics["N_T"] = disc.grid.N_T
    return res.Q, res.trajectory, res.diagnostics
