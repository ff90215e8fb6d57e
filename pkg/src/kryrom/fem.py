"""Continuous Lagrange P1/P2 finite elements with homogeneous Dirichlet conditions.

Operators are assembled for the bilinear forms ``(u, v)`` (mass) and
``(grad u, grad v)`` (stiffness). Boundary degrees of freedom are eliminated,
so every returned matrix and vector is indexed by the free (interior) DOFs.

Spatial callables take one array per coordinate, e.g. ``g(x, y)`` in 2D.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import simplex_rule

# quadrature degree for loads and error norms against non-polynomial data
DATA_DEGREE = {2: 6, 3: 5}
DENSE_CAP_BYTES = 512 * 2**20


class DenseCapExceeded(MemoryError):
    pass


@dataclass(frozen=True)
class FemSpace:
    """Lagrange space of degree ``degree`` on ``mesh`` with Dirichlet DOFs removed."""

    mesh: Mesh
    degree: int
    all_coords: np.ndarray = field(repr=False)
    cell_dofs: np.ndarray = field(repr=False)
    free: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return int(self.free.size)

    @property
    def n_all(self) -> int:
        return self.all_coords.shape[0]

    @property
    def dof_coords(self) -> np.ndarray:
        return self.all_coords[self.free]

    def expand(self, coeffs: np.ndarray) -> np.ndarray:
        """Embed free-DOF coefficients into the full DOF vector (zeros on the boundary)."""
        coeffs = np.asarray(coeffs)
        full = np.zeros((self.n_all,) + coeffs.shape[1:], dtype=coeffs.dtype)
        full[self.free] = coeffs
        return full


def _edges(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique edges and the per-cell local-to-global edge map."""
    nloc = cells.shape[1]
    pairs = list(itertools.combinations(range(nloc), 2))
    local = np.stack([np.sort(cells[:, list(p)], axis=1) for p in pairs], axis=1)
    flat = local.reshape(-1, 2)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    return edges, inverse.reshape(cells.shape[0], len(pairs))


def function_space(mesh: Mesh, degree: int) -> FemSpace:
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree!r}")
    coords = mesh.vertices
    cell_dofs = mesh.cells
    if degree == 2:
        edges, cell_edges = _edges(mesh.cells)
        midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
        coords = np.vstack([mesh.vertices, midpoints])
        cell_dofs = np.hstack([mesh.cells, mesh.n_vertices + cell_edges])
    # dyadic coordinates are exact, so the boundary test is exact too
    on_boundary = np.any((coords == 0.0) | (coords == 1.0), axis=1)
    free = np.flatnonzero(~on_boundary)
    for arr in (coords, cell_dofs, free):
        arr.setflags(write=False)
    return FemSpace(mesh=mesh, degree=degree, all_coords=coords, cell_dofs=cell_dofs, free=free)


def basis_values(degree: int, bary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference basis values and derivatives with respect to barycentric coordinates.

    Returns ``phi`` of shape (npts, nloc) and ``dphi`` of shape (npts, nloc, dim + 1).
    """
    npts, nb = bary.shape
    if degree == 1:
        return bary.copy(), np.broadcast_to(np.eye(nb), (npts, nb, nb)).copy()
    pairs = list(itertools.combinations(range(nb), 2))
    nloc = nb + len(pairs)
    phi = np.empty((npts, nloc))
    dphi = np.zeros((npts, nloc, nb))
    for i in range(nb):
        phi[:, i] = bary[:, i] * (2.0 * bary[:, i] - 1.0)
        dphi[:, i, i] = 4.0 * bary[:, i] - 1.0
    for e, (i, j) in enumerate(pairs):
        phi[:, nb + e] = 4.0 * bary[:, i] * bary[:, j]
        dphi[:, nb + e, i] = 4.0 * bary[:, j]
        dphi[:, nb + e, j] = 4.0 * bary[:, i]
    return phi, dphi


def _geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Cell volumes and barycentric gradients, shape (ncells, dim + 1, dim)."""
    x = mesh.vertices[mesh.cells]
    jac = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))
    vol = np.abs(np.linalg.det(jac)) / math.factorial(mesh.dim)
    inv = np.linalg.inv(jac)
    grad = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
    return vol, grad


def _quad_data(space: FemSpace, degree: int, gradients: bool = True):
    bary, w = simplex_rule(space.dim, degree)
    phi, dphi_bary = basis_values(space.degree, bary)
    vol, grad_bary = _geometry(space.mesh)
    # physical gradients: (ncells, npts, nloc, dim)
    dphi = np.einsum("qlb,cbd->cqld", dphi_bary, grad_bary) if gradients else None
    xq = np.einsum("qb,cbd->cqd", bary, space.mesh.vertices[space.mesh.cells])
    return w, phi, dphi, vol, xq


def _scatter(space: FemSpace, local: np.ndarray) -> sp.csr_matrix:
    dofs = space.cell_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_all, space.n_all)).tocsr()
    mat = 0.5 * (mat + mat.T)
    return mat.tocsr()


def assemble_operators(space: FemSpace, eliminate: bool = True) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Mass and stiffness matrices ``(M, A)``.

    With ``eliminate=False`` the full matrices over all DOFs (boundary
    included) are returned.
    """
    w, phi, dphi, vol, _ = _quad_data(space, 2 * space.degree)
    mass_ref = np.einsum("q,qi,qj->ij", w, phi, phi)
    mass_local = vol[:, None, None] * mass_ref[None]
    stiff_local = vol[:, None, None] * np.einsum("q,cqid,cqjd->cij", w, dphi, dphi)
    M = _scatter(space, mass_local)
    A = _scatter(space, stiff_local)
    if eliminate:
        idx = space.free
        M = M[idx][:, idx].tocsr()
        A = A[idx][:, idx].tocsr()
    M.sort_indices()
    A.sort_indices()
    return M, A


def _evaluate(g: Callable, xq: np.ndarray) -> np.ndarray:
    pts = xq.reshape(-1, xq.shape[-1])
    vals = np.asarray(g(*pts.T), dtype=float)
    return np.broadcast_to(vals, pts.shape[:1]).reshape(xq.shape[:-1])


def assemble_load(space: FemSpace, g: Callable, degree: int | None = None) -> np.ndarray:
    """Load vector ``b_i = (g, phi_i)`` over the free DOFs."""
    degree = DATA_DEGREE[space.dim] if degree is None else degree
    w, phi, _, vol, xq = _quad_data(space, degree, gradients=False)
    gq = _evaluate(g, xq)
    local = vol[:, None] * np.einsum("q,cq,qi->ci", w, gq, phi)
    full = np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.n_all)
    return full[space.free]


def assemble_loads(space: FemSpace, gs: Sequence[Callable], degree: int | None = None) -> np.ndarray:
    """Column-stacked load vectors for several spatial functions."""
    if not gs:
        return np.zeros((space.n_dofs, 0))
    return np.column_stack([assemble_load(space, g, degree) for g in gs])


def interpolate(space: FemSpace, u: Callable) -> np.ndarray:
    """Nodal interpolant of ``u`` at the free DOFs."""
    pts = space.dof_coords
    return np.broadcast_to(np.asarray(u(*pts.T), dtype=float), pts.shape[:1]).copy()


def error_norms(
    space: FemSpace,
    coeffs: np.ndarray,
    u_exact: Callable,
    grad_u_exact: Callable,
    degree: int | None = None,
) -> tuple[float, float]:
    """L2 error and H1-seminorm error of the FE function with ``coeffs`` against ``u_exact``.

    ``grad_u_exact`` returns a sequence of ``dim`` component arrays.
    """
    degree = DATA_DEGREE[space.dim] if degree is None else degree
    w, phi, dphi, vol, xq = _quad_data(space, degree)
    c = space.expand(np.asarray(coeffs, dtype=float))[space.cell_dofs]
    uh = np.einsum("qi,ci->cq", phi, c)
    guh = np.einsum("cqid,ci->cqd", dphi, c)
    pts = xq.reshape(-1, space.dim)
    ue = _evaluate(u_exact, xq)
    grads = grad_u_exact(*pts.T)
    ge = np.stack(
        [np.broadcast_to(np.asarray(gc, dtype=float), pts.shape[:1]) for gc in grads], axis=-1
    ).reshape(guh.shape)
    l2 = np.einsum("c,q,cq->", vol, w, (ue - uh) ** 2)
    h1 = np.einsum("c,q,cqd->", vol, w, (ge - guh) ** 2)
    return math.sqrt(l2), math.sqrt(h1)


def l2_norm(M: sp.spmatrix, coeffs: np.ndarray) -> float:
    """L2 norm of the FE function with free-DOF coefficients ``coeffs``."""
    return math.sqrt(max(float(coeffs @ (M @ coeffs)), 0.0))


def to_dense(mat, cap_bytes: int = DENSE_CAP_BYTES) -> np.ndarray:
    n = mat.shape[0]
    if 8 * n * n > cap_bytes:
        raise DenseCapExceeded(f"dense {n}x{n} matrix exceeds cap of {cap_bytes} bytes")
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)


def discrete_eigenpairs(M, A, count: int, cap_bytes: int = DENSE_CAP_BYTES) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``count`` generalized eigenpairs of ``A phi = lam M phi``.

    Eigenvalues ascend; eigenvectors (columns) are A-orthonormal.
    """
    n = M.shape[0]
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")
    Ad = to_dense(A, cap_bytes // 2)
    Md = to_dense(M, cap_bytes // 2)
    lam, vec = scipy.linalg.eigh(Ad, Md, subset_by_index=[0, count - 1])
    vec = vec / np.sqrt(lam)[None, :]
    return lam, vec
