"""Structured simplicial meshes of the unit square and unit cube.

Vertices are stored in lexicographic grid order, ``index = i + n*j (+ n*n*k)``
with ``n = 2**level + 1`` points per axis and the x index running fastest.
Squares are split into two triangles along the (0,0)-(1,1) diagonal, cubes
into six tetrahedra (Kuhn/Freudenthal split).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_LEVEL = {2: 14, 3: 9}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Immutable simplicial partition of ``(0, 1)**dim``.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    level : int
        Refinement exponent; the grid spacing is ``2**-level``.
    vertices : ndarray, shape (n_vertices, dim)
    cells : ndarray, shape (n_cells, dim + 1)
        Vertex indices of each simplex, positively oriented.
    boundary_mask : ndarray of bool, shape (n_vertices,)
    """

    dim: int
    level: int
    vertices: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def spacing(self) -> float:
        """Grid spacing ``2**-level``; in 2D this equals ``h / sqrt(2)``."""
        return 2.0 ** -self.level

    @property
    def h(self) -> float:
        """Maximum cell diameter."""
        return math.sqrt(self.dim) * self.spacing

    def signed_volumes(self) -> np.ndarray:
        x = self.vertices[self.cells]
        edges = x[:, 1:, :] - x[:, :1, :]
        return np.linalg.det(edges) / math.factorial(self.dim)

    def cell_diameters(self) -> np.ndarray:
        x = self.vertices[self.cells]
        diam = np.zeros(self.n_cells)
        for a, b in itertools.combinations(range(self.dim + 1), 2):
            diam = np.maximum(diam, np.linalg.norm(x[:, a] - x[:, b], axis=1))
        return diam


def _kuhn_offsets() -> list[np.ndarray]:
    """Corner offsets of the six Kuhn tetrahedra of the unit cube, positively oriented."""
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=np.int64)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] += 1
            path.append(corner.copy())
        verts = np.array(path)
        if np.linalg.det(verts[1:] - verts[0]) < 0:
            verts[[1, 2]] = verts[[2, 1]]
        tets.append(verts)
    return tets


def build_mesh(dim: int, level: int) -> Mesh:
    """Build the structured mesh of ``(0, 1)**dim`` at refinement ``level``."""
    if dim not in (2, 3):
        raise MeshError(f"dim must be 2 or 3, got {dim!r}")
    if not isinstance(level, (int, np.integer)) or level < 0:
        raise MeshError(f"level must be a nonnegative integer, got {level!r}")
    if level > MAX_LEVEL[dim]:
        raise MeshError(f"level {level} too large for dim {dim} (max {MAX_LEVEL[dim]})")

    n = 2**level
    npts = n + 1
    axis = np.linspace(0.0, 1.0, npts)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    # x fastest: reverse the ij ordering
    vertices = np.stack([g.transpose().ravel() for g in grids], axis=1)

    strides = np.array([npts**d for d in range(dim)], dtype=np.int64)
    base = np.stack(
        np.meshgrid(*([np.arange(n)] * dim), indexing="ij"), axis=-1
    ).reshape(-1, dim)
    base_index = base @ strides

    if dim == 2:
        local = [np.array([[0, 0], [1, 0], [1, 1]]), np.array([[0, 0], [1, 1], [0, 1]])]
    else:
        local = _kuhn_offsets()
    cells = np.concatenate(
        [base_index[:, None] + (offs @ strides)[None, :] for offs in local], axis=0
    )
    # group the simplices of each square/cube together
    cells = cells.reshape(len(local), -1, dim + 1).transpose(1, 0, 2).reshape(-1, dim + 1)

    boundary = np.any((vertices == 0.0) | (vertices == 1.0), axis=1)
    for arr in (vertices, cells, boundary):
        arr.setflags(write=False)
    return Mesh(dim=dim, level=int(level), vertices=vertices, cells=cells, boundary_mask=boundary)


def write_mesh_text(mesh: Mesh, path: str | Path) -> None:
    """Dump a mesh as plain text.

    First line ``dim n_vertices n_cells``, then one vertex per line, then one
    cell (vertex index list) per line.
    """
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        np.savetxt(fh, mesh.cells, fmt="%d")


def read_mesh_text(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open() as fh:
        dim, nv, nc = (int(v) for v in fh.readline().split())
        vertices = np.loadtxt(fh, max_rows=nv, ndmin=2)
        cells = np.loadtxt(fh, max_rows=nc, dtype=np.int64, ndmin=2)
    assert vertices.shape == (nv, dim) and cells.shape == (nc, dim + 1)
    return vertices, cells
