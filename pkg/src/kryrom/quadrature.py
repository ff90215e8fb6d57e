"""Quadrature on the reference simplex by collapsed (conical product) Gauss-Jacobi rules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule exact for polynomials of total degree ``degree`` on a ``dim``-simplex.

    Returns
    -------
    bary : ndarray, shape (n_points, dim + 1)
        Barycentric coordinates of the points.
    weights : ndarray, shape (n_points,)
        Positive weights summing to 1, so that ``|T| * sum(w * g(x))``
        approximates the integral of ``g`` over a simplex ``T``.
    """
    n = max(1, (degree + 2) // 2)
    nodes, weights = [], []
    for axis in range(dim):
        # x_axis carries the weight (1 - u)^(dim - 1 - axis) from the collapse
        t, w = roots_jacobi(n, dim - 1 - axis, 0.0)
        nodes.append((1.0 + t) / 2.0)
        weights.append(w)
    mesh_u = np.meshgrid(*nodes, indexing="ij")
    mesh_w = np.meshgrid(*weights, indexing="ij")
    u = [m.ravel() for m in mesh_u]
    w = np.prod([m.ravel() for m in mesh_w], axis=0)

    coords = np.zeros((u[0].size, dim))
    scale = np.ones(u[0].size)
    for axis in range(dim):
        coords[:, axis] = u[axis] * scale
        scale = scale * (1.0 - u[axis])
    bary = np.column_stack([1.0 - coords.sum(axis=1), coords])
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w
