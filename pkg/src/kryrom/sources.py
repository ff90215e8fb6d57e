"""Problem data for the heat equation ``u_t - Laplace(u) = f`` with ``u = 0`` on the boundary.

Every problem exposes ``f(t, *x)``, the initial value ``u0(*x)`` and,
when known, the exact solution with its spatial gradient. The
manufactured problem derives ``f = u_t - Laplace(u)`` symbolically, so no
hand-written derivatives are involved.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy


@dataclass(frozen=True)
class Problem:
    """Data of one heat-equation problem on the unit square or cube.

    ``spatial`` is set when ``f`` does not depend on time; ``f(t, *x)`` is
    then ``spatial(*x)``.
    """

    name: str
    dim: int
    f: Callable
    u0: Callable | None = None
    spatial: Callable | None = None
    u_exact: Callable | None = None
    grad_exact: Callable | None = None

    @property
    def time_independent(self) -> bool:
        return self.spatial is not None

    @property
    def has_exact(self) -> bool:
        return self.u_exact is not None


def _quartic(x, y):
    return 1e4 * (x - 0.1) * (y - 0.2) * (x - 0.3) * (y - 0.4)


def quartic_problem() -> Problem:
    """Time-independent polynomial source with zero initial value (2D only)."""
    return Problem(name="quartic", dim=2, f=lambda t, x, y: _quartic(x, y), spatial=_quartic)


@lru_cache(maxsize=None)
def manufactured_problem(dim: int) -> Problem:
    """Smooth solution ``sin(t) cos(t x) x sin(x - 1) sin(y) (y - 1) [sin(z) (z - 1)]``."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim!r}")
    t = sympy.Symbol("t")
    xs = sympy.symbols("x y z")[:dim]
    x, y = xs[0], xs[1]
    u = sympy.sin(t) * sympy.cos(t * x) * x * sympy.sin(x - 1) * sympy.sin(y) * (y - 1)
    if dim == 3:
        z = xs[2]
        u = u * sympy.sin(z) * (z - 1)
    f = sympy.diff(u, t) - sum(sympy.diff(u, xi, 2) for xi in xs)

    args = (t, *xs)
    f_num = sympy.lambdify(args, f, "numpy")
    u_num = sympy.lambdify(args, u, "numpy")
    grad_num = [sympy.lambdify(args, sympy.diff(u, xi), "numpy") for xi in xs]

    return Problem(
        name=f"manufactured{dim}d",
        dim=dim,
        f=f_num,
        u_exact=u_num,
        grad_exact=lambda tt, *pts: [g(tt, *pts) for g in grad_num],
    )


BUILTIN = {
    "quartic": lambda dim: quartic_problem(),
    "manufactured": manufactured_problem,
}


def builtin_problem(name: str, dim: int) -> Problem:
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown source {name!r}; choose from {sorted(BUILTIN)}") from None
    problem = factory(dim)
    if problem.dim != dim:
        raise ValueError(f"source {name!r} is only defined in {problem.dim}D")
    return problem


def at_time(fn: Callable, t: float) -> Callable:
    """Freeze the time argument of ``fn(t, *x)``."""
    return lambda *x: np.asarray(fn(t, *x), dtype=float)
