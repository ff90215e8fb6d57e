import numpy as np
import pytest

from kryrom.sources import at_time, builtin_problem, manufactured_problem, quartic_problem


def test_quartic_values():
    p = quartic_problem()
    assert p.time_independent and not p.has_exact
    assert p.f(0.3, 0.0, 0.0) == pytest.approx(1e4 * 0.1 * 0.2 * 0.3 * 0.4)
    assert p.spatial(0.1, 0.7) == 0.0


@pytest.mark.parametrize("dim", [2, 3])
def test_manufactured_residual_by_finite_differences(dim):
    p = manufactured_problem(dim)
    rng = np.random.default_rng(3)
    pt = rng.uniform(0.2, 0.8, size=dim)
    t, eps = 0.6, 1e-4
    u = lambda tt, x: p.u_exact(tt, *x)
    ut = (u(t + eps, pt) - u(t - eps, pt)) / (2 * eps)
    lap = 0.0
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = eps
        lap += (u(t, pt + e) - 2 * u(t, pt) + u(t, pt - e)) / eps**2
    assert p.f(t, *pt) == pytest.approx(ut - lap, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("dim", [2, 3])
def test_manufactured_boundary_and_initial_values(dim):
    p = manufactured_problem(dim)
    pts = np.random.default_rng(0).uniform(size=(10, dim))
    for axis in range(dim):
        for side in (0.0, 1.0):
            q = pts.copy()
            q[:, axis] = side
            assert np.allclose(p.u_exact(0.7, *q.T), 0.0, atol=1e-15)
    assert np.allclose(p.u_exact(0.0, *pts.T), 0.0)


def test_gradient_matches_differences():
    p = manufactured_problem(2)
    x, y, eps = 0.3, 0.6, 1e-6
    gx, gy = p.grad_exact(0.9, x, y)
    assert gx == pytest.approx((p.u_exact(0.9, x + eps, y) - p.u_exact(0.9, x - eps, y)) / (2 * eps), rel=1e-6)
    assert gy == pytest.approx((p.u_exact(0.9, x, y + eps) - p.u_exact(0.9, x, y - eps)) / (2 * eps), rel=1e-6)


def test_builtin_lookup():
    assert builtin_problem("manufactured", 3).dim == 3
    with pytest.raises(ValueError):
        builtin_problem("quartic", 3)
    with pytest.raises(ValueError):
        builtin_problem("nope", 2)


def test_at_time_freezes_time():
    g = at_time(lambda t, x, y: t * x + y, 2.0)
    assert g(np.array([1.0]), np.array([3.0]))[0] == 5.0
