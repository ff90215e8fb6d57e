"""Randomised invariants checked with hypothesis."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kryrom import fem, isvd, krylov, rom, spla
from kryrom.mesh import build_mesh

from conftest import discretize

SPACES = {(dim, level, k): discretize(dim, level, k) for dim, level, k in [(2, 3, 1), (2, 3, 2), (3, 2, 1)]}
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=25, deadline=None)
@given(key=st.sampled_from(sorted(SPACES)), coeffs=st.lists(finite, min_size=3, max_size=3),
       ell=st.integers(2, 7))
def test_gram_matrix_is_hankel(key, coeffs, ell):
    space, M, A = SPACES[key]
    a, b, c = coeffs
    g = lambda *x: a + b * x[0] + c * x[1] * x[0]
    load = fem.assemble_load(space, g)
    if not np.any(np.abs(load) > 1e-12):
        return
    U = krylov.krylov_sequence(spla.factorize(A), M, load, ell)
    K = U.T @ (A @ U)
    assert krylov.hankel_defect(K) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(alpha0=arrays(float, 6, elements=finite), steps=st.integers(2, 30), dt=st.floats(1e-3, 10.0))
def test_bdf2_energy_decays_without_source(alpha0, steps, dt):
    # BDF2 G-stability: |a_n|^2 + |2 a_n - a_{n-1}|^2 (mass norms) never grows
    rng = np.random.default_rng(steps)
    X = rng.standard_normal((6, 6))
    M = X @ X.T + 6 * np.eye(6)
    Y = rng.standard_normal((6, 6))
    A = Y @ Y.T + 0.1 * np.eye(6)
    traj = rom.integrate(M, A, lambda t: np.zeros(6), alpha0, rom.TimeGrid(steps * dt, steps))
    m2 = lambda v: v @ M @ v
    energy = [m2(traj[n]) + m2(2 * traj[n] - traj[n - 1]) for n in range(1, steps + 1)]
    scale = max(energy[0], 1e-300)
    assert all(e2 <= e1 + 1e-12 * scale for e1, e2 in zip(energy, energy[1:]))
    assert m2(traj[1]) <= m2(traj[0]) * (1 + 1e-12) + 1e-300


@settings(max_examples=10, deadline=None)
@given(factor=st.floats(0.1, 100.0), method=st.sampled_from(["adaptive", "isvd"]))
def test_pipeline_is_linear_in_the_source(factor, method):
    # an absolute break threshold depends on the data scale, so check the relative rule here
    space, M, A = SPACES[(2, 3, 1)]
    load = fem.assemble_load(space, lambda x, y: np.sin(3 * x) * y)
    grid = rom.TimeGrid(1.0, 8)
    zero = np.zeros(space.n_dofs)
    opts = dict(method=method, tol=1e-14, tol_mode="relative")
    base = rom.reduced_solve(M, A, rom.exact_source(load), zero, grid, **opts)
    scaled = rom.reduced_solve(M, A, rom.exact_source(factor * load), zero, grid, **opts)
    assert base.diagnostics["r"] == scaled.diagnostics["r"]
    assert np.allclose(scaled.final, factor * base.final, rtol=1e-9, atol=1e-12 * factor * np.abs(base.final).max())


@settings(max_examples=12, deadline=None)
@given(dim=st.sampled_from([2, 3]), level=st.integers(0, 2), degree=st.sampled_from([1, 2]))
def test_mass_partition_of_unity(dim, level, degree):
    space = fem.function_space(build_mesh(dim, level), degree)
    M, A = fem.assemble_operators(space, eliminate=False)
    one = np.ones(space.n_all)
    assert one @ (M @ one) == pytest.approx(1.0, abs=1e-13)
    assert np.abs(A @ one).max() <= 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_isvd_order_independent(seed):
    _, _, A = SPACES[(2, 3, 1)]
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((A.shape[0], 8))
    order = rng.permutation(8)
    s1 = isvd.isvd_ingest(isvd.isvd_init(), U, A).Sigma
    s2 = isvd.isvd_ingest(isvd.isvd_init(), U[:, order], A).Sigma
    oracle = np.sqrt(np.linalg.eigvalsh(U.T @ (A @ U))[::-1])
    assert np.allclose(s1, oracle, rtol=1e-6) and np.allclose(s2, oracle, rtol=1e-6)
