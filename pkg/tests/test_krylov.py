import numpy as np
import pytest
import scipy.sparse as sp

from kryrom import fem, krylov, spla
from kryrom.sources import quartic_problem

from conftest import discretize


def test_zero_seed_gives_zero_columns(quartic_level3):
    _, M, _, b, f = quartic_level3
    assert not np.any(krylov.krylov_sequence(f, M, np.zeros_like(b), 4))


def test_identity_fixed_point():
    I = sp.identity(5, format="csc")
    b = np.arange(1.0, 6.0)
    U = krylov.krylov_sequence(spla.factorize(I), I, b, 4)
    assert np.allclose(U, b[:, None])


def test_sequence_matches_dense_solves(quartic_level3):
    _, M, A, b, f = quartic_level3
    U = krylov.krylov_sequence(f, M, b, 3)
    Ad, Md = A.toarray(), M.toarray()
    u = np.linalg.solve(Ad, b)
    for i in range(3):
        assert np.abs(U[:, i] - u).max() <= 1e-10 * np.abs(u).max()
        u = np.linalg.solve(Ad, Md @ u)


def test_block_seed(quartic_level3):
    _, M, _, b, f = quartic_level3
    B = np.column_stack([b, 2 * b, M @ b])
    U = krylov.krylov_sequence(f, M, B, 2)
    assert U.shape == (b.size, 6)
    assert np.allclose(U[:, 3:], f.solve(M @ U[:, :3]))


def test_gram_extend_small_cases(quartic_level3):
    _, M, A, b, f = quartic_level3
    U = krylov.krylov_sequence(f, M, b, 2)
    K1 = krylov.gram_extend(np.zeros((0, 0)), U, A)
    assert K1.shape == (1, 1) and K1[0, 0] == pytest.approx(U[:, 0] @ A @ U[:, 0])
    K2 = krylov.gram_extend(K1, U, A)
    alpha, beta = U[:, 0] @ A @ U[:, 1], U[:, 1] @ A @ U[:, 1]
    assert np.allclose(K2, [[K1[0, 0], alpha], [alpha, beta]], rtol=1e-14)


def test_gram_extend_matches_full(quartic_level3):
    _, M, A, b, f = quartic_level3
    U = krylov.krylov_sequence(f, M, b, 5)
    K = np.zeros((0, 0))
    for i in range(1, 6):
        K = krylov.gram_extend(K, U[:, :i], A)
    full = U.T @ (A @ U)
    assert np.abs(K - full).max() <= 1e-12 * full[0, 0]
    assert krylov.hankel_defect(full) <= 1e-8


@pytest.mark.parametrize("lam, tol, r", [
    ((1.0, 1e-16), 1e-14, 1),
    ((1.0, 1.0, 1.0, 1.0), 0.0, 4),
    ((3.0, 1.0, -1e-18), 0.0, 2),
    ((4.0, 1.0), 0.3, 1),
])
def test_select_rank_energy(lam, tol, r):
    assert krylov.select_rank_energy(lam, tol) == r


def test_select_rank_energy_prefix_scan(quartic_level3):
    _, M, A, b, f = quartic_level3
    U = krylov.krylov_sequence(f, M, b, 8)
    _, lam = spla.sym_eig(U.T @ A @ U)
    clipped = np.clip(lam, 0, None)
    brute = next(r for r in range(1, 9) if clipped[:r].sum() / clipped.sum() >= 1 - 1e-14)
    assert krylov.select_rank_energy(lam, 1e-14) == brute


def test_select_rank_energy_zero_data():
    with pytest.raises(krylov.ZeroDataError, match="zero data"):
        krylov.select_rank_energy([0.0, 0.0], 1e-10)


def test_adaptive_identity_breaks_at_two():
    I = sp.identity(4, format="csc")
    kb = krylov.adaptive_basis(spla.factorize(I), I, np.array([1.0, 2.0, 0.0, 0.0]), 5, 1e-14)
    assert kb.break_step == 2 and kb.r == 1
    assert np.allclose(kb.Q.T @ kb.Q, 1.0)


def test_adaptive_zero_data(quartic_level3):
    _, M, _, b, f = quartic_level3
    with pytest.raises(krylov.ZeroDataError):
        krylov.adaptive_basis(f, M, np.zeros_like(b), 5, 1e-14)


@pytest.mark.parametrize("level", [4, 5, 6, 7])
def test_adaptive_rank_on_quartic_source(level):
    space, M, A = discretize(2, level)
    b = fem.assemble_load(space, quartic_problem().spatial)
    kb = krylov.adaptive_basis(spla.factorize(A), M, b, 10, 1e-14)
    assert kb.r == 6
    assert np.abs(kb.Q.T @ (A @ kb.Q) - np.eye(6)).max() <= 1e-8
    assert krylov.hankel_defect(kb.K) <= 1e-8
    assert np.all(kb.Lambda[: kb.r] > 0)


def test_relative_mode_keeps_fewer():
    space, M, A = discretize(2, 4)
    b = fem.assemble_load(space, quartic_problem().spatial)
    f = spla.factorize(A)
    rel = krylov.adaptive_basis(f, M, b, 10, 1e-14, tol_mode="relative")
    ab = krylov.adaptive_basis(f, M, b, 10, 1e-14)
    assert rel.r < ab.r
    with pytest.raises(ValueError):
        krylov.adaptive_basis(f, M, b, 10, 1e-14, tol_mode="bogus")


def test_span_preservation(quartic_level3):
    _, M, A, b, f = quartic_level3
    kb = krylov.adaptive_basis(f, M, b, 10, 1e-14)
    for j in range(kb.r):
        u = kb.U[:, j]
        proj = kb.Q @ (kb.Q.T @ (A @ u))
        assert spla.a_norm(A, u - proj) <= 1e-6 * spla.a_norm(A, u)


def test_min_eigenvalue_ratio_decays_geometrically():
    space, M, A = discretize(2, 5)
    b = fem.assemble_load(space, quartic_problem().spatial)
    f = spla.factorize(A)
    U = krylov.krylov_sequence(f, M, b, 8)
    K = U.T @ (A @ U)
    ratios = []
    for r in range(2, 9):
        lam = np.linalg.eigvalsh(K[:r, :r])
        ratios.append(lam[0] / lam[-1])
    assert all(later <= 0.5 * earlier for earlier, later in zip(ratios, ratios[1:]))


def test_krylov_basis_energy_variant(quartic_level3):
    _, M, A, b, f = quartic_level3
    kb = krylov.krylov_basis(f, M, b, 6, 1e-10)
    assert kb.r == krylov.select_rank_energy(kb.Lambda, 1e-10)
    assert np.abs(kb.Q.T @ (A @ kb.Q) - np.eye(kb.r)).max() <= 1e-8


def test_decay_report_edge_cases():
    assert krylov.decay_report([1.0, 1.0]) == []
    lam = 5.0 * 10.0 ** (-3.0 * np.arange(8))
    records = krylov.decay_report(lam)
    checked = [rec for rec in records if rec.bound is not None]
    assert [rec.index for rec in checked] == [3, 5, 7]
    assert all(rec.passed for rec in checked)
    assert records[1].ratio == pytest.approx(1e-3)


def test_decay_bound_formula():
    r, lam1 = 8, 2.0
    rho = np.exp(np.pi**2 / (4 * np.log(8 * 4 / np.pi)))
    assert krylov.hankel_decay_bound(5, r, lam1) == pytest.approx(16 * rho ** (-2) * lam1, rel=1e-14)
    assert krylov.hankel_decay_bound(3, r, lam1) == pytest.approx(16 * lam1, rel=1e-14)


def test_decay_csv(tmp_path):
    path = tmp_path / "decay.csv"
    krylov.write_decay_csv(krylov.decay_report([1.0, 0.1, 0.01]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,eigenvalue,theorem_bound,ratio"
    assert len(lines) == 4


def test_vandermonde_single_dof():
    M = sp.csr_matrix([[0.5]])
    A = sp.csr_matrix([[3.0]])
    assert krylov.vandermonde_check(M, A, np.array([2.0]), 1) <= 1e-14


@pytest.mark.parametrize("level, r", [(2, 3), (3, 5)])
def test_vandermonde_factorization(level, r):
    space, M, A = discretize(2, level)
    b = fem.assemble_load(space, quartic_problem().spatial)
    U = krylov.krylov_sequence(spla.factorize(A), M, b, r)
    K = U.T @ (A @ U)
    assert krylov.vandermonde_check(M, A, b, r) <= 1e-8 * K[0, 0]


def test_vandermonde_cap():
    _, M, A = discretize(2, 3)
    with pytest.raises(fem.DenseCapExceeded):
        krylov.vandermonde_check(M, A, np.ones(M.shape[0]), 2, cap_bytes=1000)


def test_absolute_threshold_depends_on_data_scale():
    # documented trade-off: the absolute rule is tuned to the data scale, the relative one is not
    space, M, A = discretize(2, 4)
    b = fem.assemble_load(space, quartic_problem().spatial)
    f = spla.factorize(A)
    ranks = {s: krylov.adaptive_basis(f, M, s * b, 10, 1e-14).r for s in (1e-3, 1.0, 1e3)}
    assert ranks[1e-3] < ranks[1.0] < ranks[1e3]
    rel = {s: krylov.adaptive_basis(f, M, s * b, 10, 1e-14, tol_mode="relative").r for s in (1e-3, 1.0, 1e3)}
    assert len(set(rel.values())) == 1
