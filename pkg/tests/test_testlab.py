import numpy as np
import pytest
import scipy.sparse as sp

from conftest import lyap_res
from lyapkit.errors import MaxSpaceReached, NotSPD, SingularMatrix
from lyapkit.kadi import kadi_run
from lyapkit.testlab import (convdiff_nodes, dense_lyap_residual, gen_convdiff3d,
                             gen_laplacian2d, kpik_solve, kron_lyap_solve,
                             transform_chol_e, transform_diag_e)
from lyapkit.xkrylov import ExtendedKrylovBasis
from lyapkit.linops import SparseOperator


def test_laplacian_h3():
    P = gen_laplacian2d(3)
    A = P.A.toarray()
    assert A.shape == (9, 9)
    np.testing.assert_array_equal(np.diag(A), -4.0)
    np.testing.assert_array_equal(A, A.T)
    np.testing.assert_allclose(P.B, np.ones((9, 1)) / 3.0)


def test_laplacian_spectrum_h6():
    h = 6
    lam = np.sort(np.linalg.eigvalsh(gen_laplacian2d(h).A.toarray()))
    c = 2 * (np.cos(np.arange(1, h + 1) * np.pi / (h + 1)) - 1)
    ref = np.sort((c[:, None] + c[None, :]).ravel())
    np.testing.assert_allclose(lam, ref, atol=1e-10)


def test_laplacian_random_b_is_seeded_and_normalized():
    a = gen_laplacian2d(5, q=2, b_kind='random', seed=3)
    b = gen_laplacian2d(5, q=2, b_kind='random', seed=3)
    np.testing.assert_array_equal(a.B, b.B)
    assert np.linalg.norm(a.B) == pytest.approx(1.0)
    assert a.meta['seed'] == 3
    with pytest.raises(ValueError):
        gen_laplacian2d(1)


def stencil_convdiff(h, zeta):
    """Entrywise assembly: ``-zeta Lap u + e^z u_z - (1 - x^2) y z u_x``, central differences."""
    t = convdiff_nodes(h)
    n = h ** 3
    L = np.zeros((n, n))
    d2 = zeta * (h - 1) ** 2
    c = (h - 1) / 2.0

    def idx(i, j, k):
        return (k * h + j) * h + i   # x fastest, z slowest

    for k in range(h):
        for j in range(h):
            for i in range(h):
                r = idx(i, j, k)
                L[r, r] += 6 * d2
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                                   (0, 0, 1), (0, 0, -1)):
                    ii, jj, kk = i + di, j + dj, k + dk
                    if 0 <= ii < h and 0 <= jj < h and 0 <= kk < h:
                        L[r, idx(ii, jj, kk)] -= d2
                wz = np.exp(t[k])
                if k + 1 < h:
                    L[r, idx(i, j, k + 1)] += wz * c
                if k > 0:
                    L[r, idx(i, j, k - 1)] -= wz * c
                wx = (1 - t[i] ** 2) * t[j] * t[k]
                if i + 1 < h:
                    L[r, idx(i + 1, j, k)] -= wx * c
                if i > 0:
                    L[r, idx(i - 1, j, k)] += wx * c
    return -L


def test_convdiff_matches_stencil():
    A = gen_convdiff3d(4, 1.0).A.toarray()
    S = stencil_convdiff(4, 1.0)
    np.testing.assert_allclose(A, S, rtol=0, atol=1e-13 * np.abs(S).max())


def test_convdiff_stable_and_nonsymmetric():
    P = gen_convdiff3d(5, 1.0)
    A = P.A.toarray()
    assert np.linalg.eigvals(A).real.max() < 0
    assert np.abs(A - A.T).max() > 0
    assert np.linalg.norm(P.B) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        gen_convdiff3d(4, 0.0)


def test_convdiff_small_zeta_stable():
    assert np.linalg.eigvals(gen_convdiff3d(8, 0.05).A.toarray()).real.max() < 0


def test_convdiff_without_convection_is_laplacian():
    h, z = 4, 0.3
    A = gen_convdiff3d(h, z, convection=False).A
    D = z * (h - 1) ** 2 * sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(h, h))
    I = sp.identity(h)
    ref = sp.kron(sp.kron(D, I), I) + sp.kron(sp.kron(I, D), I) + sp.kron(sp.kron(I, I), D)
    np.testing.assert_allclose(A.toarray(), ref.toarray(), atol=1e-12)
    np.testing.assert_array_equal(A.toarray(), A.toarray().T)


def test_kron_examples():
    np.testing.assert_allclose(kron_lyap_solve(np.array([[-1.0]]), np.array([[1.0]])), 0.5)
    X = kron_lyap_solve(np.diag([-1.0, -2.0]), np.ones((2, 1)))
    np.testing.assert_allclose(X, [[1 / 2, 1 / 3], [1 / 3, 1 / 4]], atol=1e-15)


def test_kron_random_stable_n50():
    rng = np.random.default_rng(11)
    M = rng.standard_normal((50, 50))
    A = M - (np.abs(np.linalg.eigvals(M).real).max() + 1) * np.eye(50)
    B = rng.standard_normal((50, 2))
    X = kron_lyap_solve(A, B)
    assert np.linalg.norm(A @ X + X @ A.T + B @ B.T) <= 1e-10 * np.linalg.norm(B @ B.T)


def test_kron_iterative_path(lap20):
    A = lap20.A[:100, :100]
    B = np.random.default_rng(12).standard_normal((100, 1))
    X = kron_lyap_solve(A, B)
    assert lyap_res(A, X, B) <= 1e-10


def test_kron_iterative_nonsymmetric():
    P = gen_convdiff3d(4, 1.0)
    X = kron_lyap_solve(P.A, P.B)
    assert lyap_res(P.A, X, P.B) <= 1e-10


def test_kron_singular():
    with pytest.raises(SingularMatrix):
        kron_lyap_solve(np.diag([1.0, -1.0]), np.ones((2, 1)))


def test_diag_transform_scalings():
    A = gen_laplacian2d(4).A
    B = gen_laplacian2d(4).B
    op, Bt, back = transform_diag_e(A, np.ones(16), B)
    np.testing.assert_allclose(op.to_dense(), A.toarray())
    np.testing.assert_allclose(Bt, B)
    op, Bt, back = transform_diag_e(A, 4 * np.ones(16), B)
    np.testing.assert_allclose(op.to_dense(), A.toarray() / 4, atol=1e-15)
    np.testing.assert_allclose(Bt, B / 2)
    np.testing.assert_allclose(back(np.ones((16, 1))), 0.5)
    with pytest.raises(NotSPD):
        transform_diag_e(A, np.r_[np.ones(15), 0.0], B)


def generalized_problem(n=50, seed=13):
    rng = np.random.default_rng(seed)
    A = sp.diags([np.ones(n - 1), -3 + rng.uniform(-1, 0, n), 0.5 * np.ones(n - 1)],
                 [-1, 0, 1]).tocsr()
    B = rng.standard_normal((n, 1))
    return A, B, rng


def test_diag_transform_roundtrip():
    A, B, rng = generalized_problem()
    d = rng.uniform(0.5, 2.0, 50)
    op, Bt, back = transform_diag_e(A, d, B)
    Z, _ = kadi_run(op, Bt, eps_out=1e-10)
    assert dense_lyap_residual(A, back(Z), B, sp.diags(d)) <= 1e-8


def test_chol_transform_identity_and_2x2():
    A = sp.csr_matrix(np.array([[-3.0, 1.0], [0.0, -2.0]]))
    op, Bt, back = transform_chol_e(A, sp.identity(2, format='csr'), np.ones((2, 1)))
    np.testing.assert_allclose(op.to_dense(), A.toarray(), atol=1e-15)
    E = np.array([[2.0, 1.0], [1.0, 2.0]])
    op, _, _ = transform_chol_e(A, sp.csr_matrix(E), np.ones((2, 1)))
    L = np.linalg.cholesky(E)
    ref = np.linalg.solve(L, np.linalg.solve(L, A.toarray().T).T)
    np.testing.assert_allclose(op.to_dense(), ref, atol=1e-12)


def test_chol_transform_roundtrip():
    A, B, rng = generalized_problem()
    off = rng.uniform(-0.3, 0.3, 49)
    E = sp.diags([off, 4 + rng.uniform(0, 1, 50), off], [-1, 0, 1]).tocsr()
    op, Bt, back = transform_chol_e(A, E, B)
    Z, _ = kadi_run(op, Bt, eps_out=1e-10)
    assert dense_lyap_residual(A, back(Z), B, E) <= 1e-8


def test_chol_transform_rejects_indefinite():
    E = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotSPD):
        transform_chol_e(sp.identity(2, format='csr'), E, np.ones((2, 1)))
    with pytest.raises(NotSPD):
        transform_chol_e(sp.identity(2, format='csr'),
                         sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]])), np.ones((2, 1)))


def test_kpik_full_space_exact():
    A = sp.diags([-1.0, -2.0, -3.0, -4.0]).tocsr()
    B = np.array([[1.0], [0.5], [0.2], [-0.3]])
    Z, rep = kpik_solve(A, B, eps_out=1e-13)
    np.testing.assert_allclose(Z @ Z.T, kron_lyap_solve(A, B), atol=1e-10)


def test_kpik_laplacian20(lap20):
    Z, rep = kpik_solve(lap20.A, lap20.B, eps_out=1e-8)
    assert rep.converged
    dense = dense_lyap_residual(lap20.A, Z, lap20.B)
    assert dense <= 1e-8
    assert abs(dense - rep.final_residual) <= 1e-2 * dense


def test_kpik_galerkin_orthogonality(lap20):
    A, B = lap20.A, lap20.B
    Z, rep = kpik_solve(A, B, eps_out=1e-5)
    basis = ExtendedKrylovBasis(SparseOperator(A), B)
    while basis.m < rep.history[-1].m:
        basis.expand()
    V = basis.V
    Ad = A.toarray()
    X = Z @ Z.T
    R = Ad @ X + X @ Ad.T + B @ B.T
    assert np.linalg.norm(V.T @ R @ V) <= 1e-10


def test_kpik_max_space(lap20):
    with pytest.raises(MaxSpaceReached) as ei:
        kpik_solve(lap20.A, lap20.B, eps_out=1e-14, m_max=2)
    assert ei.value.report.status == 'max_space'
