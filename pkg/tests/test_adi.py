import numpy as np
import pytest
import scipy.sparse as sp

from conftest import lyap_res
from lyapkit.adi import AdiState, adi_run, adi_step_complex_pair, adi_step_real
from lyapkit.errors import MaxIterReached
from lyapkit.linops import SparseOperator
from lyapkit.shifts import ReplayShifts


def op_of(A):
    return SparseOperator(sp.csr_matrix(A))


def test_scalar_fixed_point():
    st = AdiState.start(np.array([[1.0]]))
    adi_step_real(st, op_of([[-1.0]]), -1.0)
    np.testing.assert_allclose(st.W, 0.0, atol=1e-15)
    np.testing.assert_allclose(st.Z, [[-np.sqrt(2) / 2]])
    np.testing.assert_allclose(st.Z @ st.Z.T, 0.5)


def test_diagonal_step():
    st = AdiState.start(np.ones((2, 1)))
    adi_step_real(st, op_of(np.diag([-1.0, -2.0])), -1.0)
    np.testing.assert_allclose(st.Z / np.sqrt(2), [[-0.5], [-1 / 3]])
    np.testing.assert_allclose(st.W, [[0.0], [1 / 3]], atol=1e-15)


def test_residual_identity_each_step(lap20):
    A, B = lap20.A, lap20.B
    op = SparseOperator(A)
    st = AdiState.start(B)
    for p in (-0.05, -0.5, -2.0, -6.0, -0.2):
        adi_step_real(st, op, p)
        dense = lyap_res(A, st.Z @ st.Z.T, B)
        assert abs(dense - st.resnorm() / st.nu) <= 1e-8 * dense


def naive_pair(A, W, p):
    n = A.shape[0]
    S1 = np.linalg.solve(A + p * np.eye(n), W)
    W1 = W - 2 * p.real * S1
    S2 = np.linalg.solve(A + np.conj(p) * np.eye(n), W1)
    W2 = W1 - 2 * p.real * S2
    Z = np.sqrt(-2 * p.real) * np.hstack([S1, S2])
    return W2, Z


def test_complex_pair_matches_two_complex_steps():
    A = np.array([[0.0, 1.0], [-1.0, -1.0]])
    p = complex(np.linalg.eigvals(A)[0])
    assert p.imag != 0
    B = np.array([[1.0], [0.0]])
    st = AdiState.start(B)
    adi_step_complex_pair(st, op_of(A), p)
    W2, Zc = naive_pair(A, B, p)
    assert np.isrealobj(st.W) and np.isrealobj(st.Z)
    assert np.linalg.norm(st.W - W2) <= 1e-10 * max(np.linalg.norm(B), 1.0)
    np.testing.assert_allclose(st.Z @ st.Z.T, (Zc @ Zc.conj().T).real, atol=1e-10)
    assert st.j == 2


def test_step_argument_checks():
    st = AdiState.start(np.ones((2, 1)))
    op = op_of(np.diag([-1.0, -2.0]))
    with pytest.raises(ValueError):
        adi_step_real(st, op, 1.0)
    with pytest.raises(ValueError):
        adi_step_complex_pair(st, op, -1.0 + 0j)


def test_run_scalar_one_step():
    Z, rep = adi_run(sp.csr_matrix([[-1.0]]), np.array([[1.0]]), ReplayShifts([-1.0]))
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(Z @ Z.T, 0.5)


def test_run_laplacian30(lap30):
    Z, rep = adi_run(lap30.A, lap30.B, 'hamiltonian', eps=1e-8, j_max=60)
    assert rep.converged and rep.iterations <= 60
    dense = lyap_res(lap30.A, Z @ Z.T, lap30.B)
    assert dense <= 1e-8
    assert dense <= 10 * rep.final_residual and rep.final_residual <= 10 * dense


def test_run_eps_two_takes_no_steps(lap20):
    Z, rep = adi_run(lap20.A, lap20.B, eps=2.0)
    assert rep.iterations == 0 and Z.shape == (400, 0) and rep.converged


def test_run_max_iter(lap20):
    with pytest.raises(MaxIterReached) as ei:
        adi_run(lap20.A, lap20.B, eps=1e-14, j_max=3)
    assert ei.value.status == 'max_iter'
    assert ei.value.Z.shape[1] >= 3
    Z, rep = adi_run(lap20.A, lap20.B, j_max=0)
    assert rep.status == 'max_iter' and Z.shape[1] == 0


@pytest.mark.parametrize('strategy', ['resmin', 'ritz'])
def test_run_other_strategies(lap20, strategy):
    Z, rep = adi_run(lap20.A, lap20.B, strategy, eps=1e-8)
    assert lyap_res(lap20.A, Z @ Z.T, lap20.B) <= 1e-8


def test_run_reuses_factorizations(lap20):
    _, rep = adi_run(lap20.A, lap20.B, ReplayShifts([-0.05, -1.0, -6.0]), eps=1e-6)
    assert rep.n_factorizations == 3
    assert rep.iterations > 3
