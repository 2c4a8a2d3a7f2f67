import numpy as np
import pytest
import scipy.sparse as sp

from lyapkit.testlab import gen_convdiff3d, gen_laplacian2d

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def lyap_res(A, X, B):
    A = dense(A)
    return np.linalg.norm(A @ X + X @ A.T + B @ B.T) / np.linalg.norm(B.T @ B)


@pytest.fixture(scope='session')
def lap20():
    return gen_laplacian2d(20)


@pytest.fixture(scope='session')
def lap30():
    return gen_laplacian2d(30)


@pytest.fixture(scope='session')
def cd8():
    return gen_convdiff3d(8, 0.05)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section('acceptance criteria')
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f'AC{k:<2} {"PASS" if ok else "FAIL"}  {detail}')
